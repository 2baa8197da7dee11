import logging
from pathlib import Path
from typing import Optional

import click

from iae.cli.common import ConfigSource, common_options
from iae.core.run import run_directory
from iae.crud.dataset import DatasetCRUD
from iae.schemas.run import RunConfig
from iae.schemas.synthetic import GenConfig
from iae.services import synthetic

logger = logging.getLogger(__name__)


@click.command("generate")
@common_options
@click.option("--n-samples", type=int, default=None)
@click.option("--n-treatments", type=int, default=None)
@click.option("--selection-bias", type=float, default=None)
@click.option("--noise", type=float, default=None)
@click.option("--form", type=click.Choice(["saturating", "linear"]), default=None)
def generate_command(
    seed: Optional[int],
    out: Optional[Path],
    config_path: Optional[Path],
    n_samples: Optional[int],
    n_treatments: Optional[int],
    selection_bias: Optional[float],
    noise: Optional[float],
    form: Optional[str],
):
    """Draw a synthetic dataset with known potential outcomes."""
    source = ConfigSource("generate", config_path, seed)
    gen = source.section(
        "generate",
        GenConfig,
        {
            "n_samples": n_samples,
            "n_treatments": n_treatments,
            "selection_bias": selection_bias,
            "noise": noise,
            "form": form,
        },
    )
    config = RunConfig(command="generate", seed=source.seed, out=str(source.out(out)), generate=gen)

    with run_directory(config) as run:
        dataset, _ = synthetic.generate(gen)
        csv_path, side = DatasetCRUD.save(dataset, run.artifact("dataset.csv"))
        run.artifact(side.name)
    click.echo(f"wrote {len(dataset)} samples to {csv_path}")
