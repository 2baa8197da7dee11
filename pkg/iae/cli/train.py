import logging
from pathlib import Path
from typing import Optional

import click

from iae.cli.common import ConfigSource, common_options, require_file
from iae.core.run import run_directory
from iae.crud.dataset import DatasetCRUD
from iae.crud.report import ReportCRUD
from iae.models.network import sidecar_path
from iae.schemas.model import ArchitectureConfig
from iae.schemas.run import RunConfig
from iae.schemas.train import TrainConfig
from iae.services import trainer

logger = logging.getLogger(__name__)


@click.command("train")
@common_options
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path), default=None)
@click.option("--beta", type=float, default=None, help="IPM weight.")
@click.option("--lambda", "lam", type=float, default=None, help="l2 weight on hypothesis weights.")
@click.option("--epochs", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--ipm-method", type=click.Choice(["sinkhorn", "exact-1d"]), default=None)
def train_command(
    seed: Optional[int],
    out: Optional[Path],
    config_path: Optional[Path],
    dataset_path: Optional[Path],
    beta: Optional[float],
    lam: Optional[float],
    epochs: Optional[int],
    batch_size: Optional[int],
    lr: Optional[float],
    ipm_method: Optional[str],
):
    """Fit the representation and hypothesis networks on a dataset."""
    source = ConfigSource("train", config_path, seed)
    dataset_path = require_file(source.input_path("dataset", dataset_path), "dataset")
    architecture = source.section("model", ArchitectureConfig, {})
    train_cfg = source.section(
        "train",
        TrainConfig,
        {
            "beta": beta,
            "lambda": lam,
            "max_epochs": epochs,
            "batch_size": batch_size,
            "adam": {"lr": lr},
            "ipm": {"method": ipm_method},
        },
    )
    config = RunConfig(
        command="train",
        seed=source.seed,
        out=str(source.out(out)),
        inputs={"dataset": str(dataset_path)},
        model=architecture,
        train=train_cfg,
    )

    with run_directory(config) as run:
        dataset = DatasetCRUD.load(dataset_path)
        model, report = trainer.train(dataset, architecture, train_cfg)
        checkpoint = model.save(run.artifact("model.json"))
        run.artifact(sidecar_path(checkpoint).name)
        report.checkpoint = checkpoint.name
        ReportCRUD.save(report, run.artifact("train_report.json"))
        trainer.write_epoch_csv(report, run.artifact("epochs.csv"))
    click.echo(f"trained {len(report.epochs)} epochs ({report.stop_reason}); checkpoint {checkpoint}")
