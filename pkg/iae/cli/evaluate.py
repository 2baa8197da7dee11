import logging
from pathlib import Path
from typing import Optional

import click

from iae.cli.common import ConfigSource, common_options, require_file
from iae.core.config import get_settings
from iae.core.run import run_directory
from iae.crud.dataset import DatasetCRUD
from iae.crud.report import ReportCRUD
from iae.models.network import Model
from iae.schemas.evaluation import EvalOptions
from iae.schemas.run import RunConfig
from iae.services.evaluation import bound_check

logger = logging.getLogger(__name__)


@click.command("evaluate")
@common_options
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path), default=None)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--beta", type=float, default=None, help="Weight of the IPM terms in the surrogate.")
@click.option(
    "--contexts",
    type=click.Choice(["validation", "all"]),
    default=None,
    help="Score the held-out rows of the training split, or every row.",
)
def evaluate_command(
    seed: Optional[int],
    out: Optional[Path],
    config_path: Optional[Path],
    dataset_path: Optional[Path],
    checkpoint: Optional[Path],
    beta: Optional[float],
    contexts: Optional[str],
):
    """PEHE and bound checks of a checkpoint against synthetic ground truth."""
    source = ConfigSource("evaluate", config_path, seed)
    dataset_path = require_file(source.input_path("dataset", dataset_path), "dataset")
    checkpoint = require_file(source.input_path("checkpoint", checkpoint), "checkpoint")
    options = source.section("evaluate", EvalOptions, {"beta": beta, "contexts": contexts})
    config = RunConfig(
        command="evaluate",
        seed=source.seed,
        out=str(source.out(out)),
        inputs={"dataset": str(dataset_path), "checkpoint": str(checkpoint)},
        evaluate=options,
    )

    dataset = DatasetCRUD.load(dataset_path)
    truth = dataset.ground_truth()
    model = Model.load(checkpoint)
    with run_directory(config) as run:
        report = bound_check(model, truth, dataset, options)
        ReportCRUD.save(report, run.artifact("pehe_report.json"))

    ledger = ReportCRUD.append_ledger(
        {
            "run": config.out,
            "dataset": str(dataset_path),
            "checkpoint": str(checkpoint),
            "beta": options.beta,
            "contexts": report.contexts,
            "n_contexts": report.n_contexts,
            "pehe": report.pehe,
            "adjacent_bound": report.adjacent_bound,
            "ipm_sum": report.ipm_sum,
            "theorem_rhs": report.theorem_rhs,
        },
        get_settings().ledger_path,
    )
    click.echo(f"pehe={report.pehe:.6g} adjacent_bound={report.adjacent_bound:.6g} (ledger {ledger})")
