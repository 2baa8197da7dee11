import logging
from pathlib import Path
from typing import Optional

import click

from iae.cli.common import ConfigSource, common_options, require_file
from iae.core.errors import InputError
from iae.core.run import run_directory
from iae.crud.auction_log import AuctionLogCRUD
from iae.crud.dataset import DatasetCRUD
from iae.crud.report import ReportCRUD
from iae.models.network import Model
from iae.schemas.bidding import SimulationConfig
from iae.schemas.run import RunConfig
from iae.services.experiment import run_experiment, series_frame

logger = logging.getLogger(__name__)


@click.command("simulate")
@common_options
@click.option("--dataset", "dataset_path", type=click.Path(path_type=Path), default=None)
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None)
@click.option("--oracle/--no-oracle", default=None, help="Bid with the true potential outcomes.")
@click.option("--auction-log", type=click.Path(path_type=Path), default=None)
@click.option("--n-ads", type=int, default=None)
@click.option("--identical-policies/--lvr", default=None, help="A/A run: both groups bid baseline.")
def simulate_command(
    seed: Optional[int],
    out: Optional[Path],
    config_path: Optional[Path],
    dataset_path: Optional[Path],
    checkpoint: Optional[Path],
    oracle: Optional[bool],
    auction_log: Optional[Path],
    n_ads: Optional[int],
    identical_policies: Optional[bool],
):
    """Offline lvr-bidding A/B experiment with cost-neutral kappa."""
    source = ConfigSource("simulate", config_path, seed)
    cfg = source.section(
        "simulate",
        SimulationConfig,
        {"oracle": oracle, "n_ads": n_ads, "identical_policies": identical_policies},
    )
    dataset_path = require_file(source.input_path("dataset", dataset_path), "dataset")
    inputs = {"dataset": str(dataset_path)}
    if not cfg.oracle:
        checkpoint = require_file(source.input_path("checkpoint", checkpoint), "checkpoint")
        inputs["checkpoint"] = str(checkpoint)
    recorded_log = (source.payload.get("inputs") or {}).get("auction_log")
    if auction_log is None and recorded_log is not None:
        auction_log = Path(recorded_log)
    if auction_log is not None:
        inputs["auction_log"] = str(require_file(auction_log, "auction log"))
    config = RunConfig(
        command="simulate",
        seed=source.seed,
        out=str(source.out(out)),
        inputs=inputs,
        simulate=cfg,
    )

    dataset = DatasetCRUD.load(dataset_path)
    truth = dataset.ground_truth()
    model = truth if cfg.oracle else Model.load(checkpoint)
    if model.n_treatments != truth.n_treatments:
        raise InputError("checkpoint and dataset disagree on the treatment count")
    log = AuctionLogCRUD.load(auction_log) if auction_log is not None else None

    with run_directory(config) as run:
        report, log = run_experiment(model, truth, dataset.contexts, cfg, log=log)
        ReportCRUD.save(report, run.artifact("experiment_report.json"))
        ReportCRUD.save_frame(series_frame(report), run.artifact("series.csv"))
        AuctionLogCRUD.save(log, run.artifact("auction_log.csv"))
    click.echo(
        f"all-channel ratio {report.all_clicks_ratio:.4f}, "
        f"organic ratio {report.organic_clicks_ratio:.4f}, cost ratio {report.cost_ratio:.4f}"
    )
