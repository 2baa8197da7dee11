"""Offline A/B experiment for lvr bidding on a replayed auction log.

ADs are split at random into an experiment and a control group. Every AD bids
the baseline price during the pre-period. On each experiment day the
experiment group bids with nominal leverage rates computed from its own click
history, with kappa calibrated so the group's cost matches what the baseline
policy would have spent on the same day. The baseline replay of the
experiment group shares all random numbers with the lvr replay and is
reported as the counterfactual arm.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import binomtest

from iae.core.errors import ConfigError, MissingHistoryError
from iae.crud.auction_log import AuctionLogCRUD
from iae.models.auction_log import AuctionLog
from iae.models.ground_truth import GroundTruth
from iae.schemas.bidding import (
    CalibrationResult,
    DailyRecord,
    ExperimentReport,
    GroupMetrics,
    RatioPoint,
    SimulationConfig,
)
from iae.services.bidding import (
    BaselinePolicy,
    LvrPolicy,
    OutcomeTable,
    ReplayDraws,
    calibrate_kappa,
    leverage_rates,
    nominal_clicks,
    replay,
)

logger = logging.getLogger(__name__)


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return 1.0 if numerator == 0 else float("inf")
    return numerator / denominator


def _daily_sigmas(
    model, ads: Sequence[int], contexts: Dict[int, np.ndarray], history: Dict[int, List[int]]
) -> Tuple[Dict[int, float], int]:
    """Nominal leverage rate per AD; ADs without usable history get NaN."""
    pairs = {}
    for ad in ads:
        try:
            pairs[ad] = nominal_clicks(history[ad])
        except MissingHistoryError:
            continue
    sigmas = {ad: float("nan") for ad in ads}
    if pairs:
        ready = sorted(pairs)
        values = leverage_rates(
            model,
            np.stack([contexts[ad] for ad in ready]),
            [pairs[ad][0] for ad in ready],
            [pairs[ad][1] for ad in ready],
        )
        sigmas.update(zip(ready, values.tolist()))
    return sigmas, len(ads) - len(pairs)


def ratio_series(daily: pd.DataFrame, pre_days: Sequence[int]) -> List[RatioPoint]:
    """Per-day Ad / All / Search values over the group's own pre-period means."""
    pre = daily[daily["day"].isin(list(pre_days))].mean(numeric_only=True)
    points = []
    for row in daily.itertuples(index=False):
        ad = _ratio(row.ad_clicks, pre["ad_clicks"])
        non_ad = _ratio(row.all_clicks - row.ad_clicks, pre["all_clicks"] - pre["ad_clicks"])
        search = _ratio(row.organic_clicks, pre["organic_clicks"])
        points.append(
            RatioPoint(
                day=int(row.day),
                ad=ad,
                all=non_ad,
                search=search,
                all_over_ad=_ratio(non_ad, ad),
                search_over_ad=_ratio(search, ad),
            )
        )
    return points


def _frame(records: List[DailyRecord], arm: str) -> pd.DataFrame:
    return pd.DataFrame(
        [{"day": record.day, **getattr(record, arm).model_dump()} for record in records]
    )


def run_experiment(
    model,
    truth: GroundTruth,
    contexts_pool: np.ndarray,
    cfg: SimulationConfig,
    log: Optional[AuctionLog] = None,
) -> Tuple[ExperimentReport, AuctionLog]:
    """Run the seeded experiment; ``model`` may be a trained Model or ``truth``."""
    rng = np.random.default_rng(cfg.seed)
    # drawn even when a log is supplied so the later draws do not shift
    log_seed = int(rng.integers(2**31))
    if log is None:
        log = AuctionLogCRUD.generate(cfg, seed=log_seed)
    ads, days = log.ad_ids, log.days
    if len(days) <= cfg.pre_days:
        raise ConfigError(f"auction log has {len(days)} days; need more than {cfg.pre_days}")
    if len(ads) < 2:
        raise ConfigError("need at least two ADs to form experiment and control groups")
    pre_days, experiment_days = days[: cfg.pre_days], days[cfg.pre_days :]

    rows = rng.choice(len(contexts_pool), size=len(ads), replace=len(contexts_pool) < len(ads))
    contexts = {ad: contexts_pool[row] for ad, row in zip(ads, rows)}
    gammas = dict(zip(ads, rng.uniform(*cfg.gamma_range, len(ads)).tolist()))
    order = rng.permutation(len(ads))
    n_experiment = min(max(int(round(cfg.experiment_fraction * len(ads))), 1), len(ads) - 1)
    experiment_ads = sorted(ads[i] for i in order[:n_experiment])
    control_ads = sorted(ads[i] for i in order[n_experiment:])

    draws = ReplayDraws.for_log(log, seed=int(rng.integers(2**31)))
    outcomes = OutcomeTable.from_ground_truth(truth, contexts)
    baseline = BaselinePolicy(gammas)
    baseline_run = replay(log, baseline, outcomes, draws)

    clicks = baseline_run.per_ad_day.set_index(["ad_id", "day"])["ad_clicks"]
    history = {ad: [int(clicks.get((ad, day), 0)) for day in pre_days] for ad in experiment_ads}

    records: List[DailyRecord] = []
    for day in pre_days:
        metrics = baseline_run.metrics(experiment_ads, [day])
        records.append(
            DailyRecord(
                day=day,
                phase="pre",
                experiment=metrics,
                counterfactual=metrics,
                control=baseline_run.metrics(control_ads, [day]),
            )
        )

    for day in experiment_days:
        counterfactual = baseline_run.metrics(experiment_ads, [day])
        day_log = log.subset(ads=experiment_ads, days=[day])
        sigma_bar: Optional[float] = None
        calibration: Optional[CalibrationResult] = None
        missing = 0
        policy = baseline

        if not cfg.identical_policies:
            sigmas, missing = _daily_sigmas(model, experiment_ads, contexts, history)
            defined = [value for value in sigmas.values() if np.isfinite(value)]
            mean_sigma = float(np.mean(defined)) if defined else 0.0
            if mean_sigma <= 0:
                logger.warning(f"day {day}: mean leverage rate {mean_sigma:.6g}; bidding baseline")
            else:
                sigma_bar = mean_sigma
                sigmas = {ad: (v if np.isfinite(v) else sigma_bar) for ad, v in sigmas.items()}
                policy = LvrPolicy(gammas, sigmas, sigma_bar, floor_fraction=cfg.floor_fraction)
                if counterfactual.cost > 0:
                    calibration = calibrate_kappa(
                        day_log,
                        policy,
                        counterfactual.cost,
                        tolerance=cfg.tolerance,
                        bracket=cfg.kappa_bracket,
                        max_steps=cfg.max_bisection_steps,
                        draws=draws,
                    )
                    policy = policy.with_kappa(calibration.kappa)
            if missing:
                logger.info(f"day {day}: {missing} ADs without usable history bid neutrally")

        day_run = replay(day_log, policy, outcomes, draws)
        for ad, value in day_run.per_ad_day.set_index("ad_id")["ad_clicks"].items():
            history[ad].append(int(value))
        records.append(
            DailyRecord(
                day=day,
                phase="experiment",
                experiment=day_run.total,
                counterfactual=counterfactual,
                control=baseline_run.metrics(control_ads, [day]),
                sigma_bar=sigma_bar,
                calibration=calibration,
                missing_history=missing,
            )
        )

    in_experiment = [r for r in records if r.phase == "experiment"]
    experiment_total = sum((r.experiment for r in in_experiment), GroupMetrics())
    counterfactual_total = sum((r.counterfactual for r in in_experiment), GroupMetrics())
    control_total = sum((r.control for r in in_experiment), GroupMetrics())
    all_ratio = _ratio(experiment_total.all_clicks, counterfactual_total.all_clicks)

    report = ExperimentReport(
        seed=cfg.seed,
        oracle=cfg.oracle,
        experiment_ads=experiment_ads,
        control_ads=control_ads,
        daily=records,
        experiment_total=experiment_total,
        counterfactual_total=counterfactual_total,
        control_total=control_total,
        experiment_series=ratio_series(_frame(records, "experiment"), pre_days),
        counterfactual_series=ratio_series(_frame(records, "counterfactual"), pre_days),
        control_series=ratio_series(_frame(records, "control"), pre_days),
        all_clicks_ratio=all_ratio,
        organic_clicks_ratio=_ratio(
            experiment_total.organic_clicks, counterfactual_total.organic_clicks
        ),
        cost_ratio=_ratio(experiment_total.cost, counterfactual_total.cost),
        lvr_wins=all_ratio >= 1.0,
    )
    logger.info(
        f"experiment done: all-channel ratio {all_ratio:.4f}, cost ratio {report.cost_ratio:.4f}"
    )
    return report, log


def series_frame(report: ExperimentReport) -> pd.DataFrame:
    """Tidy per-day series of every arm for external plotting."""
    arms = {
        "experiment": report.experiment_series,
        "counterfactual": report.counterfactual_series,
        "control": report.control_series,
    }
    rows = [{"group": name, **point.model_dump()} for name, series in arms.items() for point in series]
    return pd.DataFrame(
        rows, columns=["group", "day", "ad", "all", "search", "all_over_ad", "search_over_ad"]
    )


def sign_test(ratios: Sequence[float]) -> float:
    """One-sided sign test p-value that lvr beats baseline (ratios above 1); ties dropped."""
    ratios = np.asarray(ratios, dtype=np.float64)
    untied = ratios[ratios != 1.0]
    if untied.size == 0:
        return 1.0
    return float(binomtest(int(np.sum(untied > 1.0)), untied.size, 0.5, alternative="greater").pvalue)
