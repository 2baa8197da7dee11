"""Leverage rates, lvr-adjusted bids, second-price replay and kappa calibration.

Daily advertising clicks k map to treatment index min(k, n - 1) + 1. A win
needs bid > competing price; a won impression that is clicked pays the
competing price (single-slot second price, pay per click).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from iae.core.errors import CalibrationError, MissingHistoryError, UndefinedLeverageRateError
from iae.models.auction_log import AuctionLog
from iae.schemas.bidding import BidParams, CalibrationResult, GroupMetrics, LvrRecord

logger = logging.getLogger(__name__)


def click_level(clicks, n_treatments: int) -> np.ndarray:
    """Clicks truncated at n - 1 (0-based treatment level)."""
    return np.minimum(np.asarray(clicks, dtype=np.int64), n_treatments - 1)


def _difference_quotients(f: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """sigma per row of f (m, n) for click counts s, t (s != t)."""
    n = f.shape[1]
    rows = np.arange(f.shape[0])
    bs, bt = click_level(s, n), click_level(t, n)
    same = bs == bt
    # both counts inside one level: adjacent quotient at that level
    upper = np.where(bs < n - 1, bs + 1, bs)
    lower = np.where(bs < n - 1, bs, bs - 1)
    adjacent = f[rows, upper] - f[rows, lower]
    span = np.where(same, 1, bt - bs)
    direct = (f[rows, bt] - f[rows, bs]) / span
    return np.where(same, adjacent, direct)


def leverage_rates(model, contexts: np.ndarray, s, t) -> np.ndarray:
    """Vectorized sigma_{s,t}(x) = alpha_hat_{s,t}(x) / (t - s) on binned clicks."""
    contexts = np.atleast_2d(contexts)
    s = np.broadcast_to(np.asarray(s, dtype=np.int64), (contexts.shape[0],))
    t = np.broadcast_to(np.asarray(t, dtype=np.int64), (contexts.shape[0],))
    if np.any(s == t):
        raise UndefinedLeverageRateError()
    if np.any(s < 0) or np.any(t < 0):
        raise UndefinedLeverageRateError("click counts must be non-negative")
    f = np.atleast_2d(model.predict_all(contexts))
    return _difference_quotients(f, s, t)


def leverage_rate(model, x, s: int, t: int) -> float:
    return float(leverage_rates(model, np.asarray(x).reshape(1, -1), s, t)[0])


def nominal_clicks(history: Sequence[int]) -> Tuple[int, int]:
    """(s, t): t is the latest day, s the most recent earlier day with s != t."""
    if len(history) < 2:
        raise MissingHistoryError("need at least two days of advertising clicks")
    t = int(history[-1])
    for clicks in reversed(history[:-1]):
        if int(clicks) != t:
            return int(clicks), t
    raise MissingHistoryError(f"no earlier day with clicks different from {t}")


def nominal_leverage_rate(model, x, history: Sequence[int], ad_id: int = 0) -> LvrRecord:
    s, t = nominal_clicks(history)
    return LvrRecord(ad_id=ad_id, s=s, t=t, sigma=leverage_rate(model, x, s, t))


def bid(params: BidParams, sigma: float) -> float:
    baseline = params.gamma * params.cvr * params.item_price
    floor = params.floor_fraction * baseline
    if sigma <= 0:
        return floor
    return max(params.kappa * (sigma / params.sigma_bar) * baseline, floor)


def bid_prices(
    baseline: np.ndarray,
    sigma: np.ndarray,
    sigma_bar: float,
    kappa: float,
    floor_fraction: float,
) -> np.ndarray:
    """Vectorized ``bid`` over baseline prices gamma * cvr * ip."""
    floor = floor_fraction * baseline
    scaled = kappa * (sigma / sigma_bar) * baseline
    return np.where(sigma > 0, np.maximum(scaled, floor), floor)


class BaselinePolicy:
    """bid = gamma * cvr * ip."""

    def __init__(self, gammas: Dict[int, float]):
        self.gammas = gammas

    def baseline(self, log: AuctionLog) -> np.ndarray:
        frame = log.frame
        gamma = frame["ad_id"].map(self.gammas).to_numpy(dtype=np.float64)
        return gamma * frame["cvr"].to_numpy() * frame["item_price"].to_numpy()

    def bids(self, log: AuctionLog) -> np.ndarray:
        return self.baseline(log)


class LvrPolicy(BaselinePolicy):
    """bid = kappa * (sigma / sigma_bar) * gamma * cvr * ip, floored."""

    def __init__(
        self,
        gammas: Dict[int, float],
        sigmas: Dict[int, float],
        sigma_bar: float,
        kappa: float = 1.0,
        floor_fraction: float = 0.01,
    ):
        super().__init__(gammas)
        if sigma_bar <= 0:
            raise CalibrationError(f"sigma_bar must be positive, got {sigma_bar}")
        self.sigmas = sigmas
        self.sigma_bar = sigma_bar
        self.kappa = kappa
        self.floor_fraction = floor_fraction

    def with_kappa(self, kappa: float) -> "LvrPolicy":
        return LvrPolicy(self.gammas, self.sigmas, self.sigma_bar, kappa, self.floor_fraction)

    def bids(self, log: AuctionLog) -> np.ndarray:
        sigma = log.frame["ad_id"].map(self.sigmas).to_numpy(dtype=np.float64)
        return bid_prices(self.baseline(log), sigma, self.sigma_bar, self.kappa, self.floor_fraction)


@dataclass
class ReplayDraws:
    """Random numbers shared by every policy replayed on one log."""

    click_uniforms: pd.Series
    # indexed by (ad_id, day)
    outcome_noise: pd.Series

    @classmethod
    def for_log(cls, log: AuctionLog, seed: int) -> "ReplayDraws":
        rng = np.random.default_rng(seed)
        uniforms = pd.Series(rng.random(len(log)), index=log.frame.index)
        keys = pd.MultiIndex.from_product([log.ad_ids, log.days], names=["ad_id", "day"])
        noise = pd.Series(rng.standard_normal(len(keys)), index=keys)
        return cls(click_uniforms=uniforms, outcome_noise=noise)


@dataclass
class OutcomeTable:
    """Potential outcomes m_i(x_ad) per AD, for realizing all-channel clicks."""

    # ad_id -> m_1..m_n
    potential: Dict[int, np.ndarray]
    noise: float
    organic_share: float

    @classmethod
    def from_ground_truth(cls, truth, contexts: Dict[int, np.ndarray]) -> "OutcomeTable":
        ads = sorted(contexts)
        outcomes = truth.potential_outcomes(np.stack([contexts[ad] for ad in ads]))
        return cls(dict(zip(ads, outcomes)), truth.params.noise, truth.params.organic_share)


@dataclass
class ReplayResult:
    # one row per (ad_id, day): ad_clicks, cost, all_clicks, organic_clicks
    per_ad_day: pd.DataFrame

    def metrics(self, ads=None, days=None) -> GroupMetrics:
        frame = self.per_ad_day
        if ads is not None:
            frame = frame[frame["ad_id"].isin(list(ads))]
        if days is not None:
            frame = frame[frame["day"].isin(list(days))]
        return GroupMetrics(
            ad_clicks=float(frame["ad_clicks"].sum()),
            cost=float(frame["cost"].sum()),
            all_clicks=float(frame["all_clicks"].sum()),
            organic_clicks=float(frame["organic_clicks"].sum()),
        )

    @property
    def total(self) -> GroupMetrics:
        return self.metrics()


def replay(
    log: AuctionLog,
    policy,
    outcomes: Optional[OutcomeTable] = None,
    draws: Optional[ReplayDraws] = None,
    seed: int = 0,
) -> ReplayResult:
    """Second-price pay-per-click replay of ``policy`` on ``log``.

    Without ``outcomes`` only advertising clicks and cost are realized.
    """
    draws = draws or ReplayDraws.for_log(log, seed)
    frame = log.frame
    bids = policy.bids(log)
    prices = frame["competing_price"].to_numpy()
    won = bids > prices
    clicked = won & (draws.click_uniforms.loc[frame.index].to_numpy() < frame["click_prob"].to_numpy())

    per = (
        pd.DataFrame(
            {
                "ad_id": frame["ad_id"].to_numpy(),
                "day": frame["day"].to_numpy(),
                "ad_clicks": clicked.astype(np.int64),
                "cost": np.where(clicked, prices, 0.0),
            }
        )
        .groupby(["ad_id", "day"], sort=True)[["ad_clicks", "cost"]]
        .sum()
        .reset_index()
    )

    if outcomes is None:
        per["all_clicks"] = 0.0
        per["organic_clicks"] = 0.0
        return ReplayResult(per)

    n = len(next(iter(outcomes.potential.values())))
    levels = click_level(per["ad_clicks"].to_numpy(), n)
    expected = np.array(
        [outcomes.potential[ad][level] for ad, level in zip(per["ad_id"], levels)]
    )
    noise = draws.outcome_noise.loc[list(zip(per["ad_id"], per["day"]))].to_numpy()
    ad_clicks = per["ad_clicks"].to_numpy(dtype=np.float64)
    all_clicks = np.maximum(expected + outcomes.noise * noise, ad_clicks)
    per["all_clicks"] = all_clicks
    per["organic_clicks"] = outcomes.organic_share * (all_clicks - ad_clicks)
    return ReplayResult(per)


def replay_cost(log: AuctionLog, policy, draws: ReplayDraws) -> float:
    return replay(log, policy, draws=draws).total.cost


def calibrate_kappa(
    log: AuctionLog,
    policy: LvrPolicy,
    baseline_cost: float,
    tolerance: float = 0.01,
    bracket: Tuple[float, float] = (0.1, 10.0),
    max_steps: int = 40,
    draws: Optional[ReplayDraws] = None,
    seed: int = 0,
) -> CalibrationResult:
    """Bisect kappa until the replay cost of ``policy`` matches ``baseline_cost``.

    Cost is non-decreasing in kappa on a fixed draw. Returns the closest
    kappa with ``converged=False`` when the cost curve steps over the
    tolerance band.
    """
    if baseline_cost <= 0:
        raise CalibrationError(f"baseline cost must be positive, got {baseline_cost}")
    draws = draws or ReplayDraws.for_log(log, seed)
    evaluations = 0

    def cost_at(kappa: float) -> float:
        nonlocal evaluations
        evaluations += 1
        return replay_cost(log, policy.with_kappa(kappa), draws)

    def gap(cost: float) -> float:
        return abs(cost - baseline_cost) / baseline_cost

    def result(kappa: float, cost: float, converged: bool) -> CalibrationResult:
        return CalibrationResult(
            kappa=kappa,
            cost=cost,
            target_cost=baseline_cost,
            relative_gap=gap(cost),
            iterations=evaluations,
            converged=converged,
        )

    cost = cost_at(1.0)
    if gap(cost) <= tolerance:
        return result(1.0, cost, True)

    low, high = bracket
    cost_low, cost_high = cost_at(low), cost_at(high)
    if cost_low > baseline_cost * (1 + tolerance) or cost_high < baseline_cost * (1 - tolerance):
        raise CalibrationError(
            f"target cost {baseline_cost:.6g} outside the bracket: "
            f"cost({low})={cost_low:.6g}, cost({high})={cost_high:.6g}"
        )
    candidates = [(gap(cost), 1.0, cost), (gap(cost_low), low, cost_low), (gap(cost_high), high, cost_high)]
    best = min(candidates)
    if best[0] <= tolerance:
        return result(best[1], best[2], True)

    for _ in range(max_steps):
        middle = np.sqrt(low * high) if low > 0 else 0.5 * (low + high)
        cost = cost_at(middle)
        if gap(cost) < best[0]:
            best = (gap(cost), middle, cost)
        if gap(cost) <= tolerance:
            return result(middle, cost, True)
        if cost < baseline_cost:
            low = middle
        else:
            high = middle

    logger.warning(
        f"kappa calibration stopped at gap {best[0]:.4%} after {max_steps} steps; "
        f"using closest kappa {best[1]:.6g}"
    )
    return result(best[1], best[2], False)
