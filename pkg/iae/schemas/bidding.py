import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LvrRecord(BaseModel):
    ad_id: int
    s: int = Field(ge=0)
    t: int = Field(ge=0)
    sigma: float

    @model_validator(mode="after")
    def check_record(self):
        if self.s == self.t:
            raise ValueError("leverage rate needs s != t")
        if not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite")
        return self


class BidParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float = Field(gt=0)
    cvr: float = Field(ge=0, le=1)
    item_price: float = Field(gt=0)
    kappa: float = Field(1.0, ge=0)
    sigma_bar: float = Field(1.0, gt=0)
    floor_fraction: float = Field(0.01, ge=0)


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_ads: int = Field(200, ge=2)
    opportunities_per_day: int = Field(20, ge=1)
    pre_days: int = Field(3, ge=2)
    experiment_days: int = Field(5, ge=1)
    experiment_fraction: float = Field(0.5, gt=0, lt=1)
    price_log_mean: float = 0.9
    price_log_sigma: float = Field(0.5, ge=0)
    click_prob_range: Tuple[float, float] = (0.05, 0.3)
    gamma_range: Tuple[float, float] = (0.8, 1.2)
    cvr_range: Tuple[float, float] = (0.02, 0.08)
    item_price_log_mean: float = 3.9
    item_price_log_sigma: float = Field(0.3, ge=0)
    kappa_bracket: Tuple[float, float] = (0.1, 10.0)
    tolerance: float = Field(0.01, ge=0)
    max_bisection_steps: int = Field(40, ge=1)
    floor_fraction: float = Field(0.01, ge=0)
    # use the true potential outcomes instead of a trained checkpoint
    oracle: bool = False
    # run the lvr policy in both groups (A/A check)
    identical_policies: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def check_ranges(self):
        for name in ("click_prob_range", "gamma_range", "cvr_range", "kappa_bracket"):
            low, high = getattr(self, name)
            if high < low:
                raise ValueError(f"{name} must be (low, high)")
        low, high = self.click_prob_range
        if low < 0 or high > 1:
            raise ValueError("click probabilities must lie in [0, 1]")
        if self.kappa_bracket[0] < 0:
            raise ValueError("kappa bracket must be non-negative")
        return self


class GroupMetrics(BaseModel):
    ad_clicks: float = 0.0
    cost: float = 0.0
    all_clicks: float = 0.0
    organic_clicks: float = 0.0

    def __add__(self, other: "GroupMetrics") -> "GroupMetrics":
        return GroupMetrics(
            ad_clicks=self.ad_clicks + other.ad_clicks,
            cost=self.cost + other.cost,
            all_clicks=self.all_clicks + other.all_clicks,
            organic_clicks=self.organic_clicks + other.organic_clicks,
        )


class CalibrationResult(BaseModel):
    kappa: float
    cost: float
    target_cost: float
    relative_gap: float
    iterations: int
    converged: bool


class DailyRecord(BaseModel):
    day: int
    phase: Literal["pre", "experiment"]
    experiment: GroupMetrics
    counterfactual: GroupMetrics
    control: GroupMetrics
    sigma_bar: Optional[float] = None
    calibration: Optional[CalibrationResult] = None
    # experiment ADs that bid neutrally for lack of a usable click history
    missing_history: int = 0


class RatioPoint(BaseModel):
    """One day of a group's metrics divided by its own pre-period mean."""

    day: int
    ad: float
    all: float
    search: float
    all_over_ad: float
    search_over_ad: float


class ExperimentReport(BaseModel):
    seed: int
    oracle: bool
    experiment_ads: List[int]
    control_ads: List[int]
    daily: List[DailyRecord]
    experiment_total: GroupMetrics
    counterfactual_total: GroupMetrics
    control_total: GroupMetrics
    experiment_series: List[RatioPoint]
    counterfactual_series: List[RatioPoint]
    control_series: List[RatioPoint]
    # experiment-period totals, lvr arm over counterfactual baseline arm
    all_clicks_ratio: float
    organic_clicks_ratio: float
    cost_ratio: float
    lvr_wins: bool
