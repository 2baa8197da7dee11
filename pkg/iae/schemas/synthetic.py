from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from iae.schemas.features import FeatureSchema


class GenConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_samples: int = Field(20_000, ge=1)
    n_treatments: int = Field(5, ge=2)
    # None means the default five-group schema (d = 30)
    feature_schema: Optional[FeatureSchema] = None
    selection_bias: float = Field(5.0, ge=0)
    noise: float = Field(1.0, ge=0)
    # range of the per-context amplitude of the indirect advertising effect
    lift_range: Tuple[float, float] = (0.5, 6.0)
    form: Literal["saturating", "linear"] = "saturating"
    base_scale: float = Field(2.0, ge=0)
    # correlation between the assignment score and the lift index
    assignment_correlation: float = Field(0.8, ge=-1, le=1)
    organic_share: float = Field(0.6, ge=0, le=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_ranges(self):
        if self.n_samples < 10 * self.n_treatments:
            raise ValueError(
                f"n_samples={self.n_samples} leaves fewer than 10 samples per treatment"
            )
        low, high = self.lift_range
        if low < 0 or high < low:
            raise ValueError(f"invalid lift_range {self.lift_range}")
        return self


class GroundTruthParams(BaseModel):
    """Closed-form potential outcomes m_i(x) = base(x) + lift(x) * g(i - 1)."""

    form: Literal["saturating", "linear"]
    n_treatments: int = Field(ge=2)
    center: List[float]
    base_coef: List[float]
    lift_coef: List[float]
    assign_coef: List[float]
    assignment_correlation: float
    base_floor: float
    base_scale: float
    lift_low: float
    lift_high: float
    noise: float
    selection_bias: float
    organic_share: float
    designated_feature: int
