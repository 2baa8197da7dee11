from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class IpmConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    method: Literal["sinkhorn", "exact-1d"] = "sinkhorn"
    # absolute entropic regularization; when unset it is epsilon_scale times
    # the reference scale of the ground-cost matrix
    epsilon: Optional[float] = Field(None, gt=0)
    epsilon_scale: float = Field(0.1, gt=0)
    epsilon_reference: Literal["rms", "mean", "median"] = "rms"
    iterations: int = Field(50, ge=1)
    annealing: bool = True
    # L1 row-marginal violation of the plan; when set, the loop keeps running
    # at the target epsilon past ``iterations`` until it is reached
    tolerance: Optional[float] = Field(None, gt=0)
    max_iterations: int = Field(20_000, ge=1)
    metric: Literal["euclidean"] = "euclidean"
    # adjacent pairs with fewer samples on either side are skipped
    min_cloud_size: int = Field(2, ge=1)
