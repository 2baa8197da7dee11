from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class FeatureGroup(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    dim: int = Field(ge=1)
    kind: Literal["one_hot", "continuous"] = "continuous"
    # positions inside the group holding log(1 + v) transforms
    log_columns: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_log_columns(self):
        for col in self.log_columns:
            if not 0 <= col < self.dim:
                raise ValueError(f"log column {col} outside group {self.name!r}")
        return self


class FeatureSchema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    groups: List[FeatureGroup]

    @property
    def dim(self) -> int:
        return sum(group.dim for group in self.groups)

    def offsets(self) -> dict:
        """Column slice of every group, keyed by group name."""
        slices, start = {}, 0
        for group in self.groups:
            slices[group.name] = slice(start, start + group.dim)
            start += group.dim
        return slices

    def one_hot_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for group in self.groups:
            if group.kind == "one_hot":
                mask[self.offsets()[group.name]] = True
        return mask

    @classmethod
    def default(cls) -> "FeatureSchema":
        return cls(
            groups=[
                FeatureGroup(name="ids", dim=10, kind="one_hot"),
                FeatureGroup(name="pv_lastday", dim=6),
                FeatureGroup(name="pv_lastweek", dim=6),
                FeatureGroup(name="shop", dim=5),
                # ad rank, log(1 + ad rank), log(1 + shop rank)
                FeatureGroup(name="competition", dim=3, log_columns=[1, 2]),
            ]
        )
