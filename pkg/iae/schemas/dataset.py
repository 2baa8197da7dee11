from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from iae.schemas.features import FeatureSchema
from iae.schemas.synthetic import GroundTruthParams

DATASET_FORMAT = "iae-dataset"
DATASET_VERSION = 1


class StandardizationStats(BaseModel):
    """Per-column affine map; one-hot columns keep mean 0 and std 1."""

    mean: List[float]
    std: List[float]

    @classmethod
    def identity(cls, dim: int) -> "StandardizationStats":
        return cls(mean=[0.0] * dim, std=[1.0] * dim)

    @classmethod
    def fit(cls, contexts: np.ndarray, one_hot_mask: np.ndarray) -> "StandardizationStats":
        mean = contexts.mean(axis=0)
        std = contexts.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        mean = np.where(one_hot_mask, 0.0, mean)
        std = np.where(one_hot_mask, 1.0, std)
        return cls(mean=mean.tolist(), std=std.tolist())

    def apply(self, contexts: np.ndarray) -> np.ndarray:
        return (contexts - np.asarray(self.mean)) / np.asarray(self.std)


class DatasetSidecar(BaseModel):
    format: Literal["iae-dataset"] = DATASET_FORMAT
    version: int = DATASET_VERSION
    n_treatments: int = Field(ge=2)
    context_dim: int = Field(ge=1)
    feature_schema: FeatureSchema
    ground_truth: Optional[GroundTruthParams] = None

    @model_validator(mode="after")
    def check_dims(self):
        if self.feature_schema.dim != self.context_dim:
            raise ValueError(
                f"feature groups sum to {self.feature_schema.dim}, context_dim is {self.context_dim}"
            )
        if self.ground_truth is not None:
            if self.ground_truth.n_treatments != self.n_treatments:
                raise ValueError("ground truth treatment count differs from dataset")
            if len(self.ground_truth.center) != self.context_dim:
                raise ValueError("ground truth dimension differs from dataset")
        return self
