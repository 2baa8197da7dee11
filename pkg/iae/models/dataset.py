from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from iae.core.errors import GroundTruthMissingError, InputError
from iae.models.ground_truth import GroundTruth
from iae.schemas.dataset import DatasetSidecar
from iae.schemas.features import FeatureSchema
from iae.schemas.synthetic import GroundTruthParams


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    # 1-based treatment index
    t: int
    y: float


class Dataset:
    """Observational samples {x_i, t_i, y_i}; immutable after construction."""

    def __init__(
        self,
        contexts: np.ndarray,
        treatments: np.ndarray,
        outcomes: np.ndarray,
        n_treatments: int,
        feature_schema: FeatureSchema,
        ground_truth: Optional[GroundTruthParams] = None,
    ):
        contexts = np.array(contexts, dtype=np.float64)
        treatments = np.array(treatments)
        outcomes = np.array(outcomes, dtype=np.float64)
        if contexts.ndim != 2:
            raise InputError(f"contexts must be 2-D, got shape {contexts.shape}")
        size = contexts.shape[0]
        if size == 0:
            raise InputError("empty dataset")
        if treatments.shape != (size,) or outcomes.shape != (size,):
            raise InputError("contexts, treatments and outcomes disagree on sample count")
        if n_treatments < 2:
            raise InputError(f"need at least 2 treatments, got {n_treatments}")
        if contexts.shape[1] != feature_schema.dim:
            raise InputError(
                f"context dim {contexts.shape[1]} differs from feature schema dim {feature_schema.dim}"
            )
        if np.any(treatments != np.round(treatments)):
            raise InputError("treatment indices must be integers")
        treatments = treatments.astype(np.int64)
        if treatments.min() < 1 or treatments.max() > n_treatments:
            raise InputError(f"treatment indices must lie in 1..{n_treatments}")
        if not (np.all(np.isfinite(contexts)) and np.all(np.isfinite(outcomes))):
            raise InputError("contexts and outcomes must be finite")

        for array in (contexts, treatments, outcomes):
            array.setflags(write=False)
        self.contexts = contexts
        self.treatments = treatments
        self.outcomes = outcomes
        self.n_treatments = n_treatments
        self.feature_schema = feature_schema
        self.ground_truth_params = ground_truth

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __repr__(self):
        return f"<Dataset(N={len(self)}, n={self.n_treatments}, d={self.context_dim})>"

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """N_j for j = 1..n."""
        return np.bincount(self.treatments - 1, minlength=self.n_treatments)

    @property
    def mu(self) -> np.ndarray:
        """mu_j = N_j / N."""
        return self.counts / len(self)

    @property
    def weights(self) -> np.ndarray:
        """w_i = mu_{t_i}."""
        return self.mu[self.treatments - 1]

    def sample(self, index: int) -> Sample:
        return Sample(
            x=self.contexts[index],
            t=int(self.treatments[index]),
            y=float(self.outcomes[index]),
        )

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.contexts[rows],
            self.treatments[rows],
            self.outcomes[rows],
            self.n_treatments,
            self.feature_schema,
            self.ground_truth_params,
        )

    def sidecar(self) -> DatasetSidecar:
        return DatasetSidecar(
            n_treatments=self.n_treatments,
            context_dim=self.context_dim,
            feature_schema=self.feature_schema,
            ground_truth=self.ground_truth_params,
        )

    def ground_truth(self) -> GroundTruth:
        if self.ground_truth_params is None:
            raise GroundTruthMissingError()
        return GroundTruth(self.ground_truth_params)
