from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from iae.schemas.dataset import StandardizationStats


class ArchitectureConfig(BaseModel):
    """Network shape shared by every run; dims come from the dataset."""

    model_config = ConfigDict(extra="forbid")

    rep_width: int = Field(64, ge=1)
    # number of representation layers; the last one is linear
    rep_depth: int = Field(3, ge=1)
    hyp_width: int = Field(64, ge=1)
    # hidden layers of the hypothesis, before its scalar output layer
    hyp_depth: int = Field(3, ge=1)
    nonlinearity: Literal["elu", "relu", "tanh"] = "elu"
    seed: int = 0


class ModelConfig(ArchitectureConfig):
    context_dim: int = Field(ge=1)
    n_treatments: int = Field(ge=2)

    @classmethod
    def from_architecture(
        cls, architecture: ArchitectureConfig, context_dim: int, n_treatments: int
    ) -> "ModelConfig":
        return cls(
            context_dim=context_dim,
            n_treatments=n_treatments,
            **architecture.model_dump(),
        )


class TrainingSplit(BaseModel):
    """Enough to rebuild the train/validation split of the fitted dataset."""

    model_config = ConfigDict(extra="forbid")

    n_rows: int = Field(ge=2)
    validation_fraction: float = Field(gt=0, lt=1)
    seed: int


class ModelSidecar(BaseModel):
    format: Literal["iae-model"] = "iae-model"
    version: int = 1
    config: ModelConfig
    standardization: StandardizationStats
    # absent for checkpoints not produced by the trainer
    training_split: Optional[TrainingSplit] = None
