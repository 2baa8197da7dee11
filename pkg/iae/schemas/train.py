from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from iae.schemas.ipm import IpmConfig


class AdamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    # l2 weight on the hypothesis weight matrices
    lam: float = Field(1e-4, ge=0, alias="lambda")
    # IPM weight, also standing in for the Lipschitz constant of the loss
    beta: float = Field(1.0, ge=0)
    batch_size: int = Field(256, ge=2)
    max_epochs: int = Field(100, ge=0)
    # relative improvement of the validation factual loss that resets patience
    tolerance: float = Field(1e-4, ge=0)
    patience: int = Field(10, ge=1)
    validation_fraction: float = Field(0.2, gt=0, lt=1)
    adam: AdamConfig = Field(default_factory=AdamConfig)
    ipm: IpmConfig = Field(default_factory=IpmConfig)
    seed: int = 0


class EpochRecord(BaseModel):
    epoch: int
    weighted_factual: float
    endpoint_correction: float
    l2_penalty: float
    ipm_sum: float
    ipm_penalty: float
    objective: float
    val_factual: float
    batches: int
    skipped_ipm_pairs: int = 0


class TrainReport(BaseModel):
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_factual: Optional[float] = None
    stop_reason: Literal["converged", "max_epochs", "zero_epochs"] = "max_epochs"
    n_train: int = 0
    n_val: int = 0
    treatment_weights: List[float] = Field(default_factory=list)
    checkpoint: Optional[str] = None
