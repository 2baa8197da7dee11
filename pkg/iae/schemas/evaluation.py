from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field

from iae.schemas.ipm import IpmConfig


class EvalOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # stand-in for the unknown Lipschitz constant in the factual + IPM surrogate
    beta: float = Field(1.0, ge=0)
    ipm: IpmConfig = Field(
        default_factory=lambda: IpmConfig(iterations=200, tolerance=1e-4, max_iterations=2000)
    )
    # per-treatment cap on representation clouds fed to the IPM
    max_cloud_size: int = Field(500, ge=2)
    # "validation" scores the rows the checkpoint held out during training
    contexts: Literal["validation", "all"] = "validation"
    seed: int = 0


class PeheReport(BaseModel):
    n_contexts: int
    contexts: Literal["validation", "all"]
    n_treatments: int
    pehe: float = Field(ge=0)
    # mean tau_{i,i+1}^2 over contexts, i = 1..n-1
    adjacent_tau_sq: List[float]
    adjacent_bound: float = Field(ge=0)
    adjacent_bound_holds: bool
    treatment_counts: List[int]
    factual_losses: List[float]
    # eps_{i,i+1} = eps_F(T_i) + eps_F(T_{i+1})
    pairwise_factual: List[float]
    ipm_terms: List[float]
    ipm_sum: float = Field(ge=0)
    beta: float
    theorem_rhs: float = Field(ge=0)
    # pehe above the surrogate; reported, never failed on
    theorem_rhs_exceeded: bool
    monotonicity_rate: float
