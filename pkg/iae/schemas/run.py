from typing import Dict, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from iae.schemas.bidding import SimulationConfig
from iae.schemas.evaluation import EvalOptions
from iae.schemas.model import ArchitectureConfig
from iae.schemas.synthetic import GenConfig
from iae.schemas.train import TrainConfig

MANIFEST_FORMAT = "iae-run"


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Literal["generate", "train", "evaluate", "simulate"]
    seed: Optional[int] = None
    out: str
    # input artifact paths: dataset, checkpoint, auction_log
    inputs: Dict[str, str] = Field(default_factory=dict)
    generate: Optional[GenConfig] = None
    model: Optional[ArchitectureConfig] = None
    train: Optional[TrainConfig] = None
    evaluate: Optional[EvalOptions] = None
    simulate: Optional[SimulationConfig] = None


class RunManifest(BaseModel):
    format: Literal["iae-run"] = MANIFEST_FORMAT
    version: int = 1
    command: str
    config: RunConfig
    # artifact file name -> sha256 hex digest
    artifacts: Dict[str, str]
    inputs: Dict[str, str] = Field(default_factory=dict)
