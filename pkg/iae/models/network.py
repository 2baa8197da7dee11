"""Representation network Phi and shared hypothesis h, f(x, T) = h(Phi(x), T).

Parameter names:
    rep.{l}.weight / rep.{l}.bias   for l = 0..rep_depth-1 (last layer linear)
    hyp.{l}.weight / hyp.{l}.bias   for l = 0..hyp_depth-1 (hidden layers)
    hyp.out.weight / hyp.out.bias   scalar output layer

Representation weights enter the forward pass multiplied by a fixed
1/sqrt(fan_in); their raw initialization is scaled up by sqrt(fan_in) so the
effective weights start Glorot-uniform.

The treatment enters h as one scalar channel (i - 1) / (n - 1) appended to
the representation. All public methods speak 1-based treatment indices and
raw (unstandardized) contexts.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from iae.core.errors import InputError, InvariantViolationError
from iae.schemas.dataset import StandardizationStats
from iae.schemas.model import ModelConfig, ModelSidecar, TrainingSplit
from iae.tensor.checkpoint import load_tensors, save_tensors
from iae.tensor.tape import Tape, Tensor

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


def sidecar_path(checkpoint: Union[str, Path]) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.stem + ".config.json")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Model:
    def __init__(
        self,
        config: ModelConfig,
        params: Params,
        standardization: Optional[StandardizationStats] = None,
        training_split: Optional[TrainingSplit] = None,
    ):
        self.config = config
        self.training_split = training_split
        self.params = {name: np.asarray(v, dtype=np.float64) for name, v in params.items()}
        self.standardization = standardization or StandardizationStats.identity(
            config.context_dim
        )
        self._check()

    # construction

    @classmethod
    def initialize(
        cls, config: ModelConfig, standardization: Optional[StandardizationStats] = None
    ) -> "Model":
        rng = np.random.default_rng(config.seed)
        params: Params = {}
        for layer, (fan_in, fan_out) in enumerate(cls._rep_dims(config)):
            params[f"rep.{layer}.weight"] = _glorot(rng, fan_in, fan_out) * np.sqrt(fan_in)
            params[f"rep.{layer}.bias"] = np.zeros(fan_out)
        for layer, (fan_in, fan_out) in enumerate(cls._hyp_dims(config)):
            name = "out" if layer == config.hyp_depth else str(layer)
            params[f"hyp.{name}.weight"] = _glorot(rng, fan_in, fan_out)
            params[f"hyp.{name}.bias"] = np.zeros(fan_out)
        return cls(config, params, standardization)

    @staticmethod
    def _rep_dims(config: ModelConfig) -> List[Tuple[int, int]]:
        widths = [config.context_dim] + [config.rep_width] * config.rep_depth
        return list(zip(widths[:-1], widths[1:]))

    @staticmethod
    def _hyp_dims(config: ModelConfig) -> List[Tuple[int, int]]:
        widths = [config.rep_width + 1] + [config.hyp_width] * config.hyp_depth + [1]
        return list(zip(widths[:-1], widths[1:]))

    def _check(self) -> None:
        expected = {}
        for layer, (fan_in, fan_out) in enumerate(self._rep_dims(self.config)):
            expected[f"rep.{layer}.weight"] = (fan_in, fan_out)
            expected[f"rep.{layer}.bias"] = (fan_out,)
        for layer, (fan_in, fan_out) in enumerate(self._hyp_dims(self.config)):
            name = "out" if layer == self.config.hyp_depth else str(layer)
            expected[f"hyp.{name}.weight"] = (fan_in, fan_out)
            expected[f"hyp.{name}.bias"] = (fan_out,)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise InvariantViolationError(
                f"parameter set mismatch (missing={missing}, unexpected={extra})"
            )
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise InvariantViolationError(
                    f"{name} has shape {self.params[name].shape}, expected {shape}"
                )
            if not np.all(np.isfinite(self.params[name])):
                raise InvariantViolationError(f"{name} holds non-finite values")
        if len(self.standardization.mean) != self.config.context_dim:
            raise InvariantViolationError("standardization width differs from context_dim")

    # parameter groups

    @property
    def n_treatments(self) -> int:
        return self.config.n_treatments

    @property
    def representation_names(self) -> List[str]:
        return [name for name in self.params if name.startswith("rep.")]

    @property
    def hypothesis_names(self) -> List[str]:
        return [name for name in self.params if name.startswith("hyp.")]

    @property
    def hypothesis_weight_names(self) -> List[str]:
        return [name for name in self.hypothesis_names if name.endswith(".weight")]

    def l2_norm(self) -> float:
        """Squared Frobenius norm of the hypothesis weight matrices (biases excluded)."""
        return float(sum(np.sum(self.params[n] ** 2) for n in self.hypothesis_weight_names))

    def with_params(self, params: Params) -> "Model":
        return Model(self.config, params, self.standardization, self.training_split)

    def with_training_split(self, split: TrainingSplit) -> "Model":
        return Model(self.config, self.params, self.standardization, split)

    # tape forward passes

    def bind(self, tape: Tape, trainable: bool = True) -> Dict[str, Tensor]:
        if trainable:
            return {name: tape.variable(v, name) for name, v in self.params.items()}
        return {name: tape.constant(v) for name, v in self.params.items()}

    def _activate(self, tape: Tape, z: Tensor) -> Tensor:
        return tape.unary(self.config.nonlinearity, z)

    def forward_representation(
        self, tape: Tape, variables: Mapping[str, Tensor], contexts: np.ndarray
    ) -> Tensor:
        hidden = tape.constant(self.standardization.apply(contexts))
        depth = self.config.rep_depth
        for layer, (fan_in, _) in enumerate(self._rep_dims(self.config)):
            z = tape.matmul(hidden, variables[f"rep.{layer}.weight"]) * (1.0 / np.sqrt(fan_in))
            z = z + variables[f"rep.{layer}.bias"]
            hidden = self._activate(tape, z) if layer < depth - 1 else z
        return hidden

    def forward_hypothesis(
        self,
        tape: Tape,
        variables: Mapping[str, Tensor],
        representation: Tensor,
        treatments: np.ndarray,
    ) -> Tensor:
        level = (np.asarray(treatments, dtype=np.float64) - 1.0) / (self.n_treatments - 1)
        hidden = tape.concat([representation, tape.constant(level.reshape(-1, 1))], axis=1)
        for layer in range(self.config.hyp_depth):
            z = tape.matmul(hidden, variables[f"hyp.{layer}.weight"])
            hidden = self._activate(tape, z + variables[f"hyp.{layer}.bias"])
        out = tape.matmul(hidden, variables["hyp.out.weight"]) + variables["hyp.out.bias"]
        return tape.reshape(out, (out.shape[0],))

    # inference

    def _contexts(self, x) -> Tuple[np.ndarray, bool]:
        contexts = np.asarray(x, dtype=np.float64)
        single = contexts.ndim == 1
        if single:
            contexts = contexts[None, :]
        if contexts.ndim != 2 or contexts.shape[1] != self.config.context_dim:
            raise InputError(
                f"context must have dim {self.config.context_dim}, got shape {np.shape(x)}"
            )
        if not np.all(np.isfinite(contexts)):
            raise InputError("context holds non-finite entries")
        return contexts, single

    def _check_treatment(self, treatment) -> None:
        values = np.atleast_1d(treatment)
        if np.any(values < 1) or np.any(values > self.n_treatments):
            raise InputError(
                f"treatment index {treatment} outside 1..{self.n_treatments}"
            )

    def represent(self, x) -> np.ndarray:
        contexts, single = self._contexts(x)
        tape = Tape()
        rep = self.forward_representation(tape, self.bind(tape, trainable=False), contexts)
        return rep.values[0] if single else rep.values

    def predict(self, x, treatment) -> Union[float, np.ndarray]:
        contexts, single = self._contexts(x)
        self._check_treatment(treatment)
        treatments = np.broadcast_to(np.asarray(treatment), (contexts.shape[0],))
        tape = Tape()
        variables = self.bind(tape, trainable=False)
        rep = self.forward_representation(tape, variables, contexts)
        out = self.forward_hypothesis(tape, variables, rep, treatments).values
        return float(out[0]) if single else out

    def predict_all(self, x) -> np.ndarray:
        """f(x, T_i) for every treatment; shape (m, n) (or (n,) for one context)."""
        contexts, single = self._contexts(x)
        tape = Tape()
        variables = self.bind(tape, trainable=False)
        rep = self.forward_representation(tape, variables, contexts)
        columns = [
            self.forward_hypothesis(
                tape, variables, rep, np.full(contexts.shape[0], i)
            ).values
            for i in range(1, self.n_treatments + 1)
        ]
        outcomes = np.stack(columns, axis=1)
        return outcomes[0] if single else outcomes

    def iae_matrix(self, x) -> np.ndarray:
        """alpha_hat[i, j] = f(x, T_j) - f(x, T_i) (0-based array positions)."""
        contexts, single = self._contexts(x)
        f = self.predict_all(contexts)
        alpha = f[:, None, :] - f[:, :, None]
        return alpha[0] if single else alpha

    # persistence

    def save(self, path: Union[str, Path]) -> Path:
        path = save_tensors(path, self.params)
        sidecar = ModelSidecar(
            config=self.config,
            standardization=self.standardization,
            training_split=self.training_split,
        )
        sidecar_path(path).write_text(sidecar.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"saved model checkpoint to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Model":
        path = Path(path)
        side = sidecar_path(path)
        if not side.exists():
            raise InputError(f"model sidecar not found: {side}")
        sidecar = ModelSidecar.model_validate_json(side.read_text(encoding="utf-8"))
        return cls(
            sidecar.config, load_tensors(path), sidecar.standardization, sidecar.training_split
        )
