from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from iae.core.errors import NonFiniteError
from iae.schemas.train import AdamConfig

Params = Dict[str, np.ndarray]


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    epsilon: float
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)

    @classmethod
    def fresh(cls, config: AdamConfig) -> "AdamState":
        return cls(
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            epsilon=config.epsilon,
        )


def adam_step(params: Params, grads: Params, state: AdamState) -> Tuple[Params, AdamState]:
    """One bias-corrected Adam update; returns new parameter and state objects.

    ``grads`` must already hold the combined raw gradient per tensor (for the
    hypothesis weights that includes the 2*lambda*V term).
    """
    for name, grad in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if grad.shape != params[name].shape:
            raise ValueError(
                f"gradient shape {grad.shape} != parameter shape {params[name].shape} for {name}"
            )
        if not np.all(np.isfinite(grad)):
            bad = int(np.argmax(~np.isfinite(grad).ravel()))
            raise NonFiniteError(
                f"non-finite gradient for {name} at flat index {bad} (step {state.step + 1})"
            )

    step = state.step + 1
    bias1 = 1.0 - state.beta1**step
    bias2 = 1.0 - state.beta2**step

    new_params: Params = {}
    first: Params = {}
    second: Params = {}
    for name, value in params.items():
        grad = grads.get(name)
        m = state.first_moment.get(name, np.zeros_like(value))
        v = state.second_moment.get(name, np.zeros_like(value))
        if grad is None:
            new_params[name], first[name], second[name] = value, m, v
            continue
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        first[name], second[name] = m, v

    new_state = AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
        step=step,
        first_moment=first,
        second_moment=second,
    )
    return new_params, new_state
