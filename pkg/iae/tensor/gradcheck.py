from typing import Callable, Dict

import numpy as np

Params = Dict[str, np.ndarray]


def numerical_gradient(
    loss_fn: Callable[[Params], float], params: Params, step: float = 1e-5
) -> Params:
    """Central finite differences of ``loss_fn`` w.r.t. every entry of ``params``."""
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        flat = grad.reshape(-1)
        for index in range(value.size):
            shifted = {k: v.copy() for k, v in params.items()}
            shifted[name].reshape(-1)[index] += step
            upper = loss_fn(shifted)
            shifted[name].reshape(-1)[index] -= 2.0 * step
            lower = loss_fn(shifted)
            flat[index] = (upper - lower) / (2.0 * step)
        grads[name] = grad
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
