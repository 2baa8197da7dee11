"""Wasserstein-1 distance between representation clouds of adjacent treatments.

``sinkhorn`` runs a log-domain entropic Sinkhorn loop with a fixed number of
iterations recorded on the tape, so its gradient is the exact derivative of
the unrolled loop. The epsilon schedule is computed from the cost values and
held constant during differentiation. With ``tolerance`` set the loop runs on at
the target epsilon until the plan's row marginals converge; the iteration
count is then fixed by the forward values. ``exact-1d`` is the sorted-matching
oracle for one-dimensional representations.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.special import logsumexp
from scipy.stats import wasserstein_distance

from iae.core.errors import InputError, NonFiniteError
from iae.schemas.ipm import IpmConfig
from iae.tensor.tape import Tape, Tensor

logger = logging.getLogger(__name__)

_COST_JITTER = 1e-12
# iterations between marginal checks when running to a tolerance
_CHECK_EVERY = 10


@dataclass
class SampleCloud:
    """Rows are samples; weights are uniform."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] == 0:
            raise InputError(f"sample cloud needs at least one row, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("sample cloud holds non-finite entries")
        self.values = values

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(len(self), 1.0 / len(self))


@dataclass
class IpmEstimate:
    distance: float
    grad_p: np.ndarray
    grad_q: np.ndarray


@dataclass
class AdjacentIpm:
    """Sum of IPM terms over adjacent treatment pairs in one batch."""

    total: Tensor
    # keyed by the lower treatment index i of the pair (i, i + 1)
    terms: Dict[int, float] = field(default_factory=dict)
    skipped: List[int] = field(default_factory=list)


def resolve_epsilon(cost: np.ndarray, cfg: IpmConfig) -> float:
    if cfg.epsilon is not None:
        return cfg.epsilon
    if cfg.epsilon_reference == "rms":
        reference = np.sqrt(np.mean(cost**2))
    elif cfg.epsilon_reference == "mean":
        reference = np.mean(cost)
    else:
        reference = np.median(cost)
    return float(max(cfg.epsilon_scale * reference, _COST_JITTER))


def epsilon_schedule(cost: np.ndarray, target: float, cfg: IpmConfig) -> List[float]:
    """Geometric decay from the largest cost to ``target`` over the first half
    of the iterations, then held at ``target``."""
    iterations = cfg.iterations
    start = float(np.max(cost))
    if not cfg.annealing or iterations < 2 or start <= target:
        return [target] * iterations
    ramp = max(iterations // 2, 1)
    decay = [start * (target / start) ** (k / ramp) for k in range(ramp)]
    return decay + [target] * (iterations - ramp)


def _canonical(p: np.ndarray, q: np.ndarray) -> bool:
    """True when (p, q) is already in canonical order."""
    if p.shape[0] != q.shape[0]:
        return p.shape[0] < q.shape[0]
    pv, qv = p.ravel(), q.ravel()
    differ = np.flatnonzero(pv != qv)
    return differ.size == 0 or pv[differ[0]] < qv[differ[0]]


def _check_pair(p: Tensor, q: Tensor) -> None:
    if p.values.ndim != 2 or q.values.ndim != 2:
        raise InputError(f"clouds must be 2-D, got {p.shape} and {q.shape}")
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise InputError("empty sample cloud")
    if p.shape[1] != q.shape[1]:
        raise InputError(f"cloud dims differ: {p.shape[1]} vs {q.shape[1]}")


def _row_violation(
    f: np.ndarray, g: np.ndarray, cost: np.ndarray, eps: float, log_a: float, log_b: float
) -> float:
    """L1 distance between the plan's row sums and the uniform row weights."""
    rows = np.exp(logsumexp((f + g - cost) / eps + (log_a + log_b), axis=1))
    return float(np.sum(np.abs(rows - np.exp(log_a))))


def _run_to_tolerance(step, state, as_array, cost, eps, log_a, log_b, cfg: IpmConfig, done: int):
    """Extra iterations at the target epsilon until the row marginals converge.

    Columns are exact after every g-update, so the row violation bounds the
    gap between the plan's cost and that of a feasible coupling.
    """
    while _row_violation(*map(as_array, state), cost, eps, log_a, log_b) > cfg.tolerance:
        if done >= cfg.max_iterations:
            logger.warning(
                f"sinkhorn stopped after {done} iterations above tolerance {cfg.tolerance:g}"
            )
            break
        for _ in range(min(_CHECK_EVERY, cfg.max_iterations - done)):
            state = step(*state, eps)
            done += 1
    return state


def sinkhorn_on_tape(tape: Tape, p: Tensor, q: Tensor, cfg: IpmConfig) -> Tensor:
    _check_pair(p, q)
    if not _canonical(p.values, q.values):
        p, q = q, p
    m, k = p.shape[0], q.shape[0]
    log_a, log_b = -np.log(m), -np.log(k)

    cost = tape.sqrt(tape.sqdist(p, q) + _COST_JITTER)
    schedule = epsilon_schedule(cost.values, resolve_epsilon(cost.values, cfg), cfg)

    def step(f: Tensor, g: Tensor, eps: float):
        f = tape.logsumexp((g - cost) * (1.0 / eps) + log_b, axis=1, keepdims=True) * -eps
        g = tape.logsumexp((f - cost) * (1.0 / eps) + log_a, axis=0, keepdims=True) * -eps
        return f, g

    state = (tape.constant(np.zeros((m, 1))), tape.constant(np.zeros((1, k))))
    for eps in schedule:
        state = step(*state, eps)
    eps = schedule[-1]
    if cfg.tolerance is not None:
        state = _run_to_tolerance(
            step, state, lambda t: t.values, cost.values, eps, log_a, log_b, cfg, len(schedule)
        )

    f, g = state
    plan = tape.exp((f + g - cost) * (1.0 / eps) + (log_a + log_b))
    return tape.reduce_sum(plan * cost)


def _monotone_coupling(p: np.ndarray, q: np.ndarray):
    """Northwest-corner coupling of the sorted 1-D clouds: (i, j, mass) triples."""
    order_p, order_q = np.argsort(p, kind="stable"), np.argsort(q, kind="stable")
    left_p, left_q = 1.0 / p.size, 1.0 / q.size
    i = j = 0
    while i < p.size and j < q.size:
        mass = min(left_p, left_q)
        yield order_p[i], order_q[j], mass
        left_p -= mass
        left_q -= mass
        if left_p <= 1e-15:
            i += 1
            left_p = 1.0 / p.size
        if left_q <= 1e-15:
            j += 1
            left_q = 1.0 / q.size


def exact_1d_on_tape(tape: Tape, p: Tensor, q: Tensor) -> Tensor:
    _check_pair(p, q)
    if p.shape[1] != 1:
        raise InputError(f"exact-1d needs 1-dimensional representations, got dim {p.shape[1]}")
    pv, qv = p.values[:, 0], q.values[:, 0]
    grad_p, grad_q = np.zeros_like(p.values), np.zeros_like(q.values)
    for i, j, mass in _monotone_coupling(pv, qv):
        direction = np.sign(pv[i] - qv[j])
        grad_p[i, 0] += mass * direction
        grad_q[j, 0] -= mass * direction

    return tape.record(
        "wasserstein_1d",
        (p, q),
        np.asarray(exact_wasserstein_1d(pv, qv)),
        lambda g: (g * grad_p, g * grad_q),
    )


def ipm_on_tape(tape: Tape, p: Tensor, q: Tensor, cfg: IpmConfig) -> Tensor:
    if cfg.method == "exact-1d":
        return exact_1d_on_tape(tape, p, q)
    return sinkhorn_on_tape(tape, p, q, cfg)


def exact_wasserstein_1d(p, q) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.size == 0 or q.size == 0:
        raise InputError("empty sample cloud")
    return float(wasserstein_distance(p, q))


def sinkhorn_value(p: np.ndarray, q: np.ndarray, cfg: IpmConfig) -> float:
    """Same loop as ``sinkhorn_on_tape`` without recording; for large clouds."""
    if not _canonical(p, q):
        p, q = q, p
    log_a, log_b = -np.log(p.shape[0]), -np.log(q.shape[0])
    sq = np.sum(p * p, axis=1)[:, None] + np.sum(q * q, axis=1)[None, :] - 2.0 * p @ q.T
    cost = np.sqrt(np.maximum(sq, 0.0) + _COST_JITTER)
    schedule = epsilon_schedule(cost, resolve_epsilon(cost, cfg), cfg)

    def step(f: np.ndarray, g: np.ndarray, eps: float):
        f = -eps * logsumexp((g - cost) / eps + log_b, axis=1, keepdims=True)
        g = -eps * logsumexp((f - cost) / eps + log_a, axis=0, keepdims=True)
        return f, g

    state = (np.zeros((p.shape[0], 1)), np.zeros((1, q.shape[0])))
    for eps in schedule:
        state = step(*state, eps)
    eps = schedule[-1]
    if cfg.tolerance is not None:
        state = _run_to_tolerance(
            step, state, np.asarray, cost, eps, log_a, log_b, cfg, len(schedule)
        )

    f, g = state
    plan = np.exp((f + g - cost) / eps + (log_a + log_b))
    return float(np.sum(plan * cost))


def ipm_value(p, q, cfg: Optional[IpmConfig] = None) -> float:
    """Distance only, no tape."""
    cfg = cfg or IpmConfig()
    p, q = SampleCloud(p), SampleCloud(q)
    if p.dim != q.dim:
        raise InputError(f"cloud dims differ: {p.dim} vs {q.dim}")
    if cfg.method == "exact-1d":
        if p.dim != 1:
            raise InputError(f"exact-1d needs 1-dimensional representations, got dim {p.dim}")
        return exact_wasserstein_1d(p.values, q.values)
    return max(sinkhorn_value(p.values, q.values, cfg), 0.0)


def ipm_distance(p, q, cfg: Optional[IpmConfig] = None) -> IpmEstimate:
    """Distance between two clouds plus its gradient w.r.t. every sample."""
    cfg = cfg or IpmConfig()
    p, q = SampleCloud(p), SampleCloud(q)
    tape = Tape()
    p_var = tape.variable(p.values, "p")
    q_var = tape.variable(q.values, "q")
    distance = ipm_on_tape(tape, p_var, q_var, cfg)
    grads = tape.backward(distance)
    return IpmEstimate(
        distance=max(distance.item(), 0.0), grad_p=grads["p"], grad_q=grads["q"]
    )


def adjacent_ipm_sum(
    tape: Tape,
    representation: Tensor,
    treatments: np.ndarray,
    n_treatments: int,
    cfg: IpmConfig,
) -> AdjacentIpm:
    """sum_{i=1}^{n-1} IPM(p_Phi^{T_i}, p_Phi^{T_{i+1}}) over the rows of one batch.

    Pairs with fewer than ``cfg.min_cloud_size`` rows on either side contribute 0.
    """
    treatments = np.asarray(treatments)
    rows = {i: np.flatnonzero(treatments == i) for i in range(1, n_treatments + 1)}
    total: Tensor = tape.constant(0.0)
    result = AdjacentIpm(total=total)
    for i in range(1, n_treatments):
        lower, upper = rows[i], rows[i + 1]
        if min(lower.size, upper.size) < cfg.min_cloud_size:
            logger.debug(
                f"skipping IPM pair ({i}, {i + 1}): {lower.size} vs {upper.size} samples"
            )
            result.skipped.append(i)
            continue
        term = ipm_on_tape(
            tape,
            tape.gather(representation, lower),
            tape.gather(representation, upper),
            cfg,
        )
        result.terms[i] = term.item()
        total = total + term
    result.total = total
    return result
