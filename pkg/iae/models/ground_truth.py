import numpy as np
from scipy.special import expit, softmax

from iae.core.errors import InputError
from iae.schemas.synthetic import GroundTruthParams


class GroundTruth:
    """Closed-form potential outcomes of a synthetic world.

    m_i(x) = base(x) + lift(x) * g(i - 1), with g(0) = 0. The ``saturating``
    form uses g(k) = 1 - (1 - k / (n - 1))^2, which is non-decreasing and
    concave, so the true IAE matrix is monotone. The ``linear`` form uses
    g(k) = k with base and lift linear in x.

    Exposes ``predict_all`` and ``iae_matrix`` so it can stand in for a
    trained model (the oracle).
    """

    def __init__(self, params: GroundTruthParams):
        self.params = params
        self._center = np.asarray(params.center)
        self._base_coef = np.asarray(params.base_coef)
        self._lift_coef = np.asarray(params.lift_coef)
        self._assign_coef = np.asarray(params.assign_coef)

    @property
    def n_treatments(self) -> int:
        return self.params.n_treatments

    @property
    def context_dim(self) -> int:
        return self._center.size

    def _contexts(self, x) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if contexts.shape[1] != self.context_dim:
            raise InputError(
                f"context must have dim {self.context_dim}, got {contexts.shape[1]}"
            )
        return contexts

    def _index(self, contexts: np.ndarray, coef: np.ndarray) -> np.ndarray:
        return (contexts - self._center) @ coef

    def base(self, x) -> np.ndarray:
        index = self._index(self._contexts(x), self._base_coef)
        p = self.params
        if p.form == "linear":
            return p.base_floor + p.base_scale * index
        return p.base_floor + p.base_scale * np.logaddexp(0.0, index)

    def lift(self, x) -> np.ndarray:
        index = self._index(self._contexts(x), self._lift_coef)
        p = self.params
        if p.form == "linear":
            return 0.5 * (p.lift_low + p.lift_high) + 0.1 * (p.lift_high - p.lift_low) * index
        return p.lift_low + (p.lift_high - p.lift_low) * expit(index)

    def curve(self, clicks) -> np.ndarray:
        k = np.asarray(clicks, dtype=np.float64)
        if self.params.form == "linear":
            return k
        return 1.0 - (1.0 - k / (self.n_treatments - 1)) ** 2

    def potential_outcomes(self, x) -> np.ndarray:
        """m_i(x) for i = 1..n as an (m, n) array."""
        contexts = self._contexts(x)
        levels = self.curve(np.arange(self.n_treatments))
        return self.base(contexts)[:, None] + self.lift(contexts)[:, None] * levels[None, :]

    def predict_all(self, x) -> np.ndarray:
        outcomes = self.potential_outcomes(x)
        return outcomes[0] if np.asarray(x).ndim == 1 else outcomes

    def iae_matrix(self, x) -> np.ndarray:
        f = self.potential_outcomes(x)
        alpha = f[:, None, :] - f[:, :, None]
        return alpha[0] if np.asarray(x).ndim == 1 else alpha

    def true_iae(self, x, i: int, j: int) -> float:
        """alpha_{i,j}(x) = m_j(x) - m_i(x) for one context, 1-based indices."""
        n = self.n_treatments
        if not (1 <= i <= n and 1 <= j <= n):
            raise InputError(f"treatment indices ({i}, {j}) outside 1..{n}")
        outcomes = self.potential_outcomes(np.asarray(x, dtype=np.float64).reshape(1, -1))[0]
        return float(outcomes[j - 1] - outcomes[i - 1])

    def assignment_score(self, x) -> np.ndarray:
        """Bounded score in (-1, 1), correlated with the lift index."""
        contexts = self._contexts(x)
        rho = self.params.assignment_correlation
        mixed = rho * self._index(contexts, self._lift_coef) + np.sqrt(
            1.0 - rho * rho
        ) * self._index(contexts, self._assign_coef)
        return np.tanh(mixed)

    def assignment_probabilities(self, x) -> np.ndarray:
        """softmax over treatments of b * score(x) * (i - 1) / (n - 1).

        Logits differ by at most 2b, so every treatment keeps probability
        at least exp(-2b) / n.
        """
        score = self.assignment_score(x)
        steps = np.arange(self.n_treatments) / (self.n_treatments - 1)
        logits = self.params.selection_bias * score[:, None] * steps[None, :]
        return softmax(logits, axis=1)

    def positivity_floor(self) -> float:
        return float(np.exp(-2.0 * self.params.selection_bias) / self.n_treatments)
