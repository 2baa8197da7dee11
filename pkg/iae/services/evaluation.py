"""PEHE and the checkable pieces of the PEHE bound on synthetic data.

Any estimator exposing ``predict_all(x) -> (m, n)`` can be evaluated; the
IPM terms additionally need a ``represent`` method (a trained ``Model``).
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from iae.core.errors import GroundTruthMissingError, InputError, InvariantViolationError
from iae.crud.dataset import DatasetCRUD
from iae.models.dataset import Dataset
from iae.models.ground_truth import GroundTruth
from iae.schemas.evaluation import EvalOptions, PeheReport
from iae.services.ipm import ipm_value

logger = logging.getLogger(__name__)

# slack for the adjacent-pair inequality, relative to its right-hand side
_BOUND_SLACK = 1e-9


def _require(gt: Optional[GroundTruth]) -> GroundTruth:
    if gt is None:
        raise GroundTruthMissingError()
    return gt


def _estimation_errors(model, gt: GroundTruth, contexts: np.ndarray) -> np.ndarray:
    """d_i(x) = f(x, T_i) - m_i(x) as an (m, n) array; tau_{i,j} = d_j - d_i."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    if contexts.shape[0] == 0:
        raise InputError("evaluation needs at least one context")
    return np.atleast_2d(model.predict_all(contexts)) - gt.potential_outcomes(contexts)


def tau(model, gt: Optional[GroundTruth], x, i: int, j: int):
    """tau_{i,j}(x) = alpha_hat_{i,j}(x) - alpha_{i,j}(x), 1-based indices."""
    gt = _require(gt)
    n = gt.n_treatments
    if not (1 <= i <= n and 1 <= j <= n):
        raise InputError(f"treatment indices ({i}, {j}) outside 1..{n}")
    errors = _estimation_errors(model, gt, x)
    values = errors[:, j - 1] - errors[:, i - 1]
    return float(values[0]) if np.asarray(x).ndim == 1 else values


def tau_matrix(model, gt: GroundTruth, contexts: np.ndarray) -> np.ndarray:
    errors = _estimation_errors(model, gt, contexts)
    return errors[:, None, :] - errors[:, :, None]


def pehe(model, gt: Optional[GroundTruth], contexts: np.ndarray) -> float:
    """(1 / (n (n - 1))) * mean over contexts of sum_{i != j} tau_{i,j}^2."""
    gt = _require(gt)
    n = gt.n_treatments
    squared = tau_matrix(model, gt, contexts) ** 2
    return float(np.mean(squared.sum(axis=(1, 2))) / (n * (n - 1)))


def adjacent_tau_squares(model, gt: GroundTruth, contexts: np.ndarray) -> List[float]:
    """mean tau_{i,i+1}^2 over contexts for i = 1..n-1."""
    errors = _estimation_errors(model, gt, contexts)
    return np.mean(np.diff(errors, axis=1) ** 2, axis=0).tolist()


def factual_losses(model, dataset: Dataset) -> List[float]:
    """eps_F^{T_i}: mean squared factual error among samples treated with T_i."""
    predictions = np.atleast_2d(model.predict_all(dataset.contexts))
    factual = predictions[np.arange(len(dataset)), dataset.treatments - 1]
    squared = (factual - dataset.outcomes) ** 2
    losses = []
    for j in range(1, dataset.n_treatments + 1):
        treated = dataset.treatments == j
        if not treated.any():
            logger.warning(f"no samples with treatment {j}; its factual loss is reported as 0")
            losses.append(0.0)
            continue
        losses.append(float(squared[treated].mean()))
    return losses


def representation_ipm(model, dataset: Dataset, options: EvalOptions) -> List[float]:
    """IPM between representation clouds of adjacent treatments (0 if not computable)."""
    n = dataset.n_treatments
    if not hasattr(model, "represent"):
        return [0.0] * (n - 1)
    rng = np.random.default_rng(options.seed)
    clouds = {}
    for j in range(1, n + 1):
        rows = np.flatnonzero(dataset.treatments == j)
        if rows.size > options.max_cloud_size:
            rows = np.sort(rng.choice(rows, size=options.max_cloud_size, replace=False))
        clouds[j] = model.represent(dataset.contexts[rows]) if rows.size else None

    terms = []
    for i in range(1, n):
        p, q = clouds[i], clouds[i + 1]
        if p is None or q is None or min(len(p), len(q)) < options.ipm.min_cloud_size:
            logger.warning(f"IPM pair ({i}, {i + 1}) has too few samples; reported as 0")
            terms.append(0.0)
            continue
        terms.append(ipm_value(p, q, options.ipm))
    return terms


def evaluation_rows(model, dataset: Dataset, options: EvalOptions) -> Tuple[Dataset, str]:
    """The rows PEHE is scored on and their label.

    With ``contexts="validation"`` a checkpoint that recorded its training
    split is scored on the rows it never fitted; anything else sees every row.
    """
    split = getattr(model, "training_split", None)
    if options.contexts == "all":
        return dataset, "all"
    if split is None:
        logger.info("estimator has no recorded training split; evaluating on every row")
        return dataset, "all"
    if split.n_rows != len(dataset):
        raise InputError(
            f"checkpoint was trained on {split.n_rows} rows but the dataset has {len(dataset)}; "
            "pass contexts=all to score it anyway"
        )
    _, val_rows = DatasetCRUD.split(split.n_rows, split.validation_fraction, split.seed)
    return dataset.subset(val_rows), "validation"


def monotonicity_rate(model, contexts: np.ndarray) -> float:
    """Share of contexts whose estimated f(x, T_i) is non-decreasing in i."""
    f = np.atleast_2d(model.predict_all(contexts))
    return float(np.mean(np.all(np.diff(f, axis=1) >= 0, axis=1)))


def bound_check(
    model,
    gt: Optional[GroundTruth],
    dataset: Dataset,
    options: Optional[EvalOptions] = None,
) -> PeheReport:
    """Evaluate PEHE, the adjacent-pair bound and the factual + IPM surrogate."""
    gt = _require(gt)
    options = options or EvalOptions()
    if gt.n_treatments != dataset.n_treatments:
        raise InputError("ground truth and dataset disagree on the treatment count")

    dataset, label = evaluation_rows(model, dataset, options)
    contexts = dataset.contexts
    value = pehe(model, gt, contexts)
    adjacent = adjacent_tau_squares(model, gt, contexts)
    bound = float(sum(adjacent))
    holds = value <= bound * (1.0 + _BOUND_SLACK) + _BOUND_SLACK
    if not holds:
        raise InvariantViolationError(
            f"PEHE {value!r} exceeds the adjacent-pair bound {bound!r}"
        )

    losses = factual_losses(model, dataset)
    pairwise = [losses[i] + losses[i + 1] for i in range(dataset.n_treatments - 1)]
    ipm_terms = representation_ipm(model, dataset, options)
    ipm_sum = float(sum(ipm_terms))
    theorem_rhs = 2.0 * sum(eps + options.beta * ipm for eps, ipm in zip(pairwise, ipm_terms))
    exceeded = value > theorem_rhs
    if exceeded:
        logger.warning(f"PEHE {value:.6g} above the factual + IPM surrogate {theorem_rhs:.6g}")

    report = PeheReport(
        n_contexts=len(dataset),
        contexts=label,
        n_treatments=dataset.n_treatments,
        pehe=value,
        adjacent_tau_sq=adjacent,
        adjacent_bound=bound,
        adjacent_bound_holds=holds,
        treatment_counts=dataset.counts.tolist(),
        factual_losses=losses,
        pairwise_factual=pairwise,
        ipm_terms=ipm_terms,
        ipm_sum=ipm_sum,
        beta=options.beta,
        theorem_rhs=theorem_rhs,
        theorem_rhs_exceeded=exceeded,
        monotonicity_rate=monotonicity_rate(model, contexts),
    )
    logger.info(f"pehe={value:.6g} adjacent_bound={bound:.6g} surrogate={theorem_rhs:.6g}")
    return report
