"""Training loop for the representation + shared hypothesis network.

Per minibatch of size m the objective is

    (2/m) sum_i w_i L_i  -  (mu_1/m) sum_{t_i = 1} L_i  -  (mu_n/m) sum_{t_i = n} L_i
    + lam * ||V||^2  +  beta * sum_{i=1}^{n-1} IPM(p_Phi^{T_i}, p_Phi^{T_{i+1}})

with squared loss L, w_i = mu_{t_i}, and mu_j taken from the whole training
split. Indicator sums range over the batch.

Gradients: g1 is the IPM sum w.r.t. the representation weights, g2 and g3 the
corrected weighted factual loss w.r.t. hypothesis and representation weights.
The Adam step consumes beta * g1 + g3 for the representation and
g2 + 2 * lam * V for the hypothesis weights (biases: g2 only).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from iae.core.errors import IaeError, NonFiniteError, PositivityError, TrainingDivergedError
from iae.crud.dataset import DatasetCRUD
from iae.models.dataset import Dataset
from iae.models.network import Model
from iae.schemas.dataset import StandardizationStats
from iae.schemas.model import ArchitectureConfig, ModelConfig, TrainingSplit
from iae.schemas.train import EpochRecord, TrainConfig, TrainReport
from iae.services.ipm import AdjacentIpm, adjacent_ipm_sum
from iae.tensor.adam import AdamState, adam_step
from iae.tensor.tape import Tape, Tensor

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


def sample_coefficients(treatments: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Effective factual weight mu_{t_i} * (2 - 1[t_i is an endpoint]) / m."""
    treatments = np.asarray(treatments)
    n = mu.size
    endpoint = (treatments == 1) | (treatments == n)
    return mu[treatments - 1] * (2.0 - endpoint) / treatments.size


@dataclass
class ObjectiveTerms:
    weighted_factual: float
    endpoint_correction: float
    l2_penalty: float
    ipm_sum: float
    ipm_penalty: float
    total: float
    skipped_pairs: List[int] = field(default_factory=list)

    @property
    def factual(self) -> float:
        return self.weighted_factual - self.endpoint_correction


@dataclass
class ObjectiveGraph:
    """One recorded forward pass: the tape, its leaves and the two loss heads."""

    tape: Tape
    variables: Dict[str, Tensor]
    factual: Tensor
    ipm: AdjacentIpm
    losses: np.ndarray
    coefficients: np.ndarray
    terms: ObjectiveTerms


def objective(
    model: Model,
    contexts: np.ndarray,
    treatments: np.ndarray,
    outcomes: np.ndarray,
    mu: np.ndarray,
    cfg: TrainConfig,
    rows: Optional[np.ndarray] = None,
) -> ObjectiveGraph:
    """Record the minibatch objective on a fresh tape.

    ``rows`` are the dataset row numbers of the batch, used in diagnostics.
    """
    if len(treatments) == 0:
        raise IaeError("objective of an empty batch")
    treatments = np.asarray(treatments)
    n = model.n_treatments
    m = treatments.size

    tape = Tape()
    variables = model.bind(tape)
    rep = model.forward_representation(tape, variables, contexts)
    predictions = model.forward_hypothesis(tape, variables, rep, treatments)
    squared = tape.square(predictions - tape.constant(outcomes))

    losses = squared.values
    if not np.all(np.isfinite(losses)):
        bad = int(np.argmax(~np.isfinite(losses)))
        row = int(rows[bad]) if rows is not None else bad
        raise NonFiniteError(f"non-finite factual loss at sample {row} (term: factual)")

    coefficients = sample_coefficients(treatments, mu)
    factual = tape.reduce_sum(squared * tape.constant(coefficients))

    ipm = adjacent_ipm_sum(tape, rep, treatments, n, cfg.ipm)
    for pair, value in ipm.terms.items():
        if not np.isfinite(value):
            raise NonFiniteError(f"non-finite IPM for treatment pair ({pair}, {pair + 1})")

    weights = mu[treatments - 1]
    endpoint = (treatments == 1) | (treatments == n)
    weighted_factual = float(np.sum(2.0 * weights * losses) / m)
    endpoint_correction = float(np.sum(weights * endpoint * losses) / m)
    l2_penalty = cfg.lam * model.l2_norm()
    ipm_sum = ipm.total.item()
    ipm_penalty = cfg.beta * ipm_sum
    terms = ObjectiveTerms(
        weighted_factual=weighted_factual,
        endpoint_correction=endpoint_correction,
        l2_penalty=l2_penalty,
        ipm_sum=ipm_sum,
        ipm_penalty=ipm_penalty,
        total=weighted_factual - endpoint_correction + l2_penalty + ipm_penalty,
        skipped_pairs=list(ipm.skipped),
    )
    return ObjectiveGraph(
        tape=tape,
        variables=variables,
        factual=factual,
        ipm=ipm,
        losses=losses,
        coefficients=coefficients,
        terms=terms,
    )


def gradients(graph: ObjectiveGraph, model: Model, cfg: TrainConfig) -> Params:
    """Combined raw gradients per parameter tensor, ready for Adam."""
    factual_grads = graph.tape.backward(graph.factual)
    ipm_grads: Params = {}
    if cfg.beta > 0 and graph.ipm.terms:
        ipm_grads = graph.tape.backward(graph.ipm.total)

    grads: Params = {}
    for name in model.representation_names:
        # beta * g1 + g3
        grad = factual_grads[name]
        if name in ipm_grads:
            grad = grad + cfg.beta * ipm_grads[name]
        grads[name] = grad
    for name in model.hypothesis_names:
        # g2 (+ 2 * lam * V for weight matrices)
        grad = factual_grads[name]
        if name.endswith(".weight"):
            grad = grad + 2.0 * cfg.lam * model.params[name]
        grads[name] = grad
    return grads


def validation_loss(model: Model, dataset: Dataset) -> float:
    predictions = model.predict(dataset.contexts, dataset.treatments)
    return float(np.mean((predictions - dataset.outcomes) ** 2))


def _resolve_config(
    architecture: Union[ArchitectureConfig, ModelConfig], dataset: Dataset
) -> ModelConfig:
    if isinstance(architecture, ModelConfig):
        if (architecture.context_dim, architecture.n_treatments) != (
            dataset.context_dim,
            dataset.n_treatments,
        ):
            raise IaeError("model config dims differ from the dataset", exit_code=2)
        return architecture
    return ModelConfig.from_architecture(architecture, dataset.context_dim, dataset.n_treatments)


def _check_positivity(dataset: Dataset, label: str) -> None:
    empty = [j + 1 for j, count in enumerate(dataset.counts) if count == 0]
    if empty:
        raise PositivityError(f"treatments {empty} have no samples in the {label}; refusing to train")


def train(
    dataset: Dataset,
    architecture: Union[ArchitectureConfig, ModelConfig],
    cfg: TrainConfig,
) -> Tuple[Model, TrainReport]:
    """Fit the model; returns the best-validation parameters and the epoch log."""
    _check_positivity(dataset, "dataset")
    train_rows, val_rows = DatasetCRUD.split(len(dataset), cfg.validation_fraction, cfg.seed)
    train_set, val_set = dataset.subset(train_rows), dataset.subset(val_rows)
    _check_positivity(train_set, "training split")

    config = _resolve_config(architecture, dataset)
    standardization = StandardizationStats.fit(
        train_set.contexts, dataset.feature_schema.one_hot_mask()
    )
    split = TrainingSplit(
        n_rows=len(dataset), validation_fraction=cfg.validation_fraction, seed=cfg.seed
    )
    model = Model.initialize(config, standardization).with_training_split(split)
    mu = train_set.mu

    report = TrainReport(
        n_train=len(train_set),
        n_val=len(val_set),
        treatment_weights=mu.tolist(),
    )
    if cfg.max_epochs == 0:
        report.stop_reason = "zero_epochs"
        logger.info("max_epochs is 0; returning the initialized model")
        return model, report

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.fresh(cfg.adam)
    best_params: Params = model.params
    best_val = np.inf
    patience_ref = np.inf
    stalled = 0
    last_good: Optional[int] = None

    for epoch in range(1, cfg.max_epochs + 1):
        totals = np.zeros(6)
        batches = 0
        skipped = 0
        try:
            for batch in DatasetCRUD.minibatches(len(train_set), cfg.batch_size, rng):
                graph = objective(
                    model,
                    train_set.contexts[batch],
                    train_set.treatments[batch],
                    train_set.outcomes[batch],
                    mu,
                    cfg,
                    rows=train_rows[batch],
                )
                terms = graph.terms
                if not np.isfinite(terms.total):
                    raise NonFiniteError(f"objective is {terms.total} at batch {batches + 1}")
                params, state = adam_step(model.params, gradients(graph, model, cfg), state)
                model = model.with_params(params)
                totals += [
                    terms.weighted_factual,
                    terms.endpoint_correction,
                    terms.l2_penalty,
                    terms.ipm_sum,
                    terms.ipm_penalty,
                    terms.total,
                ]
                batches += 1
                skipped += len(terms.skipped_pairs)
            val_factual = validation_loss(model, val_set)
            if not np.isfinite(val_factual):
                raise NonFiniteError(f"validation factual loss is {val_factual}")
        except NonFiniteError as exc:
            logger.error(f"training diverged in epoch {epoch}: {exc.detail}")
            raise TrainingDivergedError(f"epoch {epoch}: {exc.detail}", last_good)

        means = totals / batches
        record = EpochRecord(
            epoch=epoch,
            weighted_factual=means[0],
            endpoint_correction=means[1],
            l2_penalty=means[2],
            ipm_sum=means[3],
            ipm_penalty=means[4],
            objective=means[5],
            val_factual=val_factual,
            batches=batches,
            skipped_ipm_pairs=skipped,
        )
        report.epochs.append(record)
        last_good = epoch
        logger.info(
            f"epoch {epoch}: objective={record.objective:.6g} "
            f"ipm_sum={record.ipm_sum:.6g} val_factual={val_factual:.6g}"
        )

        if val_factual < best_val:
            best_val = val_factual
            best_params = model.params
            report.best_epoch = epoch
            report.best_val_factual = val_factual
        if not np.isfinite(patience_ref) or (
            patience_ref - val_factual > cfg.tolerance * abs(patience_ref)
        ):
            patience_ref = val_factual
            stalled = 0
        else:
            stalled += 1
            if stalled >= cfg.patience:
                report.stop_reason = "converged"
                logger.info(f"converged after {epoch} epochs (best epoch {report.best_epoch})")
                break

    return model.with_params(best_params), report


def epoch_frame(report: TrainReport) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "epoch": [r.epoch for r in report.epochs],
            "factual": [r.weighted_factual - r.endpoint_correction for r in report.epochs],
            "ipm_sum": [r.ipm_sum for r in report.epochs],
            "objective": [r.objective for r in report.epochs],
            "val_factual": [r.val_factual for r in report.epochs],
        },
        columns=["epoch", "factual", "ipm_sum", "objective", "val_factual"],
    )


def write_epoch_csv(report: TrainReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    epoch_frame(report).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
