"""Synthetic observational worlds with known potential outcomes.

Contexts follow the feature schema, treatments are drawn from a softmax over
an assignment score correlated with the advertising lift (the confounding the
IPM term corrects), and outcomes are m_t(x) plus Gaussian noise, clipped at 0.
"""

import logging
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import chi2_contingency

from iae.core.errors import InputError
from iae.models.dataset import Dataset
from iae.models.ground_truth import GroundTruth
from iae.schemas.features import FeatureGroup, FeatureSchema
from iae.schemas.synthetic import GenConfig, GroundTruthParams

logger = logging.getLogger(__name__)

# success probability of the geometric rank draws
_RANK_P = 0.05


def _draw_group(group: FeatureGroup, size: int, rng: np.random.Generator) -> np.ndarray:
    if group.kind == "one_hot":
        return np.eye(group.dim)[rng.integers(group.dim, size=size)]
    if not group.log_columns:
        # decayed page-view averages and shop statistics are nonnegative
        return rng.gamma(2.0, 0.5, size=(size, group.dim))

    ranks = rng.geometric(_RANK_P, size=(size, group.dim)).astype(np.float64)
    columns = ranks.copy()
    for col in group.log_columns:
        # a log column follows the raw rank it transforms when there is one
        source = col - 1 if col > 0 and (col - 1) not in group.log_columns else col
        columns[:, col] = np.log1p(ranks[:, source])
    return columns


def draw_contexts(schema: FeatureSchema, size: int, rng: np.random.Generator) -> np.ndarray:
    return np.hstack([_draw_group(group, size, rng) for group in schema.groups])


def _unit_index(
    contexts: np.ndarray, center: np.ndarray, scale: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Random coefficients whose index (x - center) @ coef has unit sample variance."""
    coef = rng.standard_normal(contexts.shape[1]) / scale
    spread = np.std((contexts - center) @ coef)
    return coef / spread if spread > 0 else coef


def generate(cfg: GenConfig) -> Tuple[Dataset, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    schema = cfg.feature_schema or FeatureSchema.default()
    contexts = draw_contexts(schema, cfg.n_samples, rng)

    center = contexts.mean(axis=0)
    scale = contexts.std(axis=0)
    scale = np.where(scale > 1e-12, scale, 1.0)
    base_coef = _unit_index(contexts, center, scale, rng)
    lift_coef = _unit_index(contexts, center, scale, rng)
    assign_coef = _unit_index(contexts, center, scale, rng)

    continuous = np.flatnonzero(~schema.one_hot_mask())
    if continuous.size == 0:
        raise InputError("feature schema needs at least one continuous column")
    designated = int(continuous[np.argmax(np.abs(lift_coef * scale)[continuous])])

    base_floor = max(1.0, 3.0 * cfg.noise)
    if cfg.form == "linear":
        # keeps base(x) >= 0 out to five index standard deviations
        base_floor += 5.0 * cfg.base_scale

    params = GroundTruthParams(
        form=cfg.form,
        n_treatments=cfg.n_treatments,
        center=center.tolist(),
        base_coef=base_coef.tolist(),
        lift_coef=lift_coef.tolist(),
        assign_coef=assign_coef.tolist(),
        assignment_correlation=cfg.assignment_correlation,
        base_floor=base_floor,
        base_scale=cfg.base_scale,
        lift_low=cfg.lift_range[0],
        lift_high=cfg.lift_range[1],
        noise=cfg.noise,
        selection_bias=cfg.selection_bias,
        organic_share=cfg.organic_share,
        designated_feature=designated,
    )
    truth = GroundTruth(params)

    probabilities = truth.assignment_probabilities(contexts)
    draws = rng.random(cfg.n_samples)
    treatments = (draws[:, None] > np.cumsum(probabilities, axis=1)).sum(axis=1) + 1
    treatments = np.minimum(treatments, cfg.n_treatments)

    outcomes = truth.potential_outcomes(contexts)[np.arange(cfg.n_samples), treatments - 1]
    noisy = outcomes + cfg.noise * rng.standard_normal(cfg.n_samples)
    clipped = np.mean(noisy < 0)
    if clipped > 0.01:
        logger.warning(f"{clipped:.2%} of outcomes clipped at 0")
    outcomes = np.maximum(noisy, 0.0)

    dataset = Dataset(
        contexts=contexts,
        treatments=treatments,
        outcomes=outcomes,
        n_treatments=cfg.n_treatments,
        feature_schema=schema,
        ground_truth=params,
    )
    logger.info(
        f"generated {dataset} with selection bias {cfg.selection_bias}, "
        f"treatment counts {dataset.counts.tolist()}"
    )
    return dataset, truth


def selection_bias_statistic(dataset: Dataset, feature: Optional[int] = None) -> float:
    """Chi-squared statistic between a quartile-binned context column and t."""
    if feature is None:
        if dataset.ground_truth_params is None:
            raise InputError("no designated feature: pass one or use a synthetic dataset")
        feature = dataset.ground_truth_params.designated_feature
    column = dataset.contexts[:, feature]
    edges = np.unique(np.quantile(column, [0.25, 0.5, 0.75]))
    table = pd.crosstab(np.digitize(column, edges), dataset.treatments)
    if min(table.shape) < 2:
        return 0.0
    return float(chi2_contingency(table.to_numpy()).statistic)
