import numpy as np
import pytest

from iae.models.network import Model
from iae.schemas.features import FeatureGroup, FeatureSchema
from iae.schemas.model import ModelConfig
from iae.schemas.synthetic import GenConfig
from iae.services import synthetic


class ShiftedModel:
    """Ground truth plus a fixed per-treatment offset; stands in for a trained model."""

    def __init__(self, truth, offsets):
        self.truth = truth
        self.offsets = np.asarray(offsets, dtype=np.float64)
        self.n_treatments = truth.n_treatments

    def predict_all(self, x):
        outcomes = self.truth.potential_outcomes(x) + self.offsets[None, :]
        return outcomes[0] if np.asarray(x).ndim == 1 else outcomes


class RandomModel:
    """Arbitrary per-context predictions, drawn once per context row."""

    def __init__(self, n_treatments, seed=0):
        self.n_treatments = n_treatments
        self.seed = seed

    def predict_all(self, x):
        contexts = np.atleast_2d(x)
        rng = np.random.default_rng(self.seed)
        weights = rng.standard_normal((contexts.shape[1], self.n_treatments))
        outcomes = np.sin(contexts @ weights) * 3.0
        return outcomes[0] if np.asarray(x).ndim == 1 else outcomes


@pytest.fixture
def small_schema():
    return FeatureSchema(
        groups=[
            FeatureGroup(name="ids", dim=2, kind="one_hot"),
            FeatureGroup(name="stats", dim=3),
        ]
    )


@pytest.fixture
def world():
    """Small saturating world with strong selection bias."""
    return synthetic.generate(GenConfig(n_samples=300, n_treatments=3, seed=11))


@pytest.fixture
def noiseless_world():
    return synthetic.generate(GenConfig(n_samples=200, n_treatments=4, noise=0.0, seed=5))


@pytest.fixture
def tiny_config():
    return ModelConfig(
        context_dim=4,
        n_treatments=3,
        rep_width=3,
        rep_depth=2,
        hyp_width=3,
        hyp_depth=1,
        nonlinearity="tanh",
        seed=7,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return Model.initialize(tiny_config)


@pytest.fixture
def shifted_model():
    return ShiftedModel


@pytest.fixture
def random_model():
    return RandomModel
