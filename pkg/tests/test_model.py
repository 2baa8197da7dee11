import numpy as np
import pytest

from iae.core.errors import InputError, InvariantViolationError
from iae.models.network import Model, sidecar_path
from iae.schemas.dataset import StandardizationStats
from iae.schemas.model import ModelConfig, TrainingSplit


def test_initialize_is_seed_deterministic(tiny_config):
    first, second = Model.initialize(tiny_config), Model.initialize(tiny_config)
    other = Model.initialize(tiny_config.model_copy(update={"seed": 8}))
    for name in first.params:
        assert np.array_equal(first.params[name], second.params[name])
    assert not np.array_equal(first.params["rep.0.weight"], other.params["rep.0.weight"])


def test_parameter_layout(tiny_model):
    assert sorted(tiny_model.representation_names) == [
        "rep.0.bias",
        "rep.0.weight",
        "rep.1.bias",
        "rep.1.weight",
    ]
    assert tiny_model.params["hyp.0.weight"].shape == (4, 3)
    assert tiny_model.params["hyp.out.weight"].shape == (3, 1)
    assert tiny_model.l2_norm() == pytest.approx(
        np.sum(tiny_model.params["hyp.0.weight"] ** 2)
        + np.sum(tiny_model.params["hyp.out.weight"] ** 2)
    )


def test_predict_agrees_with_predict_all(tiny_model):
    contexts = np.random.default_rng(0).standard_normal((6, 4))
    table = tiny_model.predict_all(contexts)
    assert table.shape == (6, 3)
    for i in range(1, 4):
        assert np.allclose(tiny_model.predict(contexts, i), table[:, i - 1])
    assert tiny_model.predict(contexts[0], 2) == pytest.approx(table[0, 1])
    assert tiny_model.predict_all(contexts[0]).shape == (3,)


def test_iae_matrix_is_antisymmetric_and_transitive():
    config = ModelConfig(context_dim=5, n_treatments=5, rep_width=8, hyp_width=8, seed=3)
    model = Model.initialize(config)
    contexts = np.random.default_rng(1).standard_normal((1000, 5))
    alpha = model.iae_matrix(contexts)

    assert alpha.shape == (1000, 5, 5)
    assert np.max(np.abs(alpha + np.swapaxes(alpha, 1, 2))) < 1e-9
    assert np.max(np.abs(np.diagonal(alpha, axis1=1, axis2=2))) == 0.0
    transit = alpha[:, :, :, None] + alpha[:, None, :, :] - alpha[:, :, None, :]
    assert np.max(np.abs(transit)) < 1e-9


def test_treatment_and_context_validation(tiny_model):
    with pytest.raises(InputError):
        tiny_model.predict(np.zeros(4), 0)
    with pytest.raises(InputError):
        tiny_model.predict(np.zeros(4), 4)
    with pytest.raises(InputError):
        tiny_model.predict_all(np.zeros((2, 5)))
    with pytest.raises(InputError):
        tiny_model.predict_all(np.array([0.0, np.nan, 0.0, 0.0]))


def test_parameter_mismatch_is_rejected(tiny_model):
    params = dict(tiny_model.params)
    del params["hyp.out.bias"]
    with pytest.raises(InvariantViolationError, match="hyp.out.bias"):
        Model(tiny_model.config, params)
    params = dict(tiny_model.params)
    params["rep.0.weight"] = np.zeros((3, 3))
    with pytest.raises(InvariantViolationError):
        Model(tiny_model.config, params)


def test_standardization_is_applied_before_the_network(tiny_config):
    stats = StandardizationStats(mean=[1.0, 2.0, 3.0, 4.0], std=[2.0, 2.0, 2.0, 2.0])
    raw = Model.initialize(tiny_config)
    standardized = Model(tiny_config, raw.params, stats)
    contexts = np.random.default_rng(2).standard_normal((3, 4))
    assert np.allclose(
        standardized.predict_all(contexts), raw.predict_all(stats.apply(contexts))
    )


def test_save_and_load_reproduce_predictions(tmp_path, tiny_config):
    stats = StandardizationStats(mean=[0.5] * 4, std=[1.5] * 4)
    model = Model.initialize(tiny_config, stats)
    path = model.save(tmp_path / "model.json")
    assert sidecar_path(path).name == "model.config.json"

    loaded = Model.load(path)
    contexts = np.random.default_rng(4).standard_normal((5, 4))
    assert loaded.config == model.config
    assert loaded.training_split is None
    assert np.array_equal(loaded.predict_all(contexts), model.predict_all(contexts))


def test_training_split_survives_save_and_parameter_updates(tmp_path, tiny_model):
    split = TrainingSplit(n_rows=120, validation_fraction=0.2, seed=7)
    model = tiny_model.with_training_split(split).with_params(tiny_model.params)
    loaded = Model.load(model.save(tmp_path / "model.json"))
    assert loaded.training_split == split


def test_load_without_sidecar_fails(tmp_path, tiny_model):
    path = tiny_model.save(tmp_path / "model.json")
    sidecar_path(path).unlink()
    with pytest.raises(InputError, match="sidecar"):
        Model.load(path)
