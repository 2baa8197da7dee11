import numpy as np
import pandas as pd
import pytest

from iae.core.errors import PositivityError, TrainingDivergedError
from iae.crud.dataset import DatasetCRUD
from iae.models.dataset import Dataset
from iae.models.network import Model
from iae.schemas.ipm import IpmConfig
from iae.schemas.model import ArchitectureConfig, ModelConfig
from iae.schemas.synthetic import GenConfig
from iae.schemas.train import TrainConfig
from iae.services import synthetic, trainer
from iae.tensor.gradcheck import numerical_gradient, relative_error

ARCH = ArchitectureConfig(rep_width=6, rep_depth=2, hyp_width=6, hyp_depth=1, seed=2)


def _batch(n_treatments=3, seed=0):
    rng = np.random.default_rng(seed)
    treatments = np.repeat(np.arange(1, n_treatments + 1), np.arange(3, n_treatments + 3))
    contexts = rng.standard_normal((treatments.size, 4))
    outcomes = rng.uniform(0.0, 3.0, treatments.size)
    return contexts, treatments, outcomes


def test_coefficients_for_two_treatments():
    coefficients = trainer.sample_coefficients(np.array([1, 2, 2, 1]), np.array([0.25, 0.75]))
    assert coefficients == pytest.approx([0.0625, 0.1875, 0.1875, 0.0625], abs=1e-15)


def test_coefficients_for_three_treatments():
    coefficients = trainer.sample_coefficients(np.array([1, 2, 3, 2]), np.array([0.2, 0.5, 0.3]))
    assert coefficients == pytest.approx([0.05, 0.25, 0.075, 0.25], abs=1e-15)


@pytest.mark.parametrize("n_treatments", [2, 3, 5])
def test_instrumented_coefficients_match_endpoint_algebra(tiny_config, n_treatments):
    config = tiny_config.model_copy(update={"n_treatments": n_treatments})
    model = Model.initialize(config)
    contexts, treatments, outcomes = _batch(n_treatments, seed=n_treatments)
    mu = np.bincount(treatments - 1) / treatments.size
    graph = trainer.objective(model, contexts, treatments, outcomes, mu, TrainConfig(beta=0.0))

    m = treatments.size
    expected = [
        mu[t - 1] * (1.0 if t in (1, n_treatments) else 2.0) / m for t in treatments.tolist()
    ]
    assert np.max(np.abs(graph.coefficients - expected)) < 1e-12
    assert graph.terms.factual == pytest.approx(
        float(np.sum(graph.coefficients * graph.losses)), abs=1e-12
    )
    assert graph.factual.item() == pytest.approx(graph.terms.factual, abs=1e-12)


def test_objective_recombines(tiny_model):
    contexts, treatments, outcomes = _batch()
    mu = np.array([0.2, 0.3, 0.5])
    cfg = TrainConfig(beta=0.7, lam=0.01)
    terms = trainer.objective(tiny_model, contexts, treatments, outcomes, mu, cfg).terms

    assert terms.l2_penalty == pytest.approx(0.01 * tiny_model.l2_norm())
    assert terms.ipm_penalty == pytest.approx(0.7 * terms.ipm_sum)
    recombined = terms.factual + terms.l2_penalty + terms.ipm_penalty
    assert abs(terms.total - recombined) < 1e-9


def test_perfect_fit_has_zero_factual_loss(tiny_model):
    contexts, treatments, _ = _batch()
    outcomes = tiny_model.predict(contexts, treatments)
    mu = np.array([1 / 3] * 3)
    terms = trainer.objective(tiny_model, contexts, treatments, outcomes, mu, TrainConfig()).terms
    assert terms.factual == 0.0
    assert terms.weighted_factual == 0.0


@pytest.mark.parametrize("nonlinearity", ["tanh", "elu"])
@pytest.mark.parametrize("n_treatments", [2, 3, 4])
@pytest.mark.parametrize("seed", [0, 1])
def test_objective_gradient_matches_finite_differences(tiny_config, nonlinearity, n_treatments, seed):
    config = tiny_config.model_copy(
        update={"nonlinearity": nonlinearity, "n_treatments": n_treatments, "seed": seed}
    )
    model = Model.initialize(config)
    contexts, treatments, outcomes = _batch(n_treatments, seed=seed)
    mu = np.bincount(treatments - 1) / treatments.size
    cfg = TrainConfig(
        beta=0.5,
        lam=0.05,
        ipm=IpmConfig(epsilon=0.5, annealing=False, iterations=20),
    )
    graph = trainer.objective(model, contexts, treatments, outcomes, mu, cfg)
    analytic = trainer.gradients(graph, model, cfg)

    def total(params):
        shifted = model.with_params(params)
        return trainer.objective(shifted, contexts, treatments, outcomes, mu, cfg).terms.total

    numeric = numerical_gradient(total, model.params, step=1e-6)
    for name in model.params:
        assert relative_error(analytic[name], numeric[name]) < 1e-3, name


def test_zero_beta_ignores_the_ipm_gradient(tiny_model):
    contexts, treatments, outcomes = _batch()
    mu = np.array([0.25, 0.35, 0.4])
    cfg = TrainConfig(beta=0.0, lam=0.0)
    grads = trainer.gradients(
        trainer.objective(tiny_model, contexts, treatments, outcomes, mu, cfg), tiny_model, cfg
    )
    fresh = trainer.objective(tiny_model, contexts, treatments, outcomes, mu, cfg)
    factual_only = fresh.tape.backward(fresh.factual)
    assert fresh.ipm.terms
    for name in tiny_model.params:
        assert np.array_equal(grads[name], factual_only[name])


def test_zero_epochs_returns_initialization(world):
    dataset, _ = world
    model, report = trainer.train(dataset, ARCH, TrainConfig(max_epochs=0))
    initial = Model.initialize(
        ModelConfig.from_architecture(ARCH, dataset.context_dim, dataset.n_treatments)
    )
    assert report.stop_reason == "zero_epochs"
    assert report.epochs == []
    for name, value in initial.params.items():
        assert np.array_equal(model.params[name], value)


def test_training_is_deterministic_and_logged(world):
    dataset, _ = world
    cfg = TrainConfig(max_epochs=2, batch_size=64, seed=9)
    first, report = trainer.train(dataset, ARCH, cfg)
    second, again = trainer.train(dataset, ARCH, cfg)

    for name in first.params:
        assert np.array_equal(first.params[name], second.params[name])
    assert report == again
    assert [r.epoch for r in report.epochs] == [1, 2]
    assert report.best_epoch in (1, 2)
    assert report.n_train + report.n_val == len(dataset)
    assert sum(report.treatment_weights) == pytest.approx(1.0)

    frame = trainer.epoch_frame(report)
    assert list(frame.columns) == ["epoch", "factual", "ipm_sum", "objective", "val_factual"]
    assert len(frame) == 2


def test_training_reduces_validation_loss(world):
    dataset, _ = world
    cfg = TrainConfig(max_epochs=30, batch_size=64, beta=0.0, patience=30)
    _, report = trainer.train(dataset, ARCH, cfg)
    assert report.best_val_factual < report.epochs[0].val_factual
    assert min(r.val_factual for r in report.epochs) == report.best_val_factual


def test_returned_parameters_are_the_best_validation_epoch(world):
    dataset, _ = world
    cfg = TrainConfig(max_epochs=6, batch_size=64, beta=1.0, patience=6, adam={"lr": 1e-2})
    model, report = trainer.train(dataset, ARCH, cfg)

    _, val_rows = DatasetCRUD.split(len(dataset), cfg.validation_fraction, cfg.seed)
    assert trainer.validation_loss(model, dataset.subset(val_rows)) == report.best_val_factual
    assert report.epochs[report.best_epoch - 1].val_factual == report.best_val_factual


def test_divergence_reports_the_last_good_epoch(world, monkeypatch):
    dataset, _ = world
    real = trainer.validation_loss
    calls = []

    def failing_third_epoch(model, val_set):
        calls.append(1)
        return float("nan") if len(calls) == 3 else real(model, val_set)

    monkeypatch.setattr(trainer, "validation_loss", failing_third_epoch)
    with pytest.raises(TrainingDivergedError) as excinfo:
        trainer.train(dataset, ARCH, TrainConfig(max_epochs=5, batch_size=128, patience=5))
    assert excinfo.value.last_good_epoch == 2
    assert "epoch 3" in excinfo.value.detail


def test_huge_step_size_diverges(world):
    dataset, _ = world
    cfg = TrainConfig(max_epochs=5, batch_size=64, beta=0.0, adam={"lr": 1e200})
    with pytest.raises(TrainingDivergedError) as excinfo:
        trainer.train(dataset, ARCH, cfg)
    assert excinfo.value.last_good_epoch is None
    assert excinfo.value.exit_code == 1


@pytest.mark.slow
def test_linear_truth_reaches_the_noise_floor():
    noise = 1.0
    dataset, _ = synthetic.generate(
        GenConfig(
            n_samples=4000,
            n_treatments=3,
            form="linear",
            lift_range=(2.0, 2.0),
            selection_bias=0.0,
            noise=noise,
            seed=0,
        )
    )
    architecture = ArchitectureConfig(rep_width=4, rep_depth=1, hyp_width=4, hyp_depth=1, seed=0)
    cfg = TrainConfig(
        beta=0.0,
        batch_size=64,
        max_epochs=300,
        patience=30,
        adam={"lr": 1e-2},
        ipm=IpmConfig(iterations=1, annealing=False),
    )
    _, report = trainer.train(dataset, architecture, cfg)
    assert np.sqrt(report.best_val_factual) <= 1.1 * noise


def test_epoch_csv(tmp_path, world):
    dataset, _ = world
    _, report = trainer.train(dataset, ARCH, TrainConfig(max_epochs=1, batch_size=128))
    path = trainer.write_epoch_csv(report, tmp_path / "epochs.csv")
    frame = pd.read_csv(path)
    assert frame["epoch"].tolist() == [1]


def test_missing_treatment_refuses_to_train(small_schema):
    rng = np.random.default_rng(0)
    dataset = Dataset(
        np.hstack([np.eye(2)[rng.integers(2, size=40)], rng.standard_normal((40, 3))]),
        rng.integers(1, 3, size=40),
        rng.uniform(size=40),
        3,
        small_schema,
    )
    with pytest.raises(PositivityError, match=r"\[3\]"):
        trainer.train(dataset, ARCH, TrainConfig(max_epochs=1))
