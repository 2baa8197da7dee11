import numpy as np
import pytest

from iae.core.errors import GroundTruthMissingError, InputError
from iae.crud.dataset import DatasetCRUD
from iae.models.network import Model
from iae.schemas.dataset import StandardizationStats
from iae.schemas.evaluation import EvalOptions
from iae.schemas.ipm import IpmConfig
from iae.schemas.model import ArchitectureConfig, ModelConfig, TrainingSplit
from iae.schemas.synthetic import GenConfig
from iae.schemas.train import TrainConfig
from iae.services import evaluation, synthetic, trainer


def _oracle_network(truth, dataset):
    """A one-layer network that reproduces a linear world with constant lift exactly.

    The representation is the base index itself; the hypothesis passes it
    through a ReLU after a large bias and adds lift * (i - 1) from the
    treatment channel.
    """
    p = truth.params
    n = truth.n_treatments
    lift = 0.5 * (p.lift_low + p.lift_high)
    config = ModelConfig(
        context_dim=dataset.context_dim,
        n_treatments=n,
        rep_width=1,
        rep_depth=1,
        hyp_width=1,
        hyp_depth=1,
        nonlinearity="relu",
    )
    offset = 1e3
    d = dataset.context_dim
    params = {
        # the forward pass scales representation weights by 1/sqrt(fan_in)
        "rep.0.weight": (np.asarray(p.base_coef) * p.base_scale * np.sqrt(d)).reshape(d, 1),
        "rep.0.bias": np.array([p.base_floor - p.base_scale * np.dot(p.center, p.base_coef)]),
        "hyp.0.weight": np.array([[1.0], [lift * (n - 1)]]),
        "hyp.0.bias": np.array([offset]),
        "hyp.out.weight": np.array([[1.0]]),
        "hyp.out.bias": np.array([-offset]),
    }
    return Model(config, params, StandardizationStats.identity(d))


@pytest.fixture
def linear_world():
    return synthetic.generate(
        GenConfig(
            n_samples=300,
            n_treatments=3,
            form="linear",
            lift_range=(2.0, 2.0),
            noise=0.0,
            seed=8,
        )
    )


def test_perfect_oracle_network_has_zero_pehe(linear_world):
    dataset, truth = linear_world
    model = _oracle_network(truth, dataset)
    assert np.allclose(model.predict_all(dataset.contexts), truth.potential_outcomes(dataset.contexts))

    report = evaluation.bound_check(model, truth, dataset)
    assert report.pehe == pytest.approx(0.0, abs=1e-12)
    assert report.adjacent_bound == pytest.approx(0.0, abs=1e-12)
    assert max(report.factual_losses) == pytest.approx(0.0, abs=1e-12)


def test_ground_truth_as_its_own_model(noiseless_world):
    dataset, truth = noiseless_world
    report = evaluation.bound_check(truth, truth, dataset)
    assert report.pehe == 0.0
    assert report.adjacent_bound == 0.0
    assert report.factual_losses == [0.0] * 4
    assert report.ipm_terms == [0.0] * 3
    assert report.monotonicity_rate == 1.0


def test_constant_offset_on_second_treatment_gives_delta_squared(shifted_model):
    dataset, truth = synthetic.generate(GenConfig(n_samples=50, n_treatments=2, seed=1))
    model = shifted_model(truth, [0.0, 0.3])
    assert evaluation.pehe(model, truth, dataset.contexts) == pytest.approx(0.09)
    report = evaluation.bound_check(model, truth, dataset)
    assert report.pehe == pytest.approx(report.adjacent_bound, abs=1e-9)


def test_pehe_matches_brute_force(world, random_model):
    dataset, truth = world
    model = random_model(truth.n_treatments, seed=3)
    contexts = dataset.contexts[:100]
    n = truth.n_treatments

    total = 0.0
    for x in contexts:
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i != j:
                    total += evaluation.tau(model, truth, x, i, j) ** 2
    brute = total / (len(contexts) * n * (n - 1))
    assert evaluation.pehe(model, truth, contexts) == pytest.approx(brute, rel=1e-12)


def test_tau_telescopes_and_is_antisymmetric(random_model):
    dataset, truth = synthetic.generate(GenConfig(n_samples=1000, n_treatments=5, seed=2))
    model = random_model(5, seed=4)
    contexts = dataset.contexts
    for i in range(1, 5):
        for j in range(i + 1, 6):
            direct = evaluation.tau(model, truth, contexts, i, j)
            chained = sum(evaluation.tau(model, truth, contexts, k, k + 1) for k in range(i, j))
            assert np.max(np.abs(direct - chained)) < 1e-9
            reverse = evaluation.tau(model, truth, contexts, j, i)
            assert np.max(np.abs(direct + reverse)) < 1e-12


def test_adjacent_bound_holds_for_random_models(random_model):
    dataset, truth = synthetic.generate(GenConfig(n_samples=1000, n_treatments=5, seed=3))
    for seed in range(20):
        model = random_model(5, seed=seed)
        value = evaluation.pehe(model, truth, dataset.contexts)
        bound = sum(evaluation.adjacent_tau_squares(model, truth, dataset.contexts))
        assert value <= bound * (1 + 1e-9) + 1e-12


def test_bound_check_on_a_network(world):
    dataset, truth = world
    config = ModelConfig(
        context_dim=dataset.context_dim, n_treatments=3, rep_width=4, hyp_width=4, seed=1
    )
    model = Model.initialize(config)
    report = evaluation.bound_check(model, truth, dataset, EvalOptions(beta=1.0, max_cloud_size=50))

    assert report.adjacent_bound_holds
    assert report.pehe <= report.adjacent_bound
    assert len(report.ipm_terms) == 2
    assert all(term >= 0 for term in report.ipm_terms)
    expected_rhs = 2 * sum(e + t for e, t in zip(report.pairwise_factual, report.ipm_terms))
    assert report.theorem_rhs == pytest.approx(expected_rhs)
    assert report.treatment_counts == dataset.counts.tolist()


def test_missing_ground_truth():
    with pytest.raises(GroundTruthMissingError, match="PEHE requires ground truth"):
        evaluation.pehe(None, None, np.zeros((1, 2)))


def test_checkpoints_are_scored_on_their_held_out_rows(world):
    dataset, truth = world
    config = ModelConfig(
        context_dim=dataset.context_dim, n_treatments=3, rep_width=4, hyp_width=4, seed=1
    )
    split = TrainingSplit(n_rows=len(dataset), validation_fraction=0.25, seed=3)
    model = Model.initialize(config).with_training_split(split)
    options = EvalOptions(max_cloud_size=50)

    held_out, label = evaluation.evaluation_rows(model, dataset, options)
    _, val_rows = DatasetCRUD.split(len(dataset), 0.25, 3)
    assert label == "validation"
    assert np.array_equal(held_out.contexts, dataset.contexts[val_rows])

    report = evaluation.bound_check(model, truth, dataset, options)
    assert report.contexts == "validation"
    assert report.n_contexts == 75
    assert report.pehe == pytest.approx(evaluation.pehe(model, truth, dataset.contexts[val_rows]))

    every_row = evaluation.bound_check(
        model, truth, dataset, options.model_copy(update={"contexts": "all"})
    )
    assert every_row.n_contexts == len(dataset)


def test_held_out_rows_need_the_training_dataset(world):
    dataset, truth = world
    config = ModelConfig(context_dim=dataset.context_dim, n_treatments=3, rep_width=4, hyp_width=4)
    split = TrainingSplit(n_rows=len(dataset) + 1, validation_fraction=0.2, seed=0)
    model = Model.initialize(config).with_training_split(split)
    with pytest.raises(InputError, match="trained on 301 rows"):
        evaluation.bound_check(model, truth, dataset)


def _held_out_pehe(selection_bias, beta, seed):
    dataset, truth = synthetic.generate(
        GenConfig(n_samples=3000, selection_bias=selection_bias, seed=seed)
    )
    cfg = TrainConfig(
        beta=beta,
        batch_size=128,
        max_epochs=40,
        patience=8,
        adam={"lr": 5e-3},
        ipm=IpmConfig(iterations=20),
        seed=seed,
    )
    architecture = ArchitectureConfig(rep_width=16, rep_depth=2, hyp_width=16, hyp_depth=2, seed=seed)
    model, _ = trainer.train(dataset, architecture, cfg)
    held_out, label = evaluation.evaluation_rows(model, dataset, EvalOptions())
    assert label == "validation"
    return evaluation.pehe(model, truth, held_out.contexts)


@pytest.mark.slow
def test_balancing_helps_under_selection_bias():
    balanced = [_held_out_pehe(5.0, 1.0, seed) for seed in range(10)]
    plain = [_held_out_pehe(5.0, 0.0, seed) for seed in range(10)]
    assert np.median(balanced) <= np.median(plain)


@pytest.mark.slow
def test_balancing_is_harmless_without_selection_bias():
    balanced = np.median([_held_out_pehe(0.0, 1.0, seed) for seed in range(10)])
    plain = np.median([_held_out_pehe(0.0, 0.0, seed) for seed in range(10)])
    assert abs(balanced - plain) < 0.2 * max(balanced, plain)
