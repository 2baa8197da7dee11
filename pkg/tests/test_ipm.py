from itertools import permutations

import numpy as np
import pytest

from iae.core.errors import InputError
from iae.schemas.ipm import IpmConfig
from iae.services.ipm import (
    adjacent_ipm_sum,
    epsilon_schedule,
    exact_wasserstein_1d,
    ipm_distance,
    ipm_value,
)
from iae.tensor.gradcheck import numerical_gradient, relative_error
from iae.tensor.tape import Tape


@pytest.mark.parametrize(
    "p, q, expected",
    [
        ([0.0], [1.0], 1.0),
        ([0.0, 1.0], [0.5, 1.5], 0.5),
        ([0.0, 2.0], [1.0, 3.0], 1.0),
    ],
)
def test_exact_wasserstein_examples(p, q, expected):
    assert exact_wasserstein_1d(p, q) == pytest.approx(expected, abs=1e-12)


def test_exact_wasserstein_matches_brute_force_assignment():
    rng = np.random.default_rng(0)
    for size in range(1, 8):
        p, q = rng.normal(size=size), rng.normal(1.0, 2.0, size=size)
        brute = min(np.mean(np.abs(p - q[list(order)])) for order in permutations(range(size)))
        assert exact_wasserstein_1d(p, q) == pytest.approx(brute, abs=1e-12)


def test_exact_wasserstein_is_a_metric_on_samples():
    rng = np.random.default_rng(1)
    a, b, c = rng.normal(size=20), rng.normal(2.0, size=15), rng.normal(-1.0, 3.0, size=25)
    assert exact_wasserstein_1d(a, a) == 0.0
    assert exact_wasserstein_1d(a, b) == pytest.approx(exact_wasserstein_1d(b, a))
    assert exact_wasserstein_1d(a, c) <= exact_wasserstein_1d(a, b) + exact_wasserstein_1d(b, c) + 1e-12


CONVERGED = IpmConfig(
    epsilon_scale=0.01, epsilon_reference="median", iterations=200, tolerance=1e-4
)


def test_sinkhorn_matches_exact_on_separated_clouds():
    rng = np.random.default_rng(2)
    p, q = rng.normal(0.0, 1.0, size=40), rng.normal(5.0, 1.0, size=50)
    exact = exact_wasserstein_1d(p, q)
    assert ipm_value(p, q, CONVERGED) == pytest.approx(exact, rel=0.02)


@pytest.mark.parametrize("shift", [0.3, 1.0, 2.0])
@pytest.mark.parametrize("seed", range(10))
def test_sinkhorn_matches_exact_on_overlapping_clouds(seed, shift):
    rng = np.random.default_rng(seed)
    p, q = rng.normal(0.0, 1.0, size=40), rng.normal(shift, 1.0, size=50)
    exact = exact_wasserstein_1d(p, q)
    assert ipm_value(p, q, CONVERGED) == pytest.approx(exact, rel=0.02)


def test_taped_and_plain_sinkhorn_agree_when_run_to_tolerance():
    rng = np.random.default_rng(12)
    p, q = rng.normal(size=(8, 1)), rng.normal(0.4, size=(10, 1))
    cfg = CONVERGED.model_copy(update={"tolerance": 1e-6})
    assert ipm_distance(p, q, cfg).distance == pytest.approx(ipm_value(p, q, cfg), rel=1e-4)


def test_iteration_cap_is_reported(caplog):
    rng = np.random.default_rng(13)
    p, q = rng.normal(size=30), rng.normal(0.2, size=30)
    cfg = CONVERGED.model_copy(update={"tolerance": 1e-12, "max_iterations": 210})
    with caplog.at_level("WARNING", logger="iae.services.ipm"):
        value = ipm_value(p, q, cfg)
    assert value >= 0
    assert "above tolerance" in caplog.text


def test_sinkhorn_is_symmetric():
    rng = np.random.default_rng(3)
    p, q = rng.normal(size=(12, 3)), rng.normal(1.0, size=(12, 3))
    assert ipm_value(p, q) == ipm_value(q, p)
    unequal = rng.normal(size=(9, 3))
    assert ipm_value(p, unequal) == ipm_value(unequal, p)


def test_identical_sparse_clouds_are_close_to_zero():
    cloud = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]])
    assert ipm_value(cloud, cloud, IpmConfig(epsilon=0.5)) < 0.01


@pytest.mark.parametrize(
    "sizes",
    [(5, 6, 2), (4, 4, 1), (7, 3, 3)],
    ids=["5x6-dim2", "4x4-dim1", "7x3-dim3"],
)
@pytest.mark.parametrize("seed", range(6))
def test_sinkhorn_gradient_matches_finite_differences(seed, sizes):
    rows_p, rows_q, dim = sizes
    rng = np.random.default_rng(seed)
    params = {"p": rng.normal(size=(rows_p, dim)), "q": rng.normal(0.5, size=(rows_q, dim))}
    cfg = IpmConfig(epsilon=0.5, annealing=False, iterations=30)
    estimate = ipm_distance(params["p"], params["q"], cfg)
    numeric = numerical_gradient(lambda x: ipm_value(x["p"], x["q"], cfg), params, step=1e-6)
    assert relative_error(estimate.grad_p, numeric["p"]) < 1e-3
    assert relative_error(estimate.grad_q, numeric["q"]) < 1e-3


def test_exact_1d_gradient_follows_monotone_coupling():
    estimate = ipm_distance([0.0, 1.0], [2.0, 3.0], IpmConfig(method="exact-1d"))
    assert estimate.distance == pytest.approx(2.0)
    assert estimate.grad_p.ravel().tolist() == [-0.5, -0.5]
    assert estimate.grad_q.ravel().tolist() == [0.5, 0.5]


def test_cloud_validation():
    with pytest.raises(InputError):
        ipm_value(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(InputError):
        ipm_value(np.zeros((3, 2)), np.zeros((3, 2)), IpmConfig(method="exact-1d"))
    with pytest.raises(InputError):
        exact_wasserstein_1d([], [1.0])


def test_annealing_schedule_ends_at_target():
    cost = np.array([[0.0, 4.0], [2.0, 8.0]])
    schedule = epsilon_schedule(cost, 0.1, IpmConfig(iterations=10))
    assert schedule[0] == pytest.approx(8.0)
    assert schedule[5:] == [0.1] * 5
    assert all(a >= b for a, b in zip(schedule, schedule[1:]))
    assert epsilon_schedule(cost, 0.1, IpmConfig(iterations=10, annealing=False)) == [0.1] * 10


def test_adjacent_sum_skips_thin_pairs():
    tape = Tape()
    rep = tape.variable(np.arange(14.0).reshape(7, 2), "rep")
    treatments = np.array([1, 2, 2, 2, 3, 3, 3])
    result = adjacent_ipm_sum(tape, rep, treatments, 3, IpmConfig(min_cloud_size=2))
    assert result.skipped == [1]
    assert list(result.terms) == [2]
    assert result.total.item() == pytest.approx(result.terms[2])

    grads = tape.backward(result.total)
    assert np.all(grads["rep"][0] == 0.0)
