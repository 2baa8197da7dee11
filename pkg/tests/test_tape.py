import numpy as np
import pytest

from iae.core.errors import ShapeError, TapeError
from iae.tensor.gradcheck import numerical_gradient, relative_error
from iae.tensor.tape import Tape


def _layer_loss(params, activation="tanh", record=None):
    tape = Tape()
    x = tape.constant(np.array([[0.5, -1.0], [2.0, 0.3], [-0.7, 0.1]]))
    w = tape.variable(params["w"], "w")
    b = tape.variable(params["b"], "b")
    hidden = getattr(tape, activation)(tape.matmul(x, w) + b)
    loss = tape.reduce_mean(tape.square(hidden - 0.2))
    if record is not None:
        record.append(tape)
    return loss


@pytest.mark.parametrize("activation", ["tanh", "elu", "relu"])
@pytest.mark.parametrize("seed", range(8))
def test_matmul_layer_gradient_matches_finite_differences(seed, activation):
    rng = np.random.default_rng(seed)
    params = {"w": rng.standard_normal((2, 3)), "b": rng.standard_normal(3)}
    tapes = []
    loss = _layer_loss(params, activation, tapes)
    analytic = tapes[0].backward(loss)
    numeric = numerical_gradient(lambda p: _layer_loss(p, activation).item(), params)

    for name in params:
        assert relative_error(analytic[name], numeric[name]) < 1e-4


def test_logsumexp_and_elementwise_gradients():
    rng = np.random.default_rng(1)
    params = {"a": rng.standard_normal((4, 3))}

    def loss_fn(p, keep=None):
        tape = Tape()
        a = tape.variable(p["a"], "a")
        lse = tape.logsumexp(a * 2.0, axis=1, keepdims=True)
        out = tape.reduce_sum(tape.exp(a - lse) * tape.sqrt(tape.square(a) + 1.0))
        if keep is not None:
            keep.append(tape)
        return out

    tapes = []
    loss = loss_fn(params, tapes)
    analytic = tapes[0].backward(loss)["a"]
    numeric = numerical_gradient(lambda p: loss_fn(p).item(), params)["a"]
    assert relative_error(analytic, numeric) < 1e-4


def test_broadcast_add_sums_gradient_over_rows():
    tape = Tape()
    x = tape.variable(np.ones((4, 2)), "x")
    b = tape.variable(np.zeros(2), "b")
    grads = tape.backward(tape.reduce_sum(x + b))
    assert grads["b"].tolist() == [4.0, 4.0]
    assert grads["x"].shape == (4, 2)


def test_gather_accumulates_repeated_rows():
    tape = Tape()
    a = tape.variable(np.arange(6.0).reshape(3, 2), "a")
    grads = tape.backward(tape.reduce_sum(tape.gather(a, [0, 0, 2])))
    assert grads["a"].tolist() == [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]


def test_sqdist_gradient():
    rng = np.random.default_rng(2)
    params = {"p": rng.standard_normal((3, 2)), "q": rng.standard_normal((4, 2))}

    def loss_fn(p, keep=None):
        tape = Tape()
        d = tape.sqdist(tape.variable(p["p"], "p"), tape.variable(p["q"], "q"))
        out = tape.reduce_sum(tape.sqrt(d + 1e-3))
        if keep is not None:
            keep.append(tape)
        return out

    tapes = []
    loss = loss_fn(params, tapes)
    analytic = tapes[0].backward(loss)
    numeric = numerical_gradient(lambda p: loss_fn(p).item(), params)
    for name in params:
        assert relative_error(analytic[name], numeric[name]) < 1e-4


def test_unused_variable_gets_zero_gradient():
    tape = Tape()
    used = tape.variable(np.array([1.0, 2.0]), "used")
    unused = tape.variable(np.array([[3.0]]), "unused")
    grads = tape.backward(tape.reduce_sum(used * used))
    assert grads["used"].tolist() == [2.0, 4.0]
    assert grads["unused"].tolist() == [[0.0]]
    assert unused.grad is not None


def test_backward_twice_on_different_heads():
    tape = Tape()
    w = tape.variable(np.array([1.0, -2.0]), "w")
    first = tape.reduce_sum(w * 3.0)
    second = tape.reduce_sum(tape.square(w))
    assert tape.backward(first)["w"].tolist() == [3.0, 3.0]
    assert tape.backward(second)["w"].tolist() == [2.0, -4.0]
    assert tape.backward(first)["w"].tolist() == [3.0, 3.0]


def test_shape_error_names_the_failing_op():
    tape = Tape()
    a = tape.constant(np.ones((2, 3)))
    tape.add(a, a)
    with pytest.raises(ShapeError) as info:
        tape.matmul(a, a)
    assert info.value.op_id == 1
    assert info.value.op == "matmul"


def test_empty_tape_and_non_scalar_loss_are_rejected():
    tape = Tape()
    w = tape.variable(np.ones(2), "w")
    with pytest.raises(TapeError):
        tape.backward(w)
    doubled = w * 2.0
    with pytest.raises(TapeError):
        tape.backward(doubled)


def test_duplicate_variable_name_is_rejected():
    tape = Tape()
    tape.variable(np.ones(1), "w")
    with pytest.raises(TapeError):
        tape.variable(np.ones(1), "w")


def test_tensors_from_other_tapes_do_not_mix():
    first, second = Tape(), Tape()
    a = first.variable(np.ones(2), "a")
    with pytest.raises(TapeError):
        second.add(a, 1.0)
