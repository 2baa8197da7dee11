"""Eager tape-based reverse-mode differentiation over float64 numpy arrays.

Every primitive records one ``Op`` on the tape in execution order, so the tape
is topologically sorted by construction. ``Tape.backward`` walks it in reverse
and returns gradients for every named variable. Loops (the unrolled Sinkhorn
iterations) simply record more ops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp as _logsumexp

from iae.core.errors import ShapeError, TapeError

Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", np.ndarray, float, int]


@dataclass(eq=False)
class Tensor:
    values: np.ndarray
    node_id: int
    tape: "Tape" = field(repr=False)
    requires_grad: bool = False
    name: Optional[str] = None
    grad: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.grad is not None and self.grad.shape != self.values.shape:
            raise ValueError(
                f"gradient shape {self.grad.shape} != value shape {self.values.shape}"
            )

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def is_variable(self) -> bool:
        return self.name is not None and self.requires_grad

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() on a tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def __add__(self, other: Operand) -> "Tensor":
        return self.tape.add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return self.tape.add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return self.tape.sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return self.tape.sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        if isinstance(other, (int, float)):
            return self.tape.scale(self, float(other))
        return self.tape.mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return self.__mul__(other)

    def __truediv__(self, other: Union[int, float]) -> "Tensor":
        return self.tape.scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return self.tape.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return self.tape.matmul(self, other)


@dataclass(frozen=True)
class Op:
    op_id: int
    kind: str
    inputs: Tuple[int, ...]
    output: int
    backward: Backward = field(repr=False)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` over the axes numpy broadcasting expanded from ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


# name -> (forward, derivative(x, y))
_UNARY: Dict[str, Tuple[Callable, Callable]] = {
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64)),
    "elu": (_elu, lambda x, y: np.where(x > 0, 1.0, y + 1.0)),
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "exp": (np.exp, lambda x, y: y),
    "log": (np.log, lambda x, y: 1.0 / x),
    "sqrt": (np.sqrt, lambda x, y: 0.5 / y),
    "square": (np.square, lambda x, y: 2.0 * x),
}

NONLINEARITIES = ("elu", "relu", "tanh")


class Tape:
    def __init__(self):
        self._nodes: List[Tensor] = []
        self.ops: List[Op] = []

    def __len__(self) -> int:
        return len(self.ops)

    # leaves

    def _node(
        self, values: np.ndarray, requires_grad: bool, name: Optional[str] = None
    ) -> Tensor:
        tensor = Tensor(
            values=values,
            node_id=len(self._nodes),
            tape=self,
            requires_grad=requires_grad,
            name=name,
        )
        self._nodes.append(tensor)
        return tensor

    def variable(self, values, name: str) -> Tensor:
        if any(node.name == name for node in self._nodes):
            raise TapeError(f"variable {name!r} already on this tape")
        return self._node(np.array(values, dtype=np.float64), True, name)

    def constant(self, values) -> Tensor:
        return self._node(np.asarray(values, dtype=np.float64), False)

    def _lift(self, operand: Operand) -> Tensor:
        if isinstance(operand, Tensor):
            if operand.tape is not self:
                raise TapeError("tensor belongs to a different tape")
            return operand
        return self.constant(operand)

    def record(
        self,
        kind: str,
        inputs: Sequence[Tensor],
        values: np.ndarray,
        backward: Backward,
    ) -> Tensor:
        """Append a primitive; ``backward`` maps the output gradient to input gradients."""
        requires_grad = any(t.requires_grad for t in inputs)
        out = self._node(np.asarray(values, dtype=np.float64), requires_grad)
        self.ops.append(
            Op(
                op_id=len(self.ops),
                kind=kind,
                inputs=tuple(t.node_id for t in inputs),
                output=out.node_id,
                backward=backward,
            )
        )
        return out

    def _next_op_id(self) -> int:
        return len(self.ops)

    def _broadcast_shape(self, kind: str, a: Tensor, b: Tensor) -> None:
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(
                self._next_op_id(), kind, f"cannot broadcast {a.shape} with {b.shape}"
            )

    # primitives

    def matmul(self, a: Operand, b: Operand) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(
                self._next_op_id(), "matmul", f"incompatible shapes {a.shape} @ {b.shape}"
            )
        av, bv = a.values, b.values
        return self.record(
            "matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g)
        )

    def add(self, a: Operand, b: Operand) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        self._broadcast_shape("add", a, b)
        sa, sb = a.shape, b.shape
        return self.record(
            "add",
            (a, b),
            a.values + b.values,
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def sub(self, a: Operand, b: Operand) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        self._broadcast_shape("sub", a, b)
        sa, sb = a.shape, b.shape
        return self.record(
            "sub",
            (a, b),
            a.values - b.values,
            lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
        )

    def mul(self, a: Operand, b: Operand) -> Tensor:
        a, b = self._lift(a), self._lift(b)
        self._broadcast_shape("mul", a, b)
        av, bv = a.values, b.values
        return self.record(
            "mul",
            (a, b),
            av * bv,
            lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
        )

    def scale(self, a: Operand, factor: float) -> Tensor:
        a = self._lift(a)
        return self.record("scale", (a,), a.values * factor, lambda g: (g * factor,))

    def unary(self, kind: str, a: Operand) -> Tensor:
        if kind not in _UNARY:
            raise ValueError(f"unknown elementwise op {kind!r}")
        a = self._lift(a)
        forward, derivative = _UNARY[kind]
        x = a.values
        with np.errstate(divide="ignore", invalid="ignore"):
            y = forward(x)
        return self.record(kind, (a,), y, lambda g: (g * derivative(x, y),))

    def relu(self, a: Operand) -> Tensor:
        return self.unary("relu", a)

    def elu(self, a: Operand) -> Tensor:
        return self.unary("elu", a)

    def tanh(self, a: Operand) -> Tensor:
        return self.unary("tanh", a)

    def exp(self, a: Operand) -> Tensor:
        return self.unary("exp", a)

    def log(self, a: Operand) -> Tensor:
        return self.unary("log", a)

    def sqrt(self, a: Operand) -> Tensor:
        return self.unary("sqrt", a)

    def square(self, a: Operand) -> Tensor:
        return self.unary("square", a)

    def reduce_sum(
        self, a: Operand, axis: Optional[int] = None, keepdims: bool = False
    ) -> Tensor:
        a = self._lift(a)
        shape = a.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self.record(
            "reduce_sum", (a,), a.values.sum(axis=axis, keepdims=keepdims), backward
        )

    def reduce_mean(
        self, a: Operand, axis: Optional[int] = None, keepdims: bool = False
    ) -> Tensor:
        a = self._lift(a)
        count = a.values.size if axis is None else a.shape[axis]
        if count == 0:
            raise ShapeError(self._next_op_id(), "reduce_mean", "mean of an empty tensor")
        total = self.reduce_sum(a, axis=axis, keepdims=keepdims)
        return self.scale(total, 1.0 / count)

    def logsumexp(self, a: Operand, axis: int, keepdims: bool = False) -> Tensor:
        a = self._lift(a)
        x = a.values
        lse = _logsumexp(x, axis=axis, keepdims=True)
        weights = np.exp(x - lse)

        def backward(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (g * weights,)

        values = lse if keepdims else np.squeeze(lse, axis=axis)
        return self.record("logsumexp", (a,), values, backward)

    def concat(self, tensors: Sequence[Operand], axis: int = 1) -> Tensor:
        parts = [self._lift(t) for t in tensors]
        try:
            values = np.concatenate([t.values for t in parts], axis=axis)
        except ValueError as exc:
            raise ShapeError(self._next_op_id(), "concat", str(exc))
        bounds = np.cumsum([t.shape[axis] for t in parts])[:-1]
        return self.record(
            "concat",
            parts,
            values,
            lambda g: tuple(np.split(g, bounds, axis=axis)),
        )

    def gather(self, a: Operand, rows: Sequence[int]) -> Tensor:
        a = self._lift(a)
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= a.shape[0]):
            raise ShapeError(
                self._next_op_id(), "gather", f"row index out of range for {a.shape}"
            )
        shape = a.shape

        def backward(g):
            out = np.zeros(shape)
            np.add.at(out, rows, g)
            return (out,)

        return self.record("gather", (a,), a.values[rows], backward)

    def reshape(self, a: Operand, shape: Tuple[int, ...]) -> Tensor:
        a = self._lift(a)
        original = a.shape
        try:
            values = a.values.reshape(shape)
        except ValueError as exc:
            raise ShapeError(self._next_op_id(), "reshape", str(exc))
        return self.record("reshape", (a,), values, lambda g: (g.reshape(original),))

    def sqdist(self, p: Operand, q: Operand) -> Tensor:
        """Pairwise squared Euclidean distances between the rows of p and q."""
        p, q = self._lift(p), self._lift(q)
        if p.values.ndim != 2 or q.values.ndim != 2 or p.shape[1] != q.shape[1]:
            raise ShapeError(
                self._next_op_id(), "sqdist", f"incompatible clouds {p.shape} vs {q.shape}"
            )
        pv, qv = p.values, q.values
        values = (
            np.sum(pv * pv, axis=1)[:, None]
            + np.sum(qv * qv, axis=1)[None, :]
            - 2.0 * pv @ qv.T
        )
        values = np.maximum(values, 0.0)

        def backward(g):
            grad_p = 2.0 * (pv * g.sum(axis=1)[:, None] - g @ qv)
            grad_q = 2.0 * (qv * g.sum(axis=0)[:, None] - g.T @ pv)
            return grad_p, grad_q

        return self.record("sqdist", (p, q), values, backward)

    # reverse pass

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` for every named variable on the tape.

        Variables the loss does not depend on get zero gradients. Can be called
        repeatedly with different losses; each call overwrites ``Tensor.grad``.
        """
        if loss.tape is not self:
            raise TapeError("loss was not produced by this tape")
        if not self.ops:
            raise TapeError("backward called before forward: the tape is empty")
        if loss.values.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.values)}
        for op in reversed(self.ops):
            if op.output > loss.node_id or op.output not in grads:
                continue
            input_grads = op.backward(grads[op.output])
            for node_id, grad in zip(op.inputs, input_grads):
                if grad is None or not self._nodes[node_id].requires_grad:
                    continue
                if node_id in grads:
                    grads[node_id] = grads[node_id] + grad
                else:
                    grads[node_id] = grad

        result: Dict[str, np.ndarray] = {}
        for node in self._nodes:
            if node.is_variable:
                grad = grads.get(node.node_id)
                node.grad = (
                    np.zeros_like(node.values)
                    if grad is None
                    else np.asarray(grad, dtype=np.float64).reshape(node.shape)
                )
                result[node.name] = node.grad
        return result
