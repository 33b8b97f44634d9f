"""Tape-based reverse-mode automatic differentiation over numpy arrays.

A :class:`Graph` records every operation in insertion order; ``backward``
walks the tape in reverse, so each node is visited exactly once. Tensors are
thin handles onto graph nodes and carry float64 data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray
VJP = Callable[[Array], Sequence["Array | None"]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


@dataclass
class Node:
    kind: str
    inputs: tuple[int, ...]
    value: Array
    vjp: VJP | None = None
    aux: dict = field(default_factory=dict)
    requires_grad: bool = False


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Handle to a node on a :class:`Graph`."""

    __slots__ = ("graph", "node")

    def __init__(self, graph: "Graph", node: int):
        self.graph = graph
        self.node = node

    @property
    def data(self) -> Array:
        return self.graph.nodes[self.node].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        kind = self.graph.nodes[self.node].kind
        return f"Tensor(node={self.node}, kind={kind}, shape={self.shape})"

    # operator sugar; every method delegates to the owning graph
    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return self.graph.constant(other)

    def __add__(self, other):
        return self.graph.add(self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.graph.sub(self, self._lift(other))

    def __rsub__(self, other):
        return self.graph.sub(self._lift(other), self)

    def __mul__(self, other):
        return self.graph.mul(self, self._lift(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.graph.mul(self, self.graph.reciprocal(self._lift(other)))

    def __rtruediv__(self, other):
        return self.graph.mul(self._lift(other), self.graph.reciprocal(self))

    def __neg__(self):
        return self.graph.neg(self)

    def __matmul__(self, other):
        return self.graph.matmul(self, self._lift(other))

    def sum(self, axis=None):
        return self.graph.sum(self, axis)

    def mean(self, axis=None):
        return self.graph.mean(self, axis)

    def relu(self):
        return self.graph.relu(self)

    def tanh(self):
        return self.graph.tanh(self)

    def exp(self):
        return self.graph.exp(self)

    def log(self):
        return self.graph.log(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.graph.reshape(self, shape)


class Gradients:
    """Result of a backward pass; indexing with a tensor returns its gradient.

    Tensors with no path to the loss receive an exact zero array.
    """

    def __init__(self, graph: "Graph", grads: list):
        self._graph = graph
        self._grads = grads

    def __getitem__(self, t: Tensor) -> Array:
        if t.graph is not self._graph:
            raise ValueError("tensor belongs to a different graph")
        g = self._grads[t.node]
        if g is None:
            return np.zeros_like(t.data)
        return g


class Graph:
    """An append-only tape of operations."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, kind, inputs, value, vjp=None, **aux) -> Tensor:
        value = np.asarray(value, dtype=np.float64)
        nodes = self.nodes
        ids = tuple(t.node for t in inputs)
        requires = any(nodes[i].requires_grad for i in ids)
        nodes.append(Node(kind, ids, value, vjp if requires else None, aux, requires))
        return Tensor(self, len(nodes) - 1)

    def requires_grad(self, t: Tensor) -> bool:
        return self.nodes[t.node].requires_grad

    def _check(self, *ts: Tensor) -> None:
        for t in ts:
            if t.graph is not self:
                raise ValueError("operand belongs to a different graph")

    # leaves

    def variable(self, value, name: str = "") -> Tensor:
        """A differentiable leaf. The array is referenced, not copied."""
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(Node("variable", (), value, None, {"name": name}, True))
        return Tensor(self, len(self.nodes) - 1)

    def constant(self, value) -> Tensor:
        return self._push("constant", (), np.array(value, dtype=np.float64))

    # elementwise binary ops with broadcasting

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        self._check(a, b)
        sa, sb = a.shape, b.shape
        return self._push(
            "add", (a, b), a.data + b.data,
            lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        )

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        self._check(a, b)
        sa, sb = a.shape, b.shape
        return self._push(
            "sub", (a, b), a.data - b.data,
            lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        )

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        self._check(a, b)
        x, y = a.data, b.data
        return self._push(
            "mul", (a, b), x * y,
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        self._check(a, b)
        x, y = a.data, b.data
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {x.shape} by {y.shape}")
        return self._push("matmul", (a, b), x @ y, lambda g: (g @ y.T, x.T @ g))

    # elementwise unary ops

    def neg(self, a: Tensor) -> Tensor:
        self._check(a)
        return self._push("neg", (a,), -a.data, lambda g: (-g,))

    def reciprocal(self, a: Tensor) -> Tensor:
        self._check(a)
        out = 1.0 / a.data
        return self._push("reciprocal", (a,), out, lambda g: (-g * out * out,))

    def relu(self, a: Tensor) -> Tensor:
        self._check(a)
        out = np.maximum(a.data, 0.0)
        return self._push("relu", (a,), out, lambda g: (g * (out > 0),))

    def tanh(self, a: Tensor) -> Tensor:
        self._check(a)
        out = np.tanh(a.data)
        return self._push("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))

    def exp(self, a: Tensor) -> Tensor:
        self._check(a)
        out = np.exp(a.data)
        return self._push("exp", (a,), out, lambda g: (g * out,))

    def log(self, a: Tensor) -> Tensor:
        self._check(a)
        x = a.data
        return self._push("log", (a,), np.log(x), lambda g: (g / x,))

    def sigmoid(self, a: Tensor) -> Tensor:
        self._check(a)
        out = _sigmoid(a.data)
        return self._push("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))

    def softplus(self, a: Tensor) -> Tensor:
        self._check(a)
        x = a.data
        out = np.logaddexp(0.0, x)
        return self._push("softplus", (a,), out, lambda g: (g * _sigmoid(x),))

    def sqrt(self, a: Tensor) -> Tensor:
        self._check(a)
        out = np.sqrt(a.data)
        return self._push("sqrt", (a,), out, lambda g: (g * 0.5 / out,))

    # reductions and shape ops

    def sum(self, a: Tensor, axis=None) -> Tensor:
        self._check(a)
        shape = a.shape
        out = a.data.sum(axis=axis, keepdims=True)

        def vjp(g):
            return (np.broadcast_to(g.reshape(out.shape), shape).copy(),)

        return self._push("sum", (a,), out.reshape(a.data.sum(axis=axis).shape), vjp)

    def mean(self, a: Tensor, axis=None) -> Tensor:
        self._check(a)
        shape = a.shape
        count = a.size if axis is None else int(np.prod([shape[i] for i in np.atleast_1d(axis)]))
        keep = a.data.mean(axis=axis, keepdims=True)

        def vjp(g):
            return (np.broadcast_to(g.reshape(keep.shape) / count, shape).copy(),)

        return self._push("mean", (a,), a.data.mean(axis=axis), vjp)

    def reshape(self, a: Tensor, shape) -> Tensor:
        self._check(a)
        old = a.shape
        return self._push("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(old),))

    def concat(self, ts: Sequence[Tensor], axis: int = 0) -> Tensor:
        self._check(*ts)
        sizes = [t.shape[axis] for t in ts]
        bounds = np.cumsum(sizes)[:-1]
        out = np.concatenate([t.data for t in ts], axis=axis)
        return self._push("concat", ts, out, lambda g: tuple(np.split(g, bounds, axis=axis)))

    def stack_scalars(self, ts: Sequence[Tensor]) -> Tensor:
        """Gather scalar tensors into a 1-D vector."""
        return self.concat([t.reshape((1,)) for t in ts], axis=0)

    def rows(self, a: Tensor, start: int, stop: int) -> Tensor:
        """Rows ``start:stop`` of a 2-D tensor."""
        self._check(a)
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape)
            out[start:stop] = g
            return (out,)

        return self._push("rows", (a,), a.data[start:stop], vjp)

    def index(self, a: Tensor, i: int) -> Tensor:
        """Element ``i`` of a 1-D tensor."""
        self._check(a)
        n = a.shape[0]

        def vjp(g):
            out = np.zeros(n)
            out[i] = g
            return (out,)

        return self._push("index", (a,), a.data[i], vjp)

    def max(self, a: Tensor) -> Tensor:
        """Hard max of a 1-D tensor; the subgradient goes to the first argmax."""
        self._check(a)
        i = int(np.argmax(a.data))
        n = a.shape[0]

        def vjp(g):
            out = np.zeros(n)
            out[i] = g
            return (out,)

        return self._push("max", (a,), a.data[i], vjp, argmax=i)

    # fused layers; each is also expressible through the primitives above

    def linear(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        """``x @ w + b`` as one node."""
        self._check(x, w, b)
        xd, wd = x.data, w.data
        if xd.ndim != 2 or xd.shape[1] != wd.shape[0]:
            raise ShapeError(
                f"linear: input has {xd.shape[-1] if xd.ndim else 0} features, "
                f"weight expects {wd.shape[0]}"
            )
        need_x, need_w, need_b = (self.requires_grad(t) for t in (x, w, b))
        return self._push(
            "linear", (x, w, b), xd @ wd + b.data,
            lambda g: (
                g @ wd.T if need_x else None,
                xd.T @ g if need_w else None,
                g.sum(axis=0) if need_b else None,
            ),
        )

    def batchnorm(self, x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
        """Per-feature batch normalization using batch statistics."""
        self._check(x, gamma, beta)
        xd = x.data
        n = xd.shape[0]
        mu = xd.mean(axis=0)
        var = xd.var(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xd - mu) * inv
        gd = gamma.data

        def vjp(g):
            dgamma = (g * xhat).sum(axis=0)
            dbeta = g.sum(axis=0)
            dxhat = g * gd
            dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            return dx, dgamma, dbeta

        return self._push(
            "batchnorm", (x, gamma, beta), xhat * gd + beta.data, vjp,
            batch_mean=mu, batch_var=var,
        )

    def squashed_sigmoid(self, a: Tensor, eps: float) -> Tensor:
        """``eps + (1 - 2 eps) * sigmoid(a)``."""
        self._check(a)
        s = _sigmoid(a.data)
        scale = 1.0 - 2.0 * eps
        return self._push(
            "squashed_sigmoid", (a,), eps + scale * s,
            lambda g: (g * scale * s * (1.0 - s),),
        )

    # backward

    def backward(self, loss: Tensor) -> Gradients:
        """Reverse sweep from a scalar ``loss``."""
        self._check(loss)
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: list = [None] * len(self.nodes)
        grads[loss.node] = np.ones_like(loss.data)
        for idx in range(loss.node, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or node.vjp is None:
                continue
            for src, gi in zip(node.inputs, node.vjp(g)):
                if gi is None:
                    continue
                if grads[src] is None:
                    grads[src] = gi
                else:
                    grads[src] = grads[src] + gi
        return Gradients(self, grads)


def _sigmoid(x: Array) -> Array:
    # branch-free stable logistic
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
