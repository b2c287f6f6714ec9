"""Small dense 2-D tensor engine with reverse-mode differentiation.

Only the operations needed by the summarization network are provided. Every
tensor is a 2-D numpy array; vectors are stored as ``1 x n`` rows. A
:class:`Graph` records each primitive as it is evaluated and replays the
records in reverse during :meth:`Graph.backward`.
"""
from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


class StateError(RuntimeError):
    """Raised when a graph is used out of order (e.g. backward twice)."""


class Tensor:
    __slots__ = ("value", "graph", "requires_grad", "name")

    def __init__(self, value, graph, requires_grad=False, name=None):
        self.value = value
        self.graph = graph
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def numpy(self):
        return self.value.copy()

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}{self.value.shape}"


class Graph:
    """Records primitive operations for one forward pass.

    ``dtype`` selects the working precision (float32 by default, float64 for
    gradient checks).
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._tape: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._consumed = False

    def _as_2d(self, array):
        array = np.asarray(array, dtype=self.dtype)
        if array.ndim == 0:
            array = array.reshape(1, 1)
        elif array.ndim == 1:
            array = array.reshape(1, -1)
        elif array.ndim != 2:
            raise DimensionError(f"expected a 2-D array, got shape {array.shape}")
        return array

    def param(self, name, array) -> Tensor:
        if name in self.params:
            raise StateError(f"parameter {name!r} registered twice")
        t = Tensor(self._as_2d(array).copy(), self, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def constant(self, array) -> Tensor:
        return Tensor(self._as_2d(array), self)

    def record(self, value, parents, backward) -> Tensor:
        """Register an op output.

        ``backward(g)`` receives the upstream gradient and returns one gradient
        (or None) per parent, in order.
        """
        if self._consumed:
            raise StateError("graph already differentiated; start a new forward pass")
        for p in parents:
            if p.graph is not self:
                raise StateError("operands belong to a different graph")
        needs = any(p.requires_grad for p in parents)
        out = Tensor(value, self, requires_grad=needs)
        if needs:
            self._tape.append((out, tuple(parents), backward))
        return out

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` for every registered parameter."""
        if self._consumed:
            raise StateError("backward already run on this graph")
        if loss.graph is not self or loss.value.shape != (1, 1):
            raise StateError("loss must be a 1x1 tensor produced by this graph")
        self._consumed = True

        grads = {id(loss): np.ones_like(loss.value)}
        for out, parents, fn in reversed(self._tape):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, gp in zip(parents, fn(g)):
                if gp is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + gp
                else:
                    grads[key] = gp
        self._tape.clear()
        return {
            name: grads.get(id(t), np.zeros_like(t.value)).astype(self.dtype, copy=False)
            for name, t in self.params.items()
        }


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return a.graph.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Tensor) -> Tensor:
    return a.graph.record(a.value.T.copy(), (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return a.graph.record(a.value + b.value, (a, b), lambda g: (g, g))


def add_broadcast(a: Tensor, row: Tensor) -> Tensor:
    """Add a ``1 x cols`` row to every row of ``a``."""
    if row.shape != (1, a.shape[1]):
        raise DimensionError(f"add_broadcast: row {row.shape} does not fit {a.shape}")
    return a.graph.record(
        a.value + row.value, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True))
    )


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "elementwise_mul")
    av, bv = a.value, b.value
    return a.graph.record(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    c = a.graph.dtype.type(c)
    return a.graph.record(a.value * c, (a,), lambda g: (g * c,))


def softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return a.graph.record(y, (a,), back)


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    # scale by the row max first so tiny or huge rows do not under/overflow when squared
    peak = np.abs(a.value).max(axis=1, keepdims=True)
    unit = a.value / np.where(peak > 0, peak, 1)
    unit_norm = np.sqrt((unit * unit).sum(axis=1, keepdims=True))
    norm = peak * unit_norm
    safe = np.where(norm > 0, norm, 1)
    y = np.where(peak > 0, unit / np.where(peak > 0, unit_norm, 1), 0).astype(a.graph.dtype)

    def back(g):
        gx = (g - y * (g * y).sum(axis=1, keepdims=True)) / safe
        return (np.where(norm > 0, gx, 0).astype(a.graph.dtype),)

    return a.graph.record(y, (a,), back)


def layer_norm_rows(a: Tensor, gain: Tensor, bias: Tensor, eps=1e-5) -> Tensor:
    cols = a.shape[1]
    if gain.shape != (1, cols) or bias.shape != (1, cols):
        raise DimensionError(
            f"layer_norm_rows: gain {gain.shape}/bias {bias.shape} do not fit {a.shape}"
        )
    x = a.value
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1 / np.sqrt((xc * xc).mean(axis=1, keepdims=True) + eps)
    xhat = xc * inv
    gv = gain.value

    def back(g):
        dxhat = g * gv
        dx = inv * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        return (
            dx,
            (g * xhat).sum(axis=0, keepdims=True),
            g.sum(axis=0, keepdims=True),
        )

    return a.graph.record(xhat * gv + bias.value, (a, gain, bias), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    # branch-free stable form
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(a.graph.dtype)
    return a.graph.record(y, (a,), lambda g: (g * y * (1 - y),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return a.graph.record(a.value * mask, (a,), lambda g: (g * mask,))


def concat_cols(*parts: Tensor) -> Tensor:
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise DimensionError(
            f"concat_cols: row counts differ {[p.shape for p in parts]}"
        )
    edges = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(edges[:-1], edges[1:]))

    return parts[0].graph.record(
        np.concatenate([p.value for p in parts], axis=1), parts, back
    )


def dropout(a: Tensor, rate, rng, training) -> Tensor:
    """Inverted dropout; identity (and no RNG draw) when not training."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.graph.dtype) / (1 - rate)
    return a.graph.record(a.value * keep, (a,), lambda g: (g * keep,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return a.graph.record(
        a.value.sum().reshape(1, 1), (a,), lambda g: (np.broadcast_to(g, shape).copy(),)
    )


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    return scale(sum_all(a), 1.0 / n)
