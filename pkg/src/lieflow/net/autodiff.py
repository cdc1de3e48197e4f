"""Small reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` records the operation that produced it and a closure that
pushes its gradient to its parents. :func:`backward` runs those closures in
reverse topological order. Only the primitives the velocity networks need
are provided.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    __slots__ = ("value", "grad", "parents", "op", "_backward", "requires_grad")

    def __init__(self, value, parents=(), op="leaf", requires_grad=False):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self.op = op
        self._backward = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value, (a, b), "add")

    def bw(g):
        a._accum(_unbroadcast(g, a.shape))
        b._accum(_unbroadcast(g, b.shape))

    out._backward = bw
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.value, (a,), "neg")
    out._backward = lambda g: a._accum(-g)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value * b.value, (a, b), "mul")

    def bw(g):
        a._accum(_unbroadcast(g * b.value, a.shape))
        b._accum(_unbroadcast(g * a.value, b.shape))

    out._backward = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value @ b.value, (a, b), "matmul")

    def bw(g):
        if a.requires_grad:
            a._accum(g @ b.value.T)
        if b.requires_grad:
            b._accum(a.value.T @ g)

    out._backward = bw
    return out


def gelu_value(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = a.value
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    out = Tensor(x * cdf, (a,), "gelu")

    def bw(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        a._accum(g * (cdf + x * pdf))

    out._backward = bw
    return out


def sin(a: Tensor) -> Tensor:
    out = Tensor(np.sin(a.value), (a,), "sin")
    out._backward = lambda g: a._accum(g * np.cos(a.value))
    return out


def cos(a: Tensor) -> Tensor:
    out = Tensor(np.cos(a.value), (a,), "cos")
    out._backward = lambda g: a._accum(-g * np.sin(a.value))
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.value.reshape(shape), (a,), "reshape")
    out._backward = lambda g: a._accum(g.reshape(a.shape))
    return out


def concat(parts, axis=-1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out = Tensor(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), "concat")
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, sizes, axis=axis)):
            p._accum(gp)

    out._backward = bw
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor(a.value * a.value, (a,), "square")
    out._backward = lambda g: a._accum(2.0 * a.value * g)
    return out


def mean(a: Tensor) -> Tensor:
    n = a.value.size
    out = Tensor(a.value.mean(), (a,), "mean")
    out._backward = lambda g: a._accum(np.full(a.shape, float(g) / n))
    return out


def sum_(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.value.sum(axis=axis), (a,), "sum")

    def bw(g):
        if axis is None:
            a._accum(np.full(a.shape, float(g)))
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    out._backward = bw
    return out


def backward(root: Tensor, seed=None) -> None:
    """Populate ``.grad`` on every tensor reachable from ``root``."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=float)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
