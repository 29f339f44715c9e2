"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Each op returns a new Tensor holding its parents and a closure that pushes
the output gradient back to them. ``Tensor.backward`` walks the graph in
reverse topological order.
"""

from __future__ import annotations

import math

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, _parents=(a, b), _backward=back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, _parents=(a, b), _backward=back)


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching rules; ``b`` may be a plain 2-D weight."""
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor(a.data @ b.data, _parents=(a, b), _backward=back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def back(g):
        x._accumulate(g * mask)

    return Tensor(x.data * mask, _parents=(x,), _backward=back)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def back(g):
        x._accumulate(g * y * (1.0 - y))

    return Tensor(y, _parents=(x,), _backward=back)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def reshape(x: Tensor, shape: tuple) -> Tensor:
    def back(g):
        x._accumulate(g.reshape(x.shape))

    return Tensor(x.data.reshape(shape), _parents=(x,), _backward=back)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    inv = np.argsort(axes)

    def back(g):
        x._accumulate(np.transpose(g, inv))

    return Tensor(np.transpose(x.data, axes), _parents=(x,), _backward=back)


def concat(xs: list, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for x, part in zip(xs, np.split(g, cuts, axis=axis)):
            x._accumulate(part)

    return Tensor(np.concatenate([x.data for x in xs], axis=axis), _parents=tuple(xs), _backward=back)


def take_rows(x: Tensor, index) -> Tensor:
    """Rows ``x[index]`` along axis 0; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        x._accumulate(full)

    return Tensor(x.data[index], _parents=(x,), _backward=back)


def scatter_rows(x: Tensor, index, n_rows: int) -> Tensor:
    """Place row i of ``x`` at row ``index[i]`` of a zero tensor with ``n_rows`` rows."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((n_rows,) + x.shape[1:])
    out[index] = x.data

    def back(g):
        x._accumulate(g[index])

    return Tensor(out, _parents=(x,), _backward=back)


def masked_softmax(x: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the last axis; masked-out entries get exactly zero weight.

    A row with no valid entries comes out all zero.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    z = np.where(mask, x.data, -np.inf)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.where(mask, np.exp(np.where(mask, x.data, 0.0) - zmax), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def back(g):
        x._accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return Tensor(y, _parents=(x,), _backward=back)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def back(g):
        gamma._accumulate(_unbroadcast(g * xhat, gamma.shape))
        beta._accumulate(_unbroadcast(g, beta.shape))
        gx = g * gamma.data
        x._accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True)
                             - xhat * (gx * xhat).sum(axis=-1, keepdims=True) / n))

    return Tensor(xhat * gamma.data + beta.data, _parents=(x, gamma, beta), _backward=back)


PROB_CLAMP = 1e-7
LOGIT_CLAMP = math.log((1.0 - PROB_CLAMP) / PROB_CLAMP)


def weighted_bce_with_logits(logits: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """Mean of ``w * BCE(sigmoid(z), y)`` with z clamped so probabilities stay in [1e-7, 1-1e-7]."""
    y = np.asarray(labels, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    z = np.clip(logits.data, -LOGIT_CLAMP, LOGIT_CLAMP)
    inside = np.abs(logits.data) <= LOGIT_CLAMP
    per = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    n = per.size

    def back(g):
        logits._accumulate(g * w * (_sigmoid(z) - y) * inside / n)

    return Tensor(np.sum(w * per) / n, _parents=(logits,), _backward=back)


def sparse_matmul(rows, cols, vals, x: Tensor, n_rows: int) -> Tensor:
    """``A @ x`` for a constant sparse A given as coordinate triples."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    out = np.zeros((n_rows,) + x.shape[1:])
    np.add.at(out, rows, vals[:, None] * x.data[cols])

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, cols, vals[:, None] * g[rows])
        x._accumulate(gx)

    return Tensor(out, _parents=(x,), _backward=back)
