"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each operation records its parents and a closure that pushes the output
gradient back to them. Nodes are only recorded when at least one input
requires a gradient, so inference code pays nothing for the tape.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return getitem(self, idx)
    def __pow__(self, p): return power(self, p)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return tmean(self, axis, keepdims)

    def backward(self):
        backward(self)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _acc(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    # gradients are never mutated in place, so sharing arrays is safe
    t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor):
    """Populate ``.grad`` on every tensor reachable from a scalar ``loss``."""
    if loss.data.size != 1:
        raise InvalidArgumentError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    for node in order:
        if node._backward is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.data.shape, b.data.shape

    def bw(g):
        _acc(a, _unbroadcast(g, sa))
        _acc(b, _unbroadcast(g, sb))
    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.data.shape, b.data.shape

    def bw(g):
        _acc(a, _unbroadcast(g, sa))
        _acc(b, _unbroadcast(-g, sb))
    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.data.shape, b.data.shape

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, sa))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, sb))
    return _node(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.data.shape, b.data.shape
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g / b.data, sa))
        if b.requires_grad:
            _acc(b, _unbroadcast(-g * out / b.data, sb))
    return _node(out, (a, b), bw)


def neg(a) -> Tensor:
    a = tensor(a)
    return _node(-a.data, (a,), lambda g: _acc(a, -g))


def power(a, p: float) -> Tensor:
    a = tensor(a)
    if p == 2:
        return square(a)
    return _node(a.data ** p, (a,), lambda g: _acc(a, g * p * a.data ** (p - 1)))


def square(a) -> Tensor:
    a = tensor(a)
    return _node(a.data * a.data, (a,), lambda g: _acc(a, 2.0 * g * a.data))


def sqrt(a) -> Tensor:
    a = tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: _acc(a, 0.5 * g / out))


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * out))


def log(a) -> Tensor:
    a = tensor(a)
    return _node(np.log(a.data), (a,), lambda g: _acc(a, g / a.data))


def tanh(a) -> Tensor:
    a = tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * (1.0 - out * out)))


def relu(a) -> Tensor:
    a = tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: _acc(a, g * mask))


def softplus(a) -> Tensor:
    a = tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)

    def bw(g):
        _acc(a, g / (1.0 + np.exp(-x)))
    return _node(out, (a,), bw)


def mish(a) -> Tensor:
    """x * tanh(softplus(x)) as a single fused node."""
    a = tensor(a)
    x = a.data
    sp = np.logaddexp(0.0, x)
    t = np.tanh(sp)
    out = x * t

    def bw(g):
        sig = 0.5 * (1.0 + np.tanh(0.5 * x))
        _acc(a, g * (t + x * (1.0 - t * t) * sig))
    return _node(out, (a,), bw)


def clip(a, low, high) -> Tensor:
    """Clamp with a pass-through gradient strictly inside the bounds."""
    a = tensor(a)
    out = np.clip(a.data, low, high)
    mask = (a.data > low) & (a.data < high)
    return _node(out, (a,), lambda g: _acc(a, g * mask))


# ---------------------------------------------------------------- reductions

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = tensor(a)
    shape = a.data.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, shape))
    return _node(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis, keepdims), 1.0 / n)


# ---------------------------------------------------------------- structure

def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def bw(g):
        if a.requires_grad:
            _acc(a, g @ b.data.T)
        if b.requires_grad:
            _acc(b, a.data.T @ g)
    return _node(a.data @ b.data, (a, b), bw)


def linear(x, w, b) -> Tensor:
    """Fused affine map ``x @ w + b`` for a (batch, in) input."""
    x = tensor(x)

    def bw(g):
        if x.requires_grad:
            _acc(x, g @ w.data.T)
        if w.requires_grad:
            _acc(w, x.data.T @ g)
        if b.requires_grad:
            _acc(b, g.sum(axis=0))
    return _node(x.data @ w.data + b.data, (x, w, b), bw)


def concat(tensors, axis=-1) -> Tensor:
    ts = tuple(tensor(t) for t in tensors)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            _acc(t, piece)
    return _node(np.concatenate([t.data for t in ts], axis=axis), ts, bw)


def getitem(a, idx) -> Tensor:
    a = tensor(a)
    shape = a.data.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g) if _needs_add_at(idx) else full.__setitem__(idx, g)
        _acc(a, full)
    return _node(a.data[idx], (a,), bw)


def _needs_add_at(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(p, (list, np.ndarray)) for p in parts)


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select ``a`` where ``cond`` else ``b``; ``cond`` is a constant mask."""
    a, b = tensor(a), tensor(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.data.shape, b.data.shape

    def bw(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(np.where(cond, g, 0.0), sa))
        if b.requires_grad:
            _acc(b, _unbroadcast(np.where(cond, 0.0, g), sb))
    return _node(np.where(cond, a.data, b.data), (a, b), bw)
