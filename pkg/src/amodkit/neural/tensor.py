"""Minimal reverse-mode automatic differentiation over dense f64 arrays.

Each Tensor wraps a numpy array plus its gradient slot and the backward
dependency record. backward() seeds a scalar loss and walks the graph in
reverse topological order exactly once, accumulating into .grad (repeated
calls accumulate; zero explicitly between updates). Everything is 64-bit:
desk-scale networks are tiny and exact finite-difference checks stay crisp.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

__all__ = [
    "OP_NAMES", "Tensor", "add", "backward", "concat", "clip_global_norm",
    "digamma", "exp", "lgamma", "log", "matmul", "mul", "neg", "parameter",
    "relu", "reshape", "sigmoid", "slice_cols", "softplus", "sub", "tensor",
    "tensor_sum", "tanh", "zero_grads",
]

# Every differentiable op registers its name here; the gradient-check
# suite asserts it covers the full list.
OP_NAMES: list[str] = []


class Tensor:
    __slots__ = ("values", "grad", "parents", "bwd")

    def __init__(self, values, parents=(), bwd=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bwd = bwd

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(values) -> Tensor:
    """Wrap an array as a constant leaf."""
    return Tensor(values)


def parameter(values) -> Tensor:
    """A trainable leaf; its gradient starts at exactly zero."""
    t = Tensor(np.array(values, dtype=np.float64))
    t.grad = np.zeros_like(t.values)
    return t


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the parent's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _register(name):
    OP_NAMES.append(name)
    def keep(fn):
        return fn
    return keep


@_register("add")
def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values + b.values, (a, b),
                 lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)))
    return out


@_register("sub")
def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.values - b.values, (a, b),
                  lambda g: (_unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)))


@_register("mul")
def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return Tensor(a.values * b.values, (a, b),
                  lambda g: (_unbroadcast(g * b.values, a.values.shape),
                             _unbroadcast(g * a.values, b.values.shape)))


@_register("neg")
def neg(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(-a.values, (a,), lambda g: (-g,))


@_register("matmul")
def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    return Tensor(a.values @ b.values, (a, b),
                  lambda g: (g @ b.values.T, a.values.T @ g))


@_register("sum")
def tensor_sum(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.values.sum(), (a,),
                  lambda g: (np.broadcast_to(g, a.values.shape).copy(),))


@_register("relu")
def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.values > 0
    return Tensor(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,))


@_register("sigmoid")
def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = _sp.expit(a.values)
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),))


@_register("tanh")
def tanh(a) -> Tensor:
    a = _as_tensor(a)
    th = np.tanh(a.values)
    return Tensor(th, (a,), lambda g: (g * (1.0 - th * th),))


@_register("softplus")
def softplus(a) -> Tensor:
    """log(1 + e^x) in the overflow-safe branch form max(x,0) + log1p(e^-|x|)."""
    a = _as_tensor(a)
    v = a.values
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    s = _sp.expit(v)
    return Tensor(out, (a,), lambda g: (g * s,))


@_register("log")
def log(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(np.log(a.values), (a,), lambda g: (g / a.values,))


@_register("exp")
def exp(a) -> Tensor:
    a = _as_tensor(a)
    e = np.exp(a.values)
    return Tensor(e, (a,), lambda g: (g * e,))


@_register("lgamma")
def lgamma(a) -> Tensor:
    """log |Gamma(x)| for positive arguments; gradient is the digamma function."""
    a = _as_tensor(a)
    return Tensor(_sp.gammaln(a.values), (a,), lambda g: (g * _sp.digamma(a.values),))


@_register("digamma")
def digamma(a) -> Tensor:
    a = _as_tensor(a)
    return Tensor(_sp.digamma(a.values), (a,),
                  lambda g: (g * _sp.polygamma(1, a.values),))


@_register("concat")
def concat(a, b, axis: int = 1) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    k = a.values.shape[axis]

    def bwd(g):
        ga, gb = np.split(g, [k], axis=axis)
        return ga, gb

    return Tensor(np.concatenate([a.values, b.values], axis=axis), (a, b), bwd)


@_register("reshape")
def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.values.shape
    return Tensor(a.values.reshape(shape), (a,), lambda g: (g.reshape(old),))


@_register("slice_cols")
def slice_cols(a, start: int, stop: int) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        full = np.zeros_like(a.values)
        full[:, start:stop] = g
        return (full,)

    return Tensor(a.values[:, start:stop], (a,), bwd)


def backward(loss: Tensor) -> None:
    """Populate .grad on every node reachable from a scalar loss."""
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))

    seed = np.ones_like(loss.values)
    loss.grad = seed if loss.grad is None else loss.grad + seed
    grads: dict[int, np.ndarray] = {id(loss): seed}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None or node.bwd is None:
            continue
        for p, pg in zip(node.parents, node.bwd(g)):
            if pg is None:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            if not p.parents:          # leaf: expose the accumulated gradient
                p.grad = pg.reshape(p.values.shape) if p.grad is None \
                    else p.grad + pg.reshape(p.values.shape)


def zero_grads(params) -> None:
    for p in params:
        p.grad = np.zeros_like(p.values)


def clip_global_norm(params, max_norm: float) -> float:
    """Scale gradients in place so their joint L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = total ** 0.5
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm
