"""Minimal reverse-mode automatic differentiation over NumPy arrays.

Just enough machinery for the downstream models in this package: an MLP
classifier and an attention set encoder. Tensors record a backward
closure per operation; ``backward()`` runs them in reverse topological
order. Graphs are only built when a participating tensor requires
gradients, so plain evaluation carries no overhead.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of NumPy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data, dtype=np.float64)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = parents
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(grad):
        a._accumulate(_unbroadcast(grad, a.data.shape))
        b._accumulate(_unbroadcast(grad, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(grad):
        a._accumulate(_unbroadcast(grad * b.data, a.data.shape))
        b._accumulate(_unbroadcast(grad * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(grad):
        a._accumulate(_unbroadcast(grad / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-grad * a.data / (b.data**2), b.data.shape))

    return _make(data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data**exponent

    def backward(grad):
        a._accumulate(grad * exponent * a.data ** (exponent - 1))

    return _make(data, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D; reshape vectors first")
    data = a.data @ b.data

    def backward(grad):
        ga = grad @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ grad
        a._accumulate(_unbroadcast(ga, a.data.shape))
        b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


def relu(a) -> Tensor:
    a = as_tensor(a)
    data = np.maximum(a.data, 0)

    def backward(grad):
        a._accumulate(grad * (a.data > 0))

    return _make(data, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(grad):
        a._accumulate(grad * data)

    return _make(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60, 60)))

    def backward(grad):
        a._accumulate(grad * data * (1.0 - data))

    return _make(data, (a,), backward)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        inner = (grad * data).sum(axis=axis, keepdims=True)
        a._accumulate((grad - inner) * data)

    return _make(data, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad):
        g = grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(grad):
        a._accumulate(grad.reshape(a.data.shape))

    return _make(data, (a,), backward)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(grad):
        a._accumulate(grad.transpose(inverse))

    return _make(data, (a,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(grad):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            idx = [slice(None)] * grad.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(grad[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross entropy from raw logits, numerically stable."""
    logits = as_tensor(logits)
    y = np.asarray(targets, dtype=np.float64)
    z = logits.data
    losses = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    data = np.asarray(losses.mean())

    def backward(grad):
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))
        logits._accumulate(grad * (p - y) / z.size)

    return _make(data, (logits,), backward)


def mse_loss(pred, target) -> Tensor:
    pred = as_tensor(pred)
    diff = pred - as_tensor(target)
    return tmean(mul(diff, diff))


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis; built from differentiable primitives."""
    a = as_tensor(a)
    mu = tmean(a, axis=-1, keepdims=True)
    centered = a - mu
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


class Adam:
    """Adam with conventional defaults (0.9, 0.999, eps 1e-8)."""

    def __init__(self, params: list[Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p.data, dtype=np.float64) for p in params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                 fan_in: int, dtype=np.float32) -> np.ndarray:
    """Fan-in-scaled uniform initialization."""
    bound = 1.0 / np.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def finite_difference_check(
    loss_fn,
    params: list[Tensor],
    rng: np.random.Generator,
    max_probes: int = 32,
    step: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes up to ``max_probes`` components sampled across all parameters.
    Parameters should be float64 for the comparison to be meaningful.
    Components smaller than the 1e-2 floor are compared absolutely against
    it: at the fixed step size, truncation noise makes a per-component
    relative comparison meaningless below that scale.
    """
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data, dtype=np.float64) if p.grad is None else p.grad.copy()
                for p in params]

    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    n_probes = min(max_probes, total)
    flat_choices = rng.choice(total, size=n_probes, replace=False)
    bounds = np.cumsum(sizes)

    def central(p: Tensor, offset: int, h: float) -> float:
        orig = p.data.flat[offset]
        p.data.flat[offset] = orig + h
        plus = float(loss_fn().data)
        p.data.flat[offset] = orig - h
        minus = float(loss_fn().data)
        p.data.flat[offset] = orig
        return (plus - minus) / (2 * h)

    worst = 0.0
    for flat in flat_choices:
        pi = int(np.searchsorted(bounds, flat, side="right"))
        offset = int(flat - (bounds[pi - 1] if pi else 0))
        # Richardson extrapolation of the central difference removes the
        # O(step^2) truncation term that dominates on small components.
        d_full = central(params[pi], offset, step)
        d_half = central(params[pi], offset, step / 2)
        fd = (4.0 * d_half - d_full) / 3.0
        g = float(analytic[pi].flat[offset])
        err = abs(fd - g) / max(1e-2, abs(fd) + abs(g))
        worst = max(worst, err)
    return worst
