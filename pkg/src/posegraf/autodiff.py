"""Dense fp64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the tape that is active in the current
thread (see :class:`Tape`). Outside a tape nothing is recorded, which is
what inference uses. Arrays carry an optional leading batch axis; matrix
products broadcast over it.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715
SQRT_EPS = 1e-12

_local = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_local, "tape", None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as they are created, so the list is already in
    topological order. Use as a context manager to make it the active tape
    of the current thread.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = _active_tape()
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev
        self._prev = None

    def record(self, node: Tensor) -> None:
        self.nodes.append(node)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

        Calling twice without :func:`zero_grads` adds the gradients again.
        """
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise ValueError("loss does not depend on any requires_grad tensor")
        if loss._backward is None:
            loss._accumulate(np.ones_like(loss.data))
            return
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._backward is None:
                    parent._accumulate(pg)
                else:
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg


def backward(loss: Tensor) -> None:
    """Run the backward pass of ``loss`` on the active tape."""
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("no active tape; wrap the forward pass in `with Tape():`")
    tape.backward(loss)


@contextmanager
def no_tape():
    """Suspend recording in the current thread."""
    prev = _active_tape()
    _local.tape = None
    try:
        yield
    finally:
        _local.tape = prev


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape.record(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.ndim == 2 and a.ndim > 2:
        # (..., n, k) @ (k, m): one flat GEMM instead of a batched one
        k = a.shape[-1]
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))

        def bw(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a.data.reshape(-1, k).T @ g2 if b.requires_grad else None
            return ga, gb

        return _make(out, (a, b), bw)

    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), bw)


def transpose(x, axes: Sequence[int] | None = None) -> Tensor:
    """Swap the last two axes, or permute by ``axes``."""
    x = as_tensor(x)
    if axes is None:
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    """Hadamard product (with the broadcasting numpy allows)."""
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw)


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def sqrt_eps(x) -> Tensor:
    """sqrt(x + 1e-12); finite derivative at x = 0."""
    x = as_tensor(x)
    out = np.sqrt(x.data + SQRT_EPS)
    return _make(out, (x,), lambda g: (g * 0.5 / out,))


def sum(x, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)
    src = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(np.asarray(out), (x,), bw)


def mean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    nd = ts[0].ndim
    if not -nd <= axis < nd:
        raise ValueError(f"axis {axis} out of range for {nd}-d tensors")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as e:
        raise ValueError(f"concat shape mismatch: {[t.shape for t in ts]}") from e
    cuts = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _make(out, ts, lambda g: tuple(np.split(g, cuts, axis=axis)))


def split(x, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"axis {axis} out of range for shape {x.shape}")
    if int(np.sum(sizes)) != x.shape[axis]:
        raise ValueError(f"split sizes {list(sizes)} do not cover axis of length {x.shape[axis]}")
    outs = []
    start = 0
    for n in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(start, start + n)
        idx = tuple(idx)

        def bw(g, idx=idx):
            full = np.zeros_like(x.data)
            full[idx] = g
            return (full,)

        outs.append(_make(x.data[idx], (x,), bw))
        start += n
    return outs


# ---------------------------------------------------------------- activations


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x, alpha: float = 0.01) -> Tensor:
    x = as_tensor(x)
    slope = np.where(x.data > 0, 1.0, alpha)
    return _make(x.data * slope, (x,), lambda g: (g * slope,))


def gelu(x) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = as_tensor(x)
    v = x.data
    t = np.tanh(GELU_C * (v + GELU_K * v * v * v))
    out = 0.5 * v * (1.0 + t)

    def bw(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return _make(out, (x,), bw)


def softmax_rows(x) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _make(s, (x,), bw)


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Parameter-free normalization of each row over the last axis."""
    x = as_tensor(x)
    c = sub(x, mean(x, axis=-1, keepdims=True))
    var = mean(mul(c, c), axis=-1, keepdims=True)
    return div(c, sqrt_eps(add(var, eps)))


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gamma: float = 0.96
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def epoch_decay(self) -> None:
        self.lr *= self.gamma


def adam_step(params: dict[str, Tensor], state: AdamState, grads: dict[str, np.ndarray] | None = None) -> None:
    """One bias-corrected Adam update, in place.

    ``grads`` defaults to each parameter's ``.grad``; parameters without a
    gradient are treated as having zero gradient.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def epoch_decay(state: AdamState) -> None:
    state.epoch_decay()
