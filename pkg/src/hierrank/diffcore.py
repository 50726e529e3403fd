"""Small reverse-mode autodiff core over numpy arrays, plus Adam.

Only the handful of ops needed by the compare-aggregate ranker are provided.
Every op returns a new :class:`Tensor` that remembers its parents and a
closure that pushes the output gradient back to them.
"""
from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "AdamState",
    "Adam",
    "adam_step",
    "tensor",
    "parameter",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "sigmoid",
    "tanh",
    "relu",
    "log",
    "softmax",
    "log_softmax",
    "concat",
    "swapaxes",
    "reshape",
    "unfold",
    "max_over_time",
    "take",
    "sum",
    "mean",
    "no_grad",
]

# per thread/task, so concurrent replicates do not interfere
_GRAD_ENABLED: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad():
    """Build no graph inside this block (forward values only)."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


class Tensor:
    """A numpy array that participates in a differentiable graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every trainable leaf's ``grad``.

        Leaf gradients add onto whatever is already stored, so several
        backward calls before an optimizer step sum their contributions.
        Intermediate nodes get their (fresh) gradient assigned for inspection.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar root, got shape {self.shape}")
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def tensor(data, dtype=None) -> Tensor:
    """Constant (non-trainable) tensor."""
    return Tensor(np.asarray(data, dtype=dtype))


def parameter(data, dtype=None, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    if not _GRAD_ENABLED.get() or not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def swapaxes(x: Tensor, axis1: int = -1, axis2: int = -2) -> Tensor:
    out = np.swapaxes(x.data, axis1, axis2)
    return _make(out, (x,), lambda g: (np.swapaxes(g, axis1, axis2),))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    out = x.data.reshape(shape)
    return _make(out, (x,), lambda g: (g.reshape(x.shape),))


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), backward)


def neg(x: Tensor) -> Tensor:
    return _make(-x.data, (x,), lambda g: (-g,))


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype, copy=False)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    out = np.where(pos, x.data, 0).astype(x.dtype, copy=False)
    return _make(out, (x,), lambda g: (g * pos,))


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    """Natural log; inputs below ``eps`` are clamped and get zero gradient."""
    kept = x.data >= eps
    safe = np.maximum(x.data, eps) if eps > 0 else x.data
    out = np.log(safe)
    return _make(out, (x,), lambda g: (np.where(kept, g / safe, 0).astype(g.dtype, copy=False),))


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Numerically stable softmax along ``axis``.

    ``mask`` (broadcastable boolean, True = keep) acts as a -inf sentinel for
    the dropped entries. Every slice along ``axis`` needs one kept entry.
    """
    d = x.data
    if mask is not None:
        mask = np.broadcast_to(mask, d.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax: a row is fully masked (degenerate attention row)")
        d = np.where(mask, d, -np.inf)
    shifted = d - d.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype, copy=False)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), backward)


# -- shape ops --------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, backward)


def unfold(x: Tensor, size: int) -> Tensor:
    """Sliding windows over the time axis: [..., L, h] -> [..., L-size+1, size*h].

    Window ``j`` is rows ``j..j+size-1`` laid side by side, so a convolution of
    width ``size`` is ``unfold(x, size) @ W`` with ``W`` of shape [size*h, c].
    """
    length = x.shape[-2]
    if length < size:
        raise ValueError(f"unfold: length {length} shorter than window {size}")
    n = length - size + 1
    out = np.concatenate([x.data[..., j:j + n, :] for j in range(size)], axis=-1)
    h = x.shape[-1]

    def backward(g):
        gx = np.zeros_like(x.data)
        for j in range(size):
            gx[..., j:j + n, :] += g[..., j * h:(j + 1) * h]
        return (gx,)

    return _make(out, (x,), backward)


def max_over_time(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Max over axis -2 (time). Gradient goes to the argmax row only.

    Ties go to the lowest index (np.argmax semantics). ``mask`` is a boolean
    [..., L] array of allowed positions; each sequence needs one.
    """
    d = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not np.all(mask.any(axis=-1)):
            raise ValueError("max_over_time: sequence with no valid positions")
        d = np.where(mask[..., None], d, -np.inf)
    idx = np.argmax(d, axis=-2)
    out = np.take_along_axis(x.data, idx[..., None, :], axis=-2)[..., 0, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None, :], g[..., None, :], axis=-2)
        return (gx,)

    return _make(out, (x,), backward)


def take(x: Tensor, index, axis: int = 0) -> Tensor:
    """Gather entries along ``axis`` with an integer index array (repeats allowed)."""
    index = np.asarray(index, dtype=np.intp)
    out = np.take(x.data, index, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        moved = np.moveaxis(gx, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0) if index.ndim else g)
        return (gx,)

    return _make(out, (x,), backward)


# -- reductions -------------------------------------------------------------

def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward)


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    out = x.data.mean()
    return _make(out, (x,), lambda g: (np.full_like(x.data, g / n),))


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_param(cls, param: Tensor, lr: float, **kw) -> "AdamState":
        return cls(np.zeros_like(param.data), np.zeros_like(param.data), lr, **kw)


def adam_step(param: Tensor, state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place. ``param.grad`` is kept."""
    if param.grad is None:
        raise ValueError(f"adam_step: parameter {param.name or param.shape} has no grad")
    if state.m.shape != param.shape:
        raise ValueError(f"adam_step: state shape {state.m.shape} != param shape {param.shape}")
    g = param.grad
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    param.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)


@dataclass
class Adam:
    """Adam over named parameters, each with its own learning rate."""

    states: dict[str, AdamState] = field(default_factory=dict)

    def add(self, name: str, param: Tensor, lr: float) -> None:
        self.states[name] = AdamState.for_param(param, lr)

    def step(self, params: dict[str, Tensor]) -> None:
        for name, state in self.states.items():
            p = params[name]
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            adam_step(p, state)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
