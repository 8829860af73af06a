"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps a float64 ndarray plus graph metadata; every op that touches a
grad-requiring input records its parents and a local-gradient closure, so the
op graph itself is the tape. ``backward`` walks it once in reverse topological
order and then severs the recorded edges.

Only grad-requiring nodes ever carry parents: constants fold out of the graph
at construction, which is what guarantees that non-trainable leaves never
receive gradients.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Suspend tape recording; forwards inside are plain numpy evaluation."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class DivergenceError(RuntimeError):
    """A forward value went non-finite; training must stop, not limp on."""


def _as_values(data) -> np.ndarray:
    return np.asarray(data, dtype=np.float64)


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.values = _as_values(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        # copy on first contribution: `grad` may alias a buffer shared with
        # another node, and later contributions add in place
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
            if self.grad.shape != self.values.shape:
                self.grad = np.broadcast_to(self.grad, self.values.shape).copy()
        else:
            self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants fold to plain arrays
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, negate(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), negate(self))

    def __mul__(self, other):
        return elementwise_multiply(self, _wrap(other))

    def __rmul__(self, other):
        return elementwise_multiply(_wrap(other), self)

    def __neg__(self):
        return negate(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(values: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Create an op output; records the tape edge only if a parent needs grad."""
    out = Tensor(values)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def custom_op(values, parents: Sequence[Tensor], grad_fn) -> Tensor:
    """Extension point for ops whose local gradients are computed externally.

    `grad_fn` receives the upstream gradient and must accumulate into the
    parents itself (via their `_accumulate`).
    """
    return _node(_as_values(values), tuple(parents), grad_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` over axes that numpy broadcasting expanded, back to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Populate d(loss)/d(leaf) for every grad-requiring leaf, then clear the tape."""
    if loss.values.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    loss._accumulate(np.ones_like(loss.values))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        node._parents = ()
        node._backward = None


# -- primitive ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    values = a.values + b.values

    def grad_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(values, (a, b), grad_fn)


def negate(a: Tensor) -> Tensor:
    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(-g)

    return _node(-a.values, (a,), grad_fn)


def elementwise_multiply(a: Tensor, b: Tensor) -> Tensor:
    values = a.values * b.values

    def grad_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.values, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.values, b.shape))

    return _node(values, (a, b), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError(
            f"matmul expects 2-d operands, got {a.values.ndim}-d and {b.values.ndim}-d"
        )
    values = a.values @ b.values

    def grad_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.values.T)
        if b.requires_grad:
            b._accumulate(a.values.T @ g)

    return _node(values, (a, b), grad_fn)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias in one tape node (the dense-layer hot path)."""
    if x.values.ndim != 2 or weight.values.ndim != 2 or bias.values.ndim != 1:
        raise ValueError("affine expects x [n,d], weight [d,k], bias [k]")
    values = x.values @ weight.values + bias.values

    def grad_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            x._accumulate(g @ weight.values.T)
        if weight.requires_grad:
            weight._accumulate(x.values.T @ g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _node(values, (x, weight, bias), grad_fn)


def relu(a: Tensor) -> Tensor:
    values = np.maximum(a.values, 0.0)

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g * (a.values > 0.0))

    return _node(values, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    values = np.tanh(a.values)

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g * (1.0 - values * values))

    return _node(values, (a,), grad_fn)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    values = _sigmoid(a.values)

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g * values * (1.0 - values))

    return _node(values, (a,), grad_fn)


def exp(a: Tensor) -> Tensor:
    values = np.exp(a.values)

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g * values)

    return _node(values, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g / a.values)

    return _node(np.log(a.values), (a,), grad_fn)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old_shape = a.shape

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(g.reshape(old_shape))

    return _node(a.values.reshape(shape), (a,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [t.values for t in tensors]
    values = np.concatenate(parts, axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def grad_fn(g: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return _node(values, tuple(tensors), grad_fn)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices)
    if indices.ndim != 1:
        raise ValueError("embedding_lookup expects a flat index vector")
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ValueError("embedding index out of range")

    def grad_fn(g: np.ndarray) -> None:
        acc = np.zeros_like(table.values)
        np.add.at(acc, indices, g)
        table._accumulate(acc)

    return _node(table.values[indices], (table,), grad_fn)


def tensor_sum(a: Tensor) -> Tensor:
    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(np.broadcast_to(g, a.shape))

    return _node(np.sum(a.values), (a,), grad_fn)


def mean(a: Tensor) -> Tensor:
    size = a.values.size

    def grad_fn(g: np.ndarray) -> None:
        a._accumulate(np.broadcast_to(g / size, a.shape))

    return _node(np.mean(a.values), (a,), grad_fn)


# -- losses -----------------------------------------------------------------


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on logits, stable via the log-sum-exp form.

    Targets are plain probabilities in [0, 1]; smoothed labels like 0.9 are
    ordinary values here.
    """
    targets = _as_values(targets)
    if targets.shape != logits.shape:
        raise ValueError(f"targets shape {targets.shape} != logits shape {logits.shape}")
    if targets.size and (targets.min() < 0.0 or targets.max() > 1.0):
        raise ValueError("targets must lie in [0, 1]")
    x = logits.values
    per_element = np.maximum(x, 0.0) - x * targets + np.log1p(np.exp(-np.abs(x)))
    size = x.size

    def grad_fn(g: np.ndarray) -> None:
        logits._accumulate(g * (_sigmoid(x) - targets) / size)

    return _node(np.mean(per_element), (logits,), grad_fn)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-softmax at the true label."""
    labels = np.asarray(labels)
    if logits.values.ndim != 2:
        raise ValueError("cross_entropy expects [batch, n_classes] logits")
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} != ({batch},)")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label out of range")
    x = logits.values
    shift = x - x.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shift), axis=1))
    log_probs = shift - log_z[:, None]
    rows = np.arange(batch)

    def grad_fn(g: np.ndarray) -> None:
        soft = np.exp(log_probs)
        soft[rows, labels] -= 1.0
        logits._accumulate(g * soft / batch)

    return _node(-np.mean(log_probs[rows, labels]), (logits,), grad_fn)


def check_finite(t: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(t.values)):
        raise DivergenceError(f"{what} went non-finite")
    return t
