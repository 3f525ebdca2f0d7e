"""Small reverse-mode differentiation engine over dense float64 matrices.

Only the operations the GCN encoder and its losses need are provided.  Every
op returns a new :class:`Tensor` whose node remembers its inputs and a
vector-Jacobian product; :func:`backward` walks the recorded graph in reverse
topological order and accumulates gradients into the leaves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import LabelError, ShapeError, TapeError

STD_EPS = 1e-8
NORM_EPS = 1e-8


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tensor:
    """A dense matrix taking part in differentiation."""

    __array_priority__ = 100  # keep ndarray @ Tensor dispatching to Tensor

    def __init__(self, values, requires_grad: bool = False, node: Node | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self._grad = None
        self.node = node

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.values)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self.node.op if self.node else 'leaf'})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: subtract(self, other)
    __rsub__ = lambda self, other: subtract(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __rmatmul__ = lambda self, other: matmul(other, self)
    __neg__ = lambda self: scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return hadamard(self, other)

    __rmul__ = __mul__

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(values, op: str, inputs: Sequence[Tensor], vjp) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    return Tensor(values, requires_grad=needs, node=Node(op, tuple(inputs), vjp) if needs else None)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- primitives ---------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make(a.values @ b.values, "matmul", (a, b),
                 lambda g: (g @ b.values.T if a.requires_grad else None,
                            a.values.T @ g if b.requires_grad else None))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.values.T.copy(), "transpose", (a,), lambda g: (g.T,))


def add(a, b) -> Tensor:
    """Elementwise sum; ``b`` may broadcast along rows (bias vectors)."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.values + b.values, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "subtract")
    return _make(a.values - b.values, "subtract", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(c * a.values, "scale", (a,), lambda g: (c * g,))


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes differ {a.shape} vs {b.shape}")
    return _make(a.values * b.values, "hadamard", (a, b),
                 lambda g: (g * b.values if a.requires_grad else None,
                            g * a.values if b.requires_grad else None))


def elu(a) -> Tensor:
    """ELU with alpha = 1: ``x`` for ``x > 0``, ``exp(x) - 1`` otherwise."""
    a = as_tensor(a)
    neg = a.values <= 0
    out = np.expm1(np.minimum(a.values, 0.0))
    np.copyto(out, a.values, where=~neg)
    # derivative: 1 on the positive side, exp(x) = elu(x) + 1 otherwise
    return _make(out, "elu", (a,), lambda g: (g * np.where(neg, out + 1.0, 1.0),))


def row_l2_normalize(a, eps: float = NORM_EPS) -> Tensor:
    """Divide each row by ``max(||row||, eps)``."""
    a = as_tensor(a)
    norms = np.linalg.norm(a.values, axis=1, keepdims=True)
    floored = norms <= eps
    denom = np.where(floored, eps, norms)
    y = a.values / denom

    def vjp(g):
        proj = np.sum(y * g, axis=1, keepdims=True)
        return (np.where(floored, g / denom, (g - y * proj) / denom),)

    return _make(y, "row_l2_normalize", (a,), vjp)


def column_standardize(a, eps: float = STD_EPS) -> Tensor:
    """Map each column ``c`` to ``(c - mean c) / (std c * sqrt(N))``.

    ``std`` is the population standard deviation floored at ``eps``, so a
    non-degenerate output column has zero mean and unit sum of squares.
    """
    a = as_tensor(a)
    n = a.shape[0]
    xc = a.values - a.values.mean(axis=0, keepdims=True)
    std = np.sqrt(np.mean(xc * xc, axis=0, keepdims=True))
    live = std > eps
    s = np.where(live, std, eps)
    root_n = np.sqrt(n)
    out = xc / (s * root_n)

    def vjp(g):
        direct = g / (s * root_n)
        direct = direct - direct.mean(axis=0, keepdims=True)
        d_s = -np.sum(g * xc, axis=0, keepdims=True) / (s * s * root_n)
        via_std = np.where(live, d_s * xc / (n * s), 0.0)
        return (direct + via_std,)

    return _make(out, "column_standardize", (a,), vjp)


def frobenius_sq(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sum(a.values * a.values), "frobenius_sq", (a,),
                 lambda g: (2.0 * g * a.values,))


def row_cosine_mean(a, b, eps: float = NORM_EPS) -> Tensor:
    """Mean over rows of the cosine similarity between matching rows."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.values.ndim != 2:
        raise ShapeError(f"row_cosine_mean: shapes differ {a.shape} vs {b.shape}")
    n = a.shape[0]
    na = np.maximum(np.linalg.norm(a.values, axis=1, keepdims=True), eps)
    nb = np.maximum(np.linalg.norm(b.values, axis=1, keepdims=True), eps)
    live_a = np.linalg.norm(a.values, axis=1, keepdims=True) > eps
    live_b = np.linalg.norm(b.values, axis=1, keepdims=True) > eps
    dots = np.sum(a.values * b.values, axis=1, keepdims=True)
    cos = dots / (na * nb)

    def vjp(g):
        w = g / n
        ga = b.values / (na * nb) - np.where(live_a, cos * a.values / (na * na), 0.0)
        gb = a.values / (na * nb) - np.where(live_b, cos * b.values / (nb * nb), 0.0)
        return (w * ga, w * gb)

    return _make(np.mean(cos), "row_cosine_mean", (a, b), vjp)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-softmax of the true class (max-subtracted)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.values.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross entropy: logits {logits.shape} vs labels {labels.shape}")
    n_classes = logits.shape[1]
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)
                        or labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must be integers in [0, {n_classes}), got {np.unique(labels)}")
    n = logits.shape[0]
    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(log_z - shifted[rows, labels])

    def vjp(g):
        grad = softmax(logits.values)
        grad[rows, labels] -= 1.0
        return (g * grad / n,)

    return _make(loss, "softmax_cross_entropy", (logits,), vjp)


def take_rows(a, index) -> Tensor:
    """Rows ``a[index]`` (integer index array)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def vjp(g):
        out = np.zeros_like(a.values)
        np.add.at(out, index, g)
        return (out,)

    return _make(a.values[index], "take_rows", (a,), vjp)


def mean(a) -> Tensor:
    a = as_tensor(a)
    size = a.values.size
    return _make(np.mean(a.values), "mean", (a,),
                 lambda g: (np.full(a.shape, g / size),))


def total(a) -> Tensor:
    """Sum of all entries."""
    a = as_tensor(a)
    return _make(np.sum(a.values), "sum", (a,), lambda g: (np.full(a.shape, g),))


# -- tape & backward ----------------------------------------------------------

def tape(loss: Tensor) -> list[Tensor]:
    """Recorded op outputs reachable from ``loss``, inputs before outputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for parent in t.node.inputs:
            if parent.node is not None and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every requiring leaf."""
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = loss.grad + 1.0
            return
        raise TapeError("loss was not produced by any recorded operation")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
    for t in reversed(tape(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        for parent, pg in zip(t.node.inputs, t.node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg).reshape(parent.shape)
            if parent.node is None:
                parent.grad = parent.grad + pg
            else:
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamWState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adamw_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
               state: AdamWState) -> list[np.ndarray]:
    """One AdamW update with bias-corrected moments and decoupled weight decay.

    Returns new parameter arrays; ``state`` moments and step are updated in place.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    updated = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ShapeError(f"adamw: parameter {i} shape {p.shape} vs grad {g.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        updated.append(p - state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p))
    return updated


class AdamW:
    """Optimizer over leaf tensors, reading their ``.grad``."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-2):
        self.params = list(params)
        self.state = AdamWState(lr, betas[0], betas[1], eps, weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        new = adamw_step([p.values for p in self.params], [p.grad for p in self.params], self.state)
        for p, values in zip(self.params, new):
            p.values = values
