"""Dense-tensor reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray and records, per operation, its parent tensors
and a closure that pushes the output gradient back to them.  ``backward`` on a
scalar walks the recorded graph once in reverse topological order and
accumulates ``.grad`` on every tensor that requires it.  Double precision is
the default; everything here is CPU numpy, no fusion, no GPU.

``grad_check`` is the independent oracle: central finite differences on a
sampled coordinate subset, with a documented skip rule for coordinates whose
evaluation passes near a ReLU/clamp kink.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

# Non-smooth ops (relu, clamp_min) report their pre-activation sign patterns
# into this sink while a monitor is active; grad_check compares the patterns
# of the +h and -h evaluations to detect a kink crossing.
_KINK_SIGNS: list | None = None


@contextmanager
def record_kink_signs(sink: list):
    """Collect packed sign patterns of kinked ops during forward evaluation."""
    global _KINK_SIGNS
    prev = _KINK_SIGNS
    _KINK_SIGNS = sink
    try:
        yield sink
    finally:
        _KINK_SIGNS = prev


def _note_kink_signs(above: np.ndarray) -> None:
    if _KINK_SIGNS is not None:
        _KINK_SIGNS.append(np.packbits(above.reshape(-1)).tobytes())


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over the axes numpy broadcasting introduced or stretched."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode AD."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    # -- basics ----------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- graph traversal ---------------------------------------------------

    def backward(self) -> None:
        """Accumulate dself/dθ into ``.grad`` of every requires_grad ancestor.

        Only defined for scalar tensors.  Repeated calls without clearing
        gradients accumulate, so backward(a); backward(b) on disjoint graphs
        equals backward on a + b.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative DFS; graphs can exceed the recursion limit
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


# -- primitive ops ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes (numpy matmul rules)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul expects ndim >= 2 operands, got {a.ndim} and {b.ndim}")
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(out_data, (a, b), backward)


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def moveaxis(a: Tensor, source: int, destination: int) -> Tensor:
    def backward(g):
        a._accumulate(np.moveaxis(g, destination, source))

    return _make(np.moveaxis(a.data, source, destination), (a,), backward)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    def backward(g):
        a._accumulate(np.swapaxes(g, ax1, ax2))

    return _make(np.swapaxes(a.data, ax1, ax2), (a,), backward)


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        a._accumulate(np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def slice_(a: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing; index regions must not overlap."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[idx] += g
        a._accumulate(full)

    return _make(a.data[idx], (a,), backward)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor (embedding lookup); repeats allowed."""
    indices = np.asarray(indices)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, indices.reshape(-1), g.reshape(-1, a.shape[-1]))
        a._accumulate(full)

    return _make(a.data[indices], (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    _note_kink_signs(mask)

    def backward(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    mask = a.data > floor
    _note_kink_signs(mask)

    def backward(g):
        a._accumulate(g * mask)

    return _make(np.maximum(a.data, floor), (a,), backward)


def sin(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g * np.cos(a.data))

    return _make(np.sin(a.data), (a,), backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out_data)

    return _make(out_data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow; gradient is sigmoid(x)."""

    def backward(g):
        a._accumulate(g * _sigmoid_np(a.data))

    return _make(np.logaddexp(0.0, a.data), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = _sigmoid_np(a.data)

    def backward(g):
        a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    return _make(out_data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    """Scale rows to unit euclidean norm; all-zero rows pass through as zeros."""
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm == 0.0, 1.0, norm)
    out_data = a.data / safe

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate((g - out_data * dot) / safe)

    return _make(out_data, (a,), backward)


# -- composites -------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias, with weight stored as (out_features, in_features).

    A 1-D input is treated as a single row and comes back 1-D.
    """
    squeeze = x.ndim == 1
    if squeeze:
        x = reshape(x, (1, x.shape[0]))
    out = matmul(x, swapaxes(weight, -1, -2))
    if bias is not None:
        out = add(out, bias)
    return reshape(out, (out.shape[-1],)) if squeeze else out


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax with optional boolean key mask (True = excluded, probability 0).

    Raises on rows where every key is masked; callers must guarantee at least
    one unmasked key per row.
    """
    if mask is None:
        m = x.data.max(axis=axis, keepdims=True)
        e = exp(x - m)  # max subtraction; detached shift leaves the gradient exact
        return div(e, sum_(e, axis=axis, keepdims=True))
    keep = np.broadcast_to(~np.asarray(mask, dtype=bool), x.shape)
    if not keep.any(axis=axis).all():
        raise ValueError("softmax row with every key masked")
    masked_data = np.where(keep, x.data, -np.inf)
    m = masked_data.max(axis=axis, keepdims=True)
    # Pin masked slots at the row max before exponentiation so extreme masked
    # values cannot overflow; their probability is zeroed exactly below.
    x_safe = add(mul(x, Tensor(keep.astype(np.float64))), Tensor(np.where(keep, 0.0, m)))
    e = mul(exp(x_safe - m), Tensor(keep.astype(np.float64)))
    return div(e, sum_(e, axis=axis, keepdims=True))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x - m
    return shifted - log(sum_(exp(shifted), axis=axis, keepdims=True))


def layer_norm(x: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along `axis` (no affine part)."""
    mu = mean(x, axis=axis, keepdims=True)
    centered = x - mu
    var = mean(mul(centered, centered), axis=axis, keepdims=True)
    return div(centered, sqrt(var + eps))


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Element-wise binary cross-entropy from logits, softplus(l) - l*y form."""
    t = Tensor(np.asarray(targets, dtype=np.float64))
    return softplus(logits) - mul(logits, t)


# -- finite-difference oracle -------------------------------------------------


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of AD gradients against central differences."""

    n_checked: int
    n_skipped: int
    max_rel_error: float
    rel_errors: np.ndarray = field(repr=False)

    def fraction_below(self, tol: float) -> float:
        if self.rel_errors.size == 0:
            return 1.0
        return float(np.mean(self.rel_errors < tol))


def grad_check(f, params, step: float = 1e-5, n_samples: int = 200, rng=None) -> GradCheckReport:
    """Compare AD gradients of scalar f() against central finite differences.

    `f` must rebuild its graph from `params` (a list of Tensors) at every
    call.  Coordinates are sampled uniformly across all parameter entries.
    The kink-skip rule: a coordinate is excluded when its +step and -step
    evaluations land on different sides of a ReLU/clamp kink (pre-activation
    sign flip), which is when the |pre-activation| < 10*step neighbourhood is
    actually crossed and the difference quotient stops being meaningful.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    params = list(params)
    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    if total == 0:
        raise ValueError("no parameters to check")
    coords = rng.choice(total, size=min(n_samples, total), replace=False)

    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    def locate(flat_index):
        for pi, size in enumerate(sizes):
            if flat_index < size:
                return pi, flat_index
            flat_index -= size
        raise AssertionError

    rel_errors = []
    n_skipped = 0
    for c in coords:
        pi, offset = locate(int(c))
        flat = params[pi].data.reshape(-1)
        original = flat[offset]
        signs_plus: list = []
        signs_minus: list = []
        with record_kink_signs(signs_plus):
            flat[offset] = original + step
            f_plus = f().item()
        with record_kink_signs(signs_minus):
            flat[offset] = original - step
            f_minus = f().item()
        flat[offset] = original
        if signs_plus != signs_minus:
            n_skipped += 1
            continue
        g_fd = (f_plus - f_minus) / (2.0 * step)
        g_ad = grads[pi].reshape(-1)[offset]
        rel_errors.append(abs(g_ad - g_fd) / (abs(g_ad) + abs(g_fd) + 1e-12))

    rel_errors = np.asarray(rel_errors, dtype=np.float64)
    return GradCheckReport(
        n_checked=int(rel_errors.size),
        n_skipped=n_skipped,
        max_rel_error=float(rel_errors.max()) if rel_errors.size else 0.0,
        rel_errors=rel_errors,
    )
