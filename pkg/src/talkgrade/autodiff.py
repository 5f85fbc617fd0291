"""Reverse-mode automatic differentiation over small dense arrays.

Values are float64 tensors of rank 0 to 2. Each operation records its
inputs and a vector-Jacobian rule on the output tensor; because inputs
always exist before outputs, descending creation order is a valid
topological order, and backward() replays it in reverse, visiting each
reachable node exactly once.

There is no broadcasting: tensor/tensor operations require exactly
matching shapes and raise ShapeError otherwise. Python scalars are allowed
in `+`, `-`, `*` as constant shifts and scalings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import TalkgradeError


class AutodiffError(TalkgradeError):
    pass


class ShapeError(AutodiffError):
    pass


_ids = itertools.count()  # next() on itertools.count is atomic under CPython


class Tensor:
    """A dense float64 value, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"rank {arr.ndim} tensor not supported (max rank 2)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self) -> "Tensor":
        """Sum of all entries, as a scalar tensor."""
        return _op(np.sum(self.data), (self,), lambda g: (np.full_like(self.data, float(g)),))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return _shift(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return _scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return _scale(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, _scale(other, -1.0))
        return _shift(self, -float(other))

    def __rsub__(self, other):  # float - Tensor
        return _shift(_scale(self, -1.0), float(other))


def _op(data, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    return out


def _same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shape mismatch ({a.shape} vs {b.shape})")


def _scale(t: Tensor, c: float) -> Tensor:
    return _op(c * t.data, (t,), lambda g: (c * g,))


def _shift(t: Tensor, c: float) -> Tensor:
    return _op(t.data + c, (t,), lambda g: (g,))


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _op(a.data + b.data, (a, b), lambda g: (g, g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product."""
    _same_shape("hadamard", a, b)
    return _op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def matvec(m: Tensor, v: Tensor) -> Tensor:
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: cannot apply {m.shape} to {v.shape}")
    return _op(m.data @ v.data, (m, v), lambda g: (np.outer(g, v.data), m.data.T @ g))


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        s = np.where(
            x.data >= 0,
            1.0 / (1.0 + np.exp(-x.data)),
            np.exp(x.data) / (1.0 + np.exp(x.data)),
        )
    return _op(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _op(t, (x,), lambda g: (g * (1.0 - t * t),))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise AutodiffError("log of non-positive value")
    return _op(np.log(x.data), (x,), lambda g: (g / x.data,))


def concat(*parts: Tensor) -> Tensor:
    if not parts:
        raise ShapeError("concat of zero tensors")
    for p in parts:
        if p.data.ndim != 1:
            raise ShapeError(f"concat requires vectors, got shape {p.shape}")
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _op(np.concatenate([p.data for p in parts]), tuple(parts), vjp)


def sum_of_vectors(vectors) -> Tensor:
    """Element-wise sum of equally shaped vectors, in input order."""
    vectors = list(vectors)
    if not vectors:
        raise ShapeError("sum_of_vectors of empty list")
    for v in vectors[1:]:
        _same_shape("sum_of_vectors", vectors[0], v)
    total = np.add.reduce([v.data for v in vectors])
    return _op(total, tuple(vectors), lambda g: (g,) * len(vectors))


def mean_of_vectors(vectors) -> Tensor:
    """Element-wise mean of equally shaped vectors."""
    vectors = list(vectors)
    if not vectors:
        raise ShapeError("mean_of_vectors of empty list")
    for v in vectors[1:]:
        _same_shape("mean_of_vectors", vectors[0], v)
    k = len(vectors)
    mean = np.add.reduce([v.data for v in vectors]) / k
    return _op(mean, tuple(vectors), lambda g: (g / k,) * k)


def take_row(m: Tensor, i: int) -> Tensor:
    """Row i of a matrix; the gradient scatters back into that row."""
    if m.data.ndim != 2:
        raise ShapeError(f"take_row requires a matrix, got shape {m.shape}")
    if not 0 <= i < m.shape[0]:
        raise ShapeError(f"take_row: row {i} out of range for shape {m.shape}")

    def vjp(g):
        out = np.zeros_like(m.data)
        out[i] = g
        return (out,)

    return _op(m.data[i].copy(), (m,), vjp)


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad leaf reachable from `loss`.

    Visits each node of the recorded graph exactly once, in reverse
    creation order. Repeated calls without zeroing accumulate into the
    leaf gradients; flow through intermediate nodes is kept in a local
    table so reruns stay independent.
    """
    if loss.data.size != 1:
        raise AutodiffError(f"backward requires a scalar loss, got shape {loss.shape}")
    seen: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in seen:
            continue
        seen[t._id] = t
        stack.extend(t._parents)
    flows: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for t in sorted(seen.values(), key=lambda t: t._id, reverse=True):
        g = flows.pop(t._id, None)
        if g is None:
            continue
        if t._vjp is not None:
            for parent, pg in zip(t._parents, t._vjp(g)):
                if pg is None:
                    continue
                acc = flows.get(parent._id)
                flows[parent._id] = pg if acc is None else acc + pg
        elif t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g


def zero_grads(tensors) -> None:
    for t in tensors:
        t.grad = None


@dataclass
class GradcheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_err: float
    n_checked: int
    tol: float
    failures: list[tuple[int, float, float, float]]  # (flat index, analytic, numeric, err)

    @property
    def passed(self) -> bool:
        return not self.failures


def gradcheck(f, x: Tensor, eps: float = 1e-5, tol: float = 1e-6) -> GradcheckReport:
    """Check d f(x) / dx coordinate-wise via (f(x+eps e_i) - f(x-eps e_i)) / 2 eps.

    The error measure is |analytic - numeric| / max(1, |analytic|, |numeric|),
    i.e. relative for large gradients and absolute near zero. f must be a
    deterministic map from Tensor to scalar Tensor.
    """
    if eps <= 0:
        raise AutodiffError("eps must be positive")
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if out.data.size != 1:
        raise AutodiffError("gradcheck requires a scalar-valued function")
    backward(out)
    analytic = (x.grad if x.grad is not None else np.zeros_like(x.data)).reshape(-1).copy()
    failures = []
    max_err = 0.0
    for idx in range(x.data.size):
        where = np.unravel_index(idx, x.data.shape)
        orig = x.data[where]
        x.data[where] = orig + eps
        fp = float(f(x).data)
        x.data[where] = orig - eps
        fm = float(f(x).data)
        x.data[where] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise AutodiffError("non-finite value in gradcheck")
        numeric = (fp - fm) / (2.0 * eps)
        a = analytic[idx]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        max_err = max(max_err, err)
        if err > tol:
            failures.append((idx, a, numeric, err))
    return GradcheckReport(max_rel_err=max_err, n_checked=x.data.size, tol=tol, failures=failures)


def gradcheck_params(
    loss_fn, named_tensors, eps: float = 1e-5, tol: float = 1e-5
) -> dict[str, GradcheckReport]:
    """Gradient-check a zero-argument loss builder against several parameter tensors.

    loss_fn rebuilds the forward graph from the tensors' current data, so
    perturbing a coordinate in place and calling it again yields the
    finite-difference value for that coordinate.
    """
    named_tensors = list(named_tensors)
    tensors = [t for _, t in named_tensors]
    zero_grads(tensors)
    backward(loss_fn())
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)).copy()
                for name, t in named_tensors}
    reports = {}
    for name, t in named_tensors:
        a_flat = analytic[name].reshape(-1)
        failures = []
        max_err = 0.0
        for idx in range(t.data.size):
            where = np.unravel_index(idx, t.data.shape)
            orig = t.data[where]
            t.data[where] = orig + eps
            fp = float(loss_fn().data)
            t.data[where] = orig - eps
            fm = float(loss_fn().data)
            t.data[where] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise AutodiffError("non-finite value in gradcheck")
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(a_flat[idx] - numeric) / max(1.0, abs(a_flat[idx]), abs(numeric))
            max_err = max(max_err, err)
            if err > tol:
                failures.append((idx, float(a_flat[idx]), numeric, err))
        reports[name] = GradcheckReport(
            max_rel_err=max_err, n_checked=t.data.size, tol=tol, failures=failures
        )
    return reports
