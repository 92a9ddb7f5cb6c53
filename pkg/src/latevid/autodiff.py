"""Minimal dense 2-D tensor with reverse-mode differentiation.

Everything in the package (query/frame/video feature banks, encoder weights,
loss scalars) is stored as a row-major float64 matrix. Operations build a
fresh tape on every forward pass; calling :func:`backward` on a scalar walks
the tape once and accumulates gradients into every tracked leaf.

The tape is single-threaded. Tensors are treated as immutable once produced
by an operation (only ``grad`` is mutated), so read-only sharing across
threads is safe.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

__all__ = [
    "Tensor",
    "tensor",
    "constant",
    "no_grad",
    "backward",
    "finite_diff_grad",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "scale",
    "add_const",
    "softmax_rows",
    "max_rows",
    "sum_all",
    "mean_all",
    "mean_rows",
    "layer_norm_rows",
    "gelu",
    "l2norm_rows",
    "slice_rows",
    "slice_cols",
    "take_rows",
    "concat_rows",
    "stack2d",
    "softplus",
    "logsumexp_rows",
    "diag_part",
]

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (used for indexing/eval)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-D; got array of shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """A 2-D float64 matrix, optionally tracked for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; the module-level functions are the canonical API.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, float(other))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _tracked(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    out = Tensor(data)
    if _tracked(*parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``grad`` of every tracked leaf.

    ``root`` must be a 1x1 tensor produced by tracked operations. Repeated
    calls without clearing grads accumulate.
    """
    if root.shape != (1, 1):
        raise ValueError(f"backward root must be scalar (1x1), got shape {root.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def finite_diff_grad(f: Callable[[Tensor], float | Tensor], x: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient oracle: (f(x+eps*e) - f(x-eps*e)) / (2*eps).

    ``f`` must be a scalar-valued function of ``x``; evaluation happens with
    the tape disabled, so ``f`` may freely reuse tracked parameters.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")

    def evaluate(data: np.ndarray) -> float:
        with no_grad():
            val = f(Tensor(data))
        if isinstance(val, Tensor):
            val = val.item()
        val = float(val)
        if not np.isfinite(val):
            raise ValueError("finite_diff_grad: objective returned a non-finite value")
        return val

    base = x.data
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            bumped = base.copy()
            bumped[i, j] = base[i, j] + eps
            hi = evaluate(bumped)
            bumped[i, j] = base[i, j] - eps
            lo = evaluate(bumped)
            out[i, j] = (hi - lo) / (2.0 * eps)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for ax in (0, 1):
        sa, sb = a.shape[ax], b.shape[ax]
        if sa != sb and sa != 1 and sb != 1:
            raise ValueError(f"{op}: shapes {a.shape} and {b.shape} are not row/scalar broadcastable")


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and out.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    a_data, b_data = a.data, b.data

    def vjp(g: np.ndarray):
        return g @ b_data.T, a_data.T @ g

    return _make(a_data @ b_data, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also accepts a 1xC row or 1x1 scalar on either side."""
    _check_broadcast(a, b, "add")
    a_shape, b_shape = a.shape, b.shape

    def vjp(g: np.ndarray):
        return _reduce_to(g, a_shape), _reduce_to(g, b_shape)

    return _make(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with row/scalar broadcasting."""
    _check_broadcast(a, b, "mul")
    a_data, b_data = a.data, b.data

    def vjp(g: np.ndarray):
        return _reduce_to(g * b_data, a_data.shape), _reduce_to(g * a_data, b_data.shape)

    return _make(a_data * b_data, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_const(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data + c, (a,), lambda g: (g,))


def softmax_rows(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g: np.ndarray):
        inner = (g * s).sum(axis=1, keepdims=True)
        return (s * (g - inner),)

    return _make(s, (a,), vjp)


def max_rows(a: Tensor) -> tuple[Tensor, np.ndarray]:
    """Row-wise maximum as an Rx1 tensor, plus the argmax column indices.

    Ties route the gradient to the first maximising column.
    """
    idx = np.argmax(a.data, axis=1)
    rows = np.arange(a.shape[0])
    out = a.data[rows, idx].reshape(-1, 1)
    shape = a.shape

    def vjp(g: np.ndarray):
        gx = np.zeros(shape)
        gx[rows, idx] = g[:, 0]
        return (gx,)

    return _make(out, (a,), vjp), idx


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape

    def vjp(g: np.ndarray):
        return (np.full(shape, g[0, 0]),)

    return _make(np.array([[a.data.sum()]]), (a,), vjp)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.shape

    def vjp(g: np.ndarray):
        return (np.full(shape, g[0, 0] / n),)

    return _make(np.array([[a.data.mean()]]), (a,), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """Mean of the rows: RxC -> 1xC (the pooled-vector primitive)."""
    r = a.shape[0]
    shape = a.shape

    def vjp(g: np.ndarray):
        return (np.broadcast_to(g / r, shape).copy(),)

    return _make(a.data.mean(axis=0, keepdims=True), (a,), vjp)


def layer_norm_rows(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if gain.shape != (1, x.shape[1]) or bias.shape != (1, x.shape[1]):
        raise ValueError(
            f"layer_norm_rows: gain/bias must be 1x{x.shape[1]}, got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    g_data = gain.data

    def vjp(g: np.ndarray):
        gg = g * g_data
        m1 = gg.mean(axis=1, keepdims=True)
        m2 = (gg * xhat).mean(axis=1, keepdims=True)
        dx = (gg - m1 - xhat * m2) * inv
        dgain = (g * xhat).sum(axis=0, keepdims=True)
        dbias = g.sum(axis=0, keepdims=True)
        return dx, dgain, dbias

    return _make(xhat * g_data + bias.data, (x, gain, bias), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-error-linear unit: x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
    x_data = x.data

    def vjp(g: np.ndarray):
        return (g * (cdf + x_data * pdf),)

    return _make(x_data * cdf, (x,), vjp)


def l2norm_rows(x: Tensor) -> Tensor:
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    if np.any(norms < 1e-12):
        bad = int(np.argmin(norms))
        raise ValueError(f"l2norm_rows: row {bad} has (near-)zero norm")
    y = x.data / norms

    def vjp(g: np.ndarray):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _make(y, (x,), vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[0]):
        raise ValueError(f"slice_rows: [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def vjp(g: np.ndarray):
        gx = np.zeros(shape)
        gx[start:stop] = g
        return (gx,)

    return _make(a.data[start:stop].copy(), (a,), vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[1]):
        raise ValueError(f"slice_cols: [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def vjp(g: np.ndarray):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _make(a.data[:, start:stop].copy(), (a,), vjp)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows by index (embedding lookup); gradient scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError(f"take_rows: indices must be 1-D, got shape {idx.shape}")
    if idx.size == 0:
        raise ValueError("take_rows: empty index list")
    if idx.min() < 0 or idx.max() >= a.shape[0]:
        raise ValueError(f"take_rows: index out of range for {a.shape[0]} rows")
    shape = a.shape

    def vjp(g: np.ndarray):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(a.data[idx], (a,), vjp)


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows: no tensors given")
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise ValueError(f"concat_rows: column mismatch, {p.shape[1]} != {cols}")
    sizes = [p.shape[0] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g: np.ndarray):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=0))

    return _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), vjp)


def stack2d(grid: Sequence[Sequence[Tensor]]) -> Tensor:
    """Assemble a grid of 1x1 tensors into one RxC tensor (single tape node)."""
    rows = len(grid)
    if rows == 0 or len(grid[0]) == 0:
        raise ValueError("stack2d: empty grid")
    cols = len(grid[0])
    flat: list[Tensor] = []
    data = np.empty((rows, cols))
    for i, row in enumerate(grid):
        if len(row) != cols:
            raise ValueError("stack2d: ragged grid")
        for j, cell in enumerate(row):
            if cell.shape != (1, 1):
                raise ValueError(f"stack2d: cell ({i},{j}) has shape {cell.shape}, expected 1x1")
            data[i, j] = cell.data[0, 0]
            flat.append(cell)

    def vjp(g: np.ndarray):
        return tuple(g[i, j].reshape(1, 1) for i in range(rows) for j in range(cols))

    return _make(data, tuple(flat), vjp)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) via logaddexp; stable for arbitrarily large |x|."""
    x_data = x.data

    def vjp(g: np.ndarray):
        return (g * expit(x_data),)

    return _make(np.logaddexp(0.0, x_data), (x,), vjp)


def logsumexp_rows(a: Tensor) -> Tensor:
    m = a.data.max(axis=1, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=1, keepdims=True)
    soft = e / s

    def vjp(g: np.ndarray):
        return (g * soft,)

    return _make(m + np.log(s), (a,), vjp)


def diag_part(a: Tensor) -> Tensor:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"diag_part: matrix must be square, got {a.shape}")
    n = a.shape[0]

    def vjp(g: np.ndarray):
        gx = np.zeros((n, n))
        gx[np.arange(n), np.arange(n)] = g[:, 0]
        return (gx,)

    return _make(np.diag(a.data).reshape(-1, 1).copy(), (a,), vjp)
