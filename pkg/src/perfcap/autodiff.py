"""Dense n-d tensors with reverse-mode automatic differentiation.

Small define-by-run engine on top of numpy: each op links its output to its
inputs with a closure that maps the output gradient to input gradients.
``backward`` builds the tape (a topologically ordered node list) from the
loss and replays it in reverse, accumulating gradients additively.

Broadcasting is restricted to "suffix" alignment (the smaller shape must
equal the trailing dims of the larger, e.g. bias [d] against [n, d]) plus
plain scalars.  Anything fancier must be pre-expanded by the caller, which
keeps silent shape bugs out of the pipeline.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """N-d array of real scalars, optionally participating in the tape.

    `data` is always a contiguous numpy array (float32 or float64).  `grad`
    is lazily allocated with the same shape and accumulates across uses.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # note: would promote 0-d to 1-d
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None  # grad_out -> tuple of per-parent grads (or None)

    # -- introspection ----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{flag})"

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False)

    # -- graph ------------------------------------------------------------

    def backward(self, free_graph: bool = False):
        backward(self, free_graph=free_graph)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_coerce(other, self.dtype)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None):
        return sum_(self, axis=axis)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)


def _coerce(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype), requires_grad=False)


def constant(data, like: Tensor | None = None, dtype=None) -> Tensor:
    """Non-differentiable tensor, dtype borrowed from `like` when given."""
    if like is not None:
        dtype = like.dtype
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False)


def _check_same_dtype(a: Tensor, b: Tensor):
    if a.dtype != b.dtype:
        raise TypeError(f"dtype mismatch: {a.dtype} vs {b.dtype}")


def _suffix_broadcast_shapes(sa, sb):
    """Result shape if one of sa/sb equals the trailing dims of the other."""
    if sa == sb:
        return sa
    short, long_ = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    if short == () or long_[len(long_) - len(short):] == short:
        return long_
    raise ShapeError(f"shapes not suffix-broadcastable: {sa} vs {sb}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over the leading axes introduced by suffix broadcasting."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    # suffix rule never stretches size-1 dims, so shapes now match
    return g.reshape(shape)


def _make(data: np.ndarray, parents, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


# -- elementwise and arithmetic ops -----------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _coerce(b, a.dtype)
    _check_same_dtype(a, b)
    _suffix_broadcast_shapes(a.shape, b.shape)
    data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(data, (a, b), vjp)


def mul(a: Tensor, b) -> Tensor:
    b = _coerce(b, a.dtype)
    _check_same_dtype(a, b)
    _suffix_broadcast_shapes(a.shape, b.shape)
    data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make(a.data * s, (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient at 0 is 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    return _make(data, (a,), lambda g: (g * data,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _make(data, (a,), vjp)


def softplus(a: Tensor) -> Tensor:
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g):
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * sig,)

    return _make(data, (a,), vjp)


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis, stabilized by row-max subtraction."""
    if a.ndim < 1 or a.shape[-1] < 1:
        raise ShapeError(f"softmax_rows needs a trailing axis of extent >= 1, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return _make(data, (a,), vjp)


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading axes are batched with numpy semantics."""
    _check_same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    data = a.data @ b.data

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _make(data, (a, b), vjp)


# -- reductions --------------------------------------------------------------


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a: Tensor, axis=None) -> Tensor:
    axes = _axis_tuple(axis, a.ndim)
    data = a.data.sum(axis=axes)

    def vjp(g):
        gexp = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(gexp, a.shape).copy(),)

    return _make(data, (a,), vjp)


def mean(a: Tensor, axis=None) -> Tensor:
    axes = _axis_tuple(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axes)

    def vjp(g):
        gexp = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(gexp, a.shape) / count,)

    return _make(data, (a,), vjp)


# -- shape ops ---------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)
    return _make(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty list")
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t)
        sa, sb = list(tensors[0].shape), list(t.shape)
        ax = axis % len(sa)
        sa[ax] = sb[ax] = -1
        if sa != sb:
            raise ShapeError(f"concat non-axis extents differ: {tensors[0].shape} vs {t.shape}")
    ax = axis % tensors[0].ndim
    data = np.concatenate([t.data for t in tensors], axis=ax)
    splits = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=ax))

    return _make(data, tensors, vjp)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.ascontiguousarray(p) for p in np.moveaxis(g, axis, 0))

    return _make(data, tensors, vjp)


def getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(np.ascontiguousarray(data), (a,), vjp)


# -- gather / scatter --------------------------------------------------------


def take_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Rows of `a` at integer positions `idx` (any leading shape)."""
    idx = np.asarray(idx, dtype=np.intp)
    data = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx.ravel(), g.reshape(-1, *a.shape[1:]))
        return (ga,)

    return _make(data, (a,), vjp)


def gather_weighted(table: Tensor, idx: np.ndarray, w: np.ndarray) -> Tensor:
    """Fixed-weight row blend: out[n] = sum_k w[n,k] * table[idx[n,k]].

    `idx` and `w` are constants (interpolation stencils); gradients flow to
    `table` only.  Shapes: table [R, d], idx [N, K], w [N, K] -> out [N, d].
    """
    idx = np.asarray(idx, dtype=np.intp)
    w = np.asarray(w, dtype=table.dtype)
    if idx.shape != w.shape or idx.ndim != 2:
        raise ShapeError(f"idx/w must be matching [N, K] arrays, got {idx.shape} and {w.shape}")
    picked = table.data[idx]                     # [N, K, d]
    data = np.einsum("nkd,nk->nd", picked, w)

    def vjp(g):
        gt = np.zeros_like(table.data)
        contrib = g[:, None, :] * w[:, :, None]  # [N, K, d]
        np.add.at(gt, idx.ravel(), contrib.reshape(-1, table.shape[1]))
        return (gt,)

    return _make(data, (table,), vjp)


def scatter_mean(x: Tensor, assign: np.ndarray, n_rows: int) -> Tensor:
    """Group rows of x by `assign` and average within each group.

    Rows of the output that receive no input stay zero.
    """
    assign = np.asarray(assign, dtype=np.intp)
    counts = np.bincount(assign, minlength=n_rows).astype(x.dtype)
    denom = np.maximum(counts, 1.0)
    out = np.zeros((n_rows, x.shape[1]), dtype=x.dtype)
    np.add.at(out, assign, x.data)
    out /= denom[:, None]

    def vjp(g):
        return (g[assign] / denom[assign][:, None],)

    return _make(out, (x,), vjp)


def cumsum_exclusive(a: Tensor, axis: int = -1) -> Tensor:
    """y[i] = sum of entries strictly before i along `axis`."""
    ax = axis % a.ndim
    cs = np.cumsum(a.data, axis=ax)
    data = np.zeros_like(a.data)
    sl_dst = [slice(None)] * a.ndim
    sl_src = [slice(None)] * a.ndim
    sl_dst[ax] = slice(1, None)
    sl_src[ax] = slice(0, -1)
    data[tuple(sl_dst)] = cs[tuple(sl_src)]

    def vjp(g):
        # dL/dx[j] = sum of g[i] for i > j: reversed exclusive cumsum
        rev = np.flip(g, axis=ax)
        rcs = np.cumsum(rev, axis=ax)
        out = np.zeros_like(g)
        out[tuple(sl_dst)] = rcs[tuple(sl_src)]
        return (np.flip(out, axis=ax),)

    return _make(data, (a,), vjp)


# -- backward ----------------------------------------------------------------


def backward(loss: Tensor, free_graph: bool = False):
    """Populate .grad of every tensor the scalar `loss` depends on.

    Repeated calls without zero_grad accumulate.  With `free_graph`, the
    tape links are severed afterwards to release intermediate memory.
    """
    if loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    # Build the tape: topological order over the recorded subgraph.
    tape: list[Tensor] = []
    seen = set()
    stack_ = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            tape.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            stack_.append((p, False))

    # Cotangents live in a scratch map during the sweep; only leaves (no
    # recorded op) persist them into .grad, accumulating across calls.
    cot: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = cot.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            cot[key] = cot[key] + pg if key in cot else pg

    if free_graph:
        for node in tape:
            node._parents = ()
            node._vjp = None


# -- finite-difference checking ----------------------------------------------


class GradCheckError(AssertionError):
    pass


def grad_check(f, x: Tensor, step: float = 1e-5, eps: float = 1e-6,
               tol: float | None = None) -> float:
    """Compare analytic gradient of scalar f(x) against central differences.

    Returns max over entries of |analytic - numeric| / max(|analytic|,
    |numeric|, eps).  Entries where the one-sided slopes disagree (kinks,
    e.g. relu at 0) are skipped.  Use float64 input; at float32 the
    differences drown in rounding noise.
    """
    x.zero_grad()
    y = f(x)
    if y.ndim != 0:
        raise ShapeError("grad_check needs a scalar-valued function")
    y.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    with no_grad():
        f0 = float(f(x).data)
        worst = 0.0
        flat = x.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            fp = float(f(x).data)
            flat[i] = keep - step
            fm = float(f(x).data)
            flat[i] = keep
            d_plus = (fp - f0) / step
            d_minus = (f0 - fm) / step
            if abs(d_plus - d_minus) > 1e-3 * max(1.0, abs(d_plus), abs(d_minus)):
                continue  # non-differentiable point
            numeric = (fp - fm) / (2.0 * step)
            a = aflat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), eps)
            worst = max(worst, rel)

    if tol is not None and worst > tol:
        raise GradCheckError(f"max relative gradient error {worst:.3e} > {tol:.1e}")
    return worst


def check_params(build_loss, params, step: float = 1e-5, eps: float = 1e-6,
                 max_entries: int = 64, rng: np.random.Generator | None = None) -> float:
    """FD-check d(build_loss)/d(param) for every tensor in `params`.

    One analytic backward, then central differences on up to `max_entries`
    coordinates per parameter (seeded subsample for big tensors).  Returns
    the max relative error over all checked coordinates.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    with no_grad():
        f0 = float(build_loss().data)
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            aflat = a.reshape(-1)
            if flat.size > max_entries:
                coords = rng.choice(flat.size, size=max_entries, replace=False)
            else:
                coords = np.arange(flat.size)
            for i in coords:
                keep = flat[i]
                flat[i] = keep + step
                fp = float(build_loss().data)
                flat[i] = keep - step
                fm = float(build_loss().data)
                flat[i] = keep
                d_plus = (fp - f0) / step
                d_minus = (f0 - fm) / step
                if abs(d_plus - d_minus) > 1e-3 * max(1.0, abs(d_plus), abs(d_minus)):
                    continue
                numeric = (fp - fm) / (2.0 * step)
                rel = abs(aflat[i] - numeric) / max(abs(aflat[i]), abs(numeric), eps)
                worst = max(worst, rel)
    return worst
