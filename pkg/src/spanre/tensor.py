"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op is a plain function. When a :class:`Tape` is active on the current
thread and at least one input requires a gradient, the op records a backward
rule on that tape. Outside a tape the ops simply compute, which is what
inference uses.

Example::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = mean(tanh(matmul(x, w)))
    backward(loss, tape)
    w.grad  # filled
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class Tensor:
    """A dense float64 array with an optional gradient slot.

    ``data`` is always a C-contiguous float64 ``ndarray``; ``grad`` is ``None``
    until a backward pass reaches this tensor.
    """

    __slots__ = ("data", "requires_grad", "grad", "_from_op", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._from_op = False

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr, dtype=np.float64)
        t.requires_grad = False
        t.grad = None
        t._from_op = True
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a one-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------
# Tape


@dataclass
class _Node:
    name: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """Ordered record of differentiable ops for one forward pass.

    A tape is confined to the thread that opened it. Nesting is allowed; the
    innermost tape receives the records.
    """

    nodes: list = field(default_factory=list)

    def record(self, name, inputs, output, backward_fn) -> None:
        self.nodes.append(_Node(name, tuple(inputs), output, backward_fn))

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a tape that is not innermost")
        stack.pop()


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional[Tape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _emit(name: str, out: np.ndarray, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    if not np.isfinite(out).all():
        raise NonFiniteError(f"{name} produced non-finite values")
    t = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None and any(x.requires_grad for x in inputs):
        t.requires_grad = True
        tape.record(name, inputs, t, backward_fn)
    return t


def _accumulate(store: dict, key, g: np.ndarray, owned: set) -> None:
    okey = id(key) if isinstance(key, Tensor) else key
    prev = store.get(key)
    if prev is None:
        store[key] = g
    elif okey in owned:
        prev += g
    else:
        store[key] = prev + g
        owned.add(okey)


def backward(loss: Tensor, tape: Tape, accumulate: bool = True) -> dict:
    """Propagate d(loss)/d(leaf) for every leaf reachable on ``tape``.

    Gradients from multiple uses of one tensor are summed. With
    ``accumulate`` the results are also added into each leaf's ``grad``
    slot; either way the mapping ``{leaf: gradient}`` is returned.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    seed = np.ones_like(loss.data)
    leaves: dict = {}
    if not loss._from_op:
        if not loss.requires_grad:
            raise ValueError("loss does not require grad and is not on the tape")
        leaves[loss] = seed
    else:
        if not any(node.output is loss for node in tape.nodes):
            raise ValueError("loss was not produced on the given tape")
        grads = {id(loss): seed}
        owned: set = set()  # keys whose buffer this pass allocated and may update in place
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            owned.discard(id(node.output))
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                store, key = (grads, id(inp)) if inp._from_op else (leaves, inp)
                _accumulate(store, key, gi, owned)
    if accumulate:
        for leaf, g in leaves.items():
            g = np.asarray(g, dtype=np.float64).reshape(leaf.shape)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
    return leaves


# --------------------------------------------------------------------------
# Elementwise and shaping primitives


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _stable_sigmoid(a.data)
    return _emit("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _emit("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _emit("reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return _emit("transpose", a.data.T, (a,), lambda g: (g.T,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from exc
    ax = axis % tensors[0].data.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", out, tensors, bw)


def take_rows(table: Tensor, index) -> Tensor:
    """Gather rows ``table[index]``; repeated indices accumulate gradient."""
    idx = np.asarray(index, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"take_rows: index out of range for {n} rows")
    shape = table.shape

    def bw(g):
        dt = np.zeros(shape)
        np.add.at(dt, idx, g)
        return (dt,)

    return _emit("take_rows", table.data[idx], (table,), bw)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit("sum", np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    return _emit("mean", np.array(a.data.mean()), (a,),
                 lambda g: (np.broadcast_to(g / n, shape).copy(),))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("add_n of an empty list")
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ShapeError(f"add_n: shape {t.shape} differs from {shape}")
    out = np.sum([t.data for t in tensors], axis=0)
    return _emit("add_n", out, tensors, lambda g: tuple(g for _ in tensors))


# --------------------------------------------------------------------------
# Linear algebra and sequence ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _emit("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def conv1d_same(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Zero-padded 1-D convolution whose output length equals the input length.

    ``x`` is ``T x d_in``, ``kernel`` is ``k x d_in x d_out``. The window for
    output position ``t`` covers ``x[t - k//2 : t - k//2 + k]``, so an even
    kernel takes its extra element from the left.
    """
    if x.data.ndim != 2 or kernel.data.ndim != 3 or bias.data.ndim != 1:
        raise ShapeError(f"conv1d_same: bad ranks {x.shape}, {kernel.shape}, {bias.shape}")
    T, d_in = x.shape
    k, k_in, d_out = kernel.shape
    if T < 1 or k < 1:
        raise ShapeError("conv1d_same needs T >= 1 and k >= 1")
    if k_in != d_in or bias.shape[0] != d_out:
        raise ShapeError(f"conv1d_same: kernel {kernel.shape} / bias {bias.shape} incompatible with input {x.shape}")
    left = k // 2
    xp = np.zeros((T + k - 1, d_in))
    xp[left:left + T] = x.data
    # explicit im2col: a strided window view would miss the BLAS fast path
    cols = np.concatenate([xp[j:j + T] for j in range(k)], axis=1)
    W = kernel.data.reshape(k * d_in, d_out)
    out = cols @ W + bias.data

    def bw(g):
        dW = (cols.T @ g).reshape(k, d_in, d_out)
        db = g.sum(axis=0)
        dcols = (g @ W.T).reshape(T, k, d_in)
        dxp = np.zeros((T + k - 1, d_in))
        for j in range(k):
            dxp[j:j + T] += dcols[:, j, :]
        return dxp[left:left + T], dW, db

    return _emit("conv1d_same", out, (x, kernel, bias), bw)


def max_over_time(x: Tensor) -> Tensor:
    """Column-wise max of a ``T x d`` matrix; ties route gradient to the first row."""
    if x.data.ndim != 2:
        raise ShapeError(f"max_over_time expects a matrix, got {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError("max_over_time of an empty sequence")
    idx = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])
    shape = x.shape

    def bw(g):
        dx = np.zeros(shape)
        dx[idx, cols] = g
        return (dx,)

    return _emit("max_over_time", x.data[idx, cols], (x,), bw)


def segment_max(x: Tensor, bounds: Sequence[tuple]) -> Tensor:
    """Column-wise max over each row range ``[start, stop)``; one output row per range.

    Equivalent to stacking :func:`max_over_time` of each slice.
    """
    if x.data.ndim != 2:
        raise ShapeError(f"segment_max expects a matrix, got {x.shape}")
    if any(stop <= start for start, stop in bounds):
        raise ShapeError("segment_max: empty segment")
    n, d = len(bounds), x.shape[1]
    rows = np.empty((n, d), dtype=np.int64)
    for k, (start, stop) in enumerate(bounds):
        rows[k] = start + np.argmax(x.data[start:stop], axis=0)
    cols = np.arange(d)
    shape = x.shape

    def bw(g):
        dx = np.zeros(shape)
        np.add.at(dx, (rows, cols[None, :]), g)
        return (dx,)

    return _emit("segment_max", x.data[rows, cols[None, :]], (x,), bw)


def scatter_rows(src: Tensor, index, n_rows: int) -> Tensor:
    """Zero matrix of ``n_rows`` rows with ``out[index] = src``; indices must be distinct."""
    idx = np.asarray(index, dtype=np.int64)
    if len(np.unique(idx)) != len(idx) or len(idx) != src.shape[0]:
        raise ShapeError("scatter_rows needs one distinct target row per source row")
    out = np.zeros((n_rows,) + src.shape[1:])
    out[idx] = src.data
    return _emit("scatter_rows", out, (src,), lambda g: (g[idx],))


def elementwise_max(branches: Sequence[Tensor]) -> Tensor:
    """Componentwise max across same-shaped tensors; ties go to the earliest branch."""
    branches = list(branches)
    if not branches:
        raise ShapeError("elementwise_max needs at least one branch")
    shape = branches[0].shape
    for b in branches[1:]:
        if b.shape != shape:
            raise ShapeError(f"elementwise_max: branch shape {b.shape} differs from {shape}")
    stacked = np.stack([b.data for b in branches])
    winner = np.argmax(stacked, axis=0)

    def bw(g):
        return tuple(np.where(winner == i, g, 0.0) for i in range(len(branches)))

    return _emit("elementwise_max", stacked.max(axis=0), branches, bw)


def row_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"row_softmax expects a matrix, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _emit("row_softmax", s, (a,), bw)


def pairwise_gate(left: Tensor, right: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """``out_i = (1/T) sum_j sigmoid(left_i + right_j + bias) * x_j``.

    ``left``, ``right`` are ``T x g`` and ``bias`` has ``g`` entries, where
    the gate width ``g`` is 1 (one scalar per pair, broadcast over features)
    or the feature width of ``x``.
    """
    T, d = x.shape
    g_w = left.shape[1] if left.data.ndim == 2 else -1
    if left.shape != (T, g_w) or right.shape != (T, g_w) or bias.shape != (g_w,) or g_w not in (1, d):
        raise ShapeError(f"pairwise_gate: left {left.shape}, right {right.shape}, bias {bias.shape}, x {x.shape}")
    # gate[i, j, :]
    gate = _stable_sigmoid(left.data[:, None, :] + right.data[None, :, :] + bias.data)
    xd = x.data
    out = np.einsum("ijg,jd->id", gate, xd) / T if g_w == 1 else np.einsum("ijd,jd->id", gate, xd) / T

    def bw(g):
        g = g / T
        if g_w == 1:
            dx = np.einsum("ijg,id->jd", gate, g)
            dgate = (g @ xd.T)[:, :, None]
        else:
            dx = np.einsum("ijd,id->jd", gate, g)
            dgate = g[:, None, :] * xd[None, :, :]
        ds = dgate * gate * (1.0 - gate)
        return ds.sum(axis=1), ds.sum(axis=0), ds.sum(axis=(0, 1)), dx

    return _emit("pairwise_gate", out, (left, right, bias, x), bw)


def dropout(a: Tensor, p: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` at train time."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _emit("dropout", a.data * mask, (a,), lambda g: (g * mask,))


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross entropy, computed from logits."""
    t = targets.data if isinstance(targets, Tensor) else np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"bce_with_logits: logits {logits.shape} vs targets {t.shape}")
    if not np.isin(t, (0.0, 1.0)).all():
        raise ValueError("bce_with_logits targets must be 0 or 1")
    z = logits.data
    n = z.size
    loss = (np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))).mean()
    s = _stable_sigmoid(z)
    return _emit("bce_with_logits", np.array(loss), (logits,), lambda g: (g * (s - t) / n,))


def lstm_cell(x: Tensor, h_prev: Tensor, c_prev: Tensor, weight: Tensor, bias: Tensor):
    """One LSTM step on vectors.

    ``weight`` is ``(d_in + d_h) x 4*d_h`` with gate blocks ordered
    input, forget, candidate, output; ``bias`` has length ``4*d_h``.
    Returns ``(h, c)``.
    """
    d_h = h_prev.shape[0]
    if c_prev.shape != (d_h,) or weight.shape != (x.shape[0] + d_h, 4 * d_h) or bias.shape != (4 * d_h,):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h_prev.shape}, c {c_prev.shape}, "
            f"weight {weight.shape}, bias {bias.shape} are inconsistent"
        )
    xh = reshape(concat([x, h_prev]), (1, -1))
    gates = reshape(add(matmul(xh, weight), bias), (4, d_h))
    i = sigmoid(take_rows(gates, 0))
    f = sigmoid(take_rows(gates, 1))
    g = tanh(take_rows(gates, 2))
    o = sigmoid(take_rows(gates, 3))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_sequence(X: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Run an LSTM from a zero state over the rows of ``X``; returns all
    hidden states (``K x d_h``).

    Same gate layout and result as chaining :func:`lstm_cell`, but recorded
    as a single op with a hand-written backward pass through time.
    """
    K, d_in = X.shape
    d_h = bias.shape[0] // 4
    if K < 1 or weight.shape != (d_in + d_h, 4 * d_h) or bias.shape != (4 * d_h,):
        raise ShapeError(f"lstm_sequence: X {X.shape}, weight {weight.shape}, bias {bias.shape} are inconsistent")
    W, b = weight.data, bias.data
    XH = np.zeros((K, d_in + d_h))
    gates = np.zeros((K, 4, d_h))
    cs = np.zeros((K + 1, d_h))
    H = np.zeros((K, d_h))
    h = np.zeros(d_h)
    for t in range(K):
        XH[t, :d_in] = X.data[t]
        XH[t, d_in:] = h
        z = (XH[t] @ W + b).reshape(4, d_h)
        gates[t, [0, 1, 3]] = _stable_sigmoid(z[[0, 1, 3]])
        gates[t, 2] = np.tanh(z[2])
        i, f, g, o = gates[t]
        cs[t + 1] = f * cs[t] + i * g
        h = H[t] = o * np.tanh(cs[t + 1])

    def bw(gH):
        dZ = np.zeros((K, 4, d_h))
        dX = np.zeros((K, d_in))
        dh_next = np.zeros(d_h)
        dc_next = np.zeros(d_h)
        for t in range(K - 1, -1, -1):
            i, f, g, o = gates[t]
            tc = np.tanh(cs[t + 1])
            dh = gH[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dZ[t, 0] = dc * g * i * (1.0 - i)
            dZ[t, 1] = dc * cs[t] * f * (1.0 - f)
            dZ[t, 2] = dc * i * (1.0 - g * g)
            dZ[t, 3] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dxh = W @ dZ[t].reshape(-1)
            dX[t] = dxh[:d_in]
            dh_next = dxh[d_in:]
        dZf = dZ.reshape(K, 4 * d_h)
        return dX, XH.T @ dZf, dZf.sum(axis=0)

    return _emit("lstm_sequence", H, (X, weight, bias), bw)


# --------------------------------------------------------------------------
# Finite-difference checking


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; zero when both vanish."""
    diff = np.linalg.norm(np.asarray(analytic) - np.asarray(numeric))
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(diff / scale)


def numerical_grad(f: Callable[[], float], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function w.r.t. every entry of ``t``."""
    g = np.zeros(t.shape)
    flat = t.data.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def gradcheck(fn: Callable[..., Tensor], inputs: Iterable[Tensor], h: float = 1e-5,
              seed: int = 0) -> dict:
    """Compare tape gradients of ``fn(*inputs)`` with central differences.

    Non-scalar outputs are contracted with a fixed random weighting first.
    Returns ``{input position: relative error}`` for inputs that require grad.
    """
    inputs = list(inputs)
    probe = fn(*inputs)
    if isinstance(probe, tuple):
        probe = probe[0]
    weights = np.random.default_rng(seed).standard_normal(probe.shape)

    def scalar(out):
        if isinstance(out, tuple):
            out = out[0]
        return out if out.data.size == 1 and not weights.shape else sum_all(mul(out, Tensor(weights)))

    for t in inputs:
        t.grad = None
    with Tape() as tape:
        loss = scalar(fn(*inputs))
    backward(loss, tape)

    def value():
        return scalar(fn(*inputs)).item()

    errors = {}
    for pos, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        errors[pos] = relative_error(analytic, numerical_grad(value, t, h))
    return errors
