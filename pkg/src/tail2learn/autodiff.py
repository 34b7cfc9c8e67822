"""Minimal reverse-mode differentiation over dense 2-d arrays.

A :class:`Tape` records every primitive applied to tensors created on it;
:func:`backward` replays the record once in reverse, accumulating exact
vector-Jacobian products. The op set is exactly what the encoder and the
training objectives need - no general broadcasting, no higher-order
derivatives.

Every op checks its result for NaN/Inf: a non-finite value is always a bug
or divergence, never a valid state.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .sparse import Csr


class Tensor:
    """A 2-d value, optionally attached to a tape node.

    ``node is None`` marks a constant: no gradient flows into it.
    """

    __slots__ = ("data", "tape", "node")

    def __init__(self, data: np.ndarray, tape: "Tape | None" = None,
                 node: int | None = None):
        if data.ndim != 2:
            raise ValueError(f"tensors are 2-d, got shape {data.shape}")
        self.data = data
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        kind = "const" if self.node is None else f"node {self.node}"
        return f"Tensor(shape={self.shape}, {kind})"


def constant(data, dtype=np.float64) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return Tensor(arr)


class Tape:
    """Ordered record of operations; single-owner during recording."""

    def __init__(self):
        self._ops = []      # (node_id, input_ids, vjp) in recording order
        self._leaf_spec = {}  # leaf node_id -> (shape, dtype) for zero grads
        self.param_ids: list[int] = []
        self._next_id = 0

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def param(self, data: np.ndarray) -> Tensor:
        """Register a leaf parameter (gradient target)."""
        if data.ndim != 2:
            raise ValueError("parameters must be 2-d")
        nid = self._new_id()
        self._leaf_spec[nid] = (data.shape, data.dtype)
        self.param_ids.append(nid)
        return Tensor(data, self, nid)

    def record(self, out: np.ndarray, inputs: tuple[Tensor, ...], vjp) -> Tensor:
        if not np.isfinite(out).all():
            raise FloatingPointError("non-finite result recorded on tape")
        tapes = {t.tape for t in inputs if t.node is not None}
        if len(tapes) > 1:
            raise ValueError("operation mixes tensors from different tapes")
        if not tapes:
            return Tensor(out)  # all-constant input: fold to a constant
        tape = tapes.pop()
        if tape is not self:
            raise ValueError("operation recorded on the wrong tape")
        nid = self._new_id()
        self._ops.append((nid, tuple(t.node for t in inputs), vjp))
        return Tensor(out, self, nid)


def _apply(inputs: tuple[Tensor, ...], forward, vjp) -> Tensor:
    out = forward()
    tapes = [t.tape for t in inputs if t.node is not None]
    if not tapes:
        if not np.isfinite(out).all():
            raise FloatingPointError("non-finite result")
        return Tensor(out)
    return tapes[0].record(out, inputs, vjp)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss for every parameter on the tape.

    Accumulation follows reverse recording order, so repeated runs over an
    identical tape give bit-identical results. Parameters the loss never
    touched get zero gradients.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"loss must be a 1x1 scalar, got shape {loss.shape}")
    if loss.tape is not tape or loss.node is None:
        raise ValueError("loss does not belong to this tape")
    grads: dict[int, np.ndarray] = {
        loss.node: np.ones((1, 1), dtype=loss.data.dtype)}
    for nid, input_ids, vjp in reversed(tape._ops):
        g = grads.pop(nid, None)
        if g is None:
            continue
        for iid, ig in zip(input_ids, vjp(g)):
            if iid is None or ig is None:
                continue
            acc = grads.get(iid)
            grads[iid] = ig if acc is None else acc + ig
    out = {}
    for pid in tape.param_ids:
        g = grads.get(pid)
        if g is None:
            shape, dtype = tape._leaf_spec[pid]
            g = np.zeros(shape, dtype=dtype)
        out[pid] = g
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _apply((a, b), lambda: ad @ bd,
                  lambda g: (g @ bd.T, ad.T @ g))


def spmm(s: Csr, b: Tensor, s_transposed: Csr | None = None) -> Tensor:
    """Constant sparse matrix times recorded dense matrix.

    Pass ``s_transposed=s`` for symmetric operators to skip the transpose.
    """
    st = s_transposed if s_transposed is not None else s.transpose()
    return _apply((b,), lambda: kernels.spmm(s, b.data),
                  lambda g: (kernels.spmm(st, g),))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _apply((a, b), lambda: a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return _apply((a, b), lambda: a.data - b.data, lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _apply((a, b), lambda: ad * bd, lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _apply((a,), lambda: c * a.data, lambda g: (c * g,))


def row_gather(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError("row_gather index out of range")
    n_rows = a.shape[0]

    def vjp(g):
        out = np.zeros((n_rows, g.shape[1]), dtype=g.dtype)
        kernels.scatter_add_rows(out, idx, g)
        return (out,)

    return _apply((a,), lambda: a.data[idx], vjp)


def row_scatter(a: Tensor, idx, n: int) -> Tensor:
    """Place row j of ``a`` at row idx[j] of an n-row zero matrix."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) != a.shape[0]:
        raise ValueError("row_scatter needs one target index per row")
    if len(idx) and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("row_scatter index out of range")
    if len(np.unique(idx)) != len(idx):
        raise ValueError("row_scatter indices must be distinct")

    def forward():
        out = np.zeros((n, a.shape[1]), dtype=a.data.dtype)
        out[idx] = a.data
        return out

    return _apply((a,), forward, lambda g: (g[idx],))


def broadcast_col(v: Tensor, cols: int) -> Tensor:
    if v.shape[1] != 1:
        raise ValueError("broadcast_col expects a column vector")
    return _apply((v,), lambda: np.repeat(v.data, cols, axis=1),
                  lambda g: (g.sum(axis=1, keepdims=True),))


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return _apply((a,), lambda: np.maximum(ad, 0.0),
                  lambda g: (g * (ad > 0.0),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return _apply((a,), lambda: s, lambda g: (g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _apply((a,), lambda: y, lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _apply((a,), lambda: np.log(ad), lambda g: (g / ad,))


def row_l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Rows scaled to unit L2 norm; rows with norm < eps stay zero."""
    ad = a.data
    norms = np.linalg.norm(ad, axis=1, keepdims=True)
    safe = np.where(norms < eps, 1.0, norms)
    y = np.where(norms < eps, 0.0, ad / safe)

    def vjp(g):
        # rows below eps are held at zero, so they pass no gradient
        inner = (g * y).sum(axis=1, keepdims=True)
        out = (g - y * inner) / safe
        return (np.where(norms < eps, 0.0, out),)

    return _apply((a,), lambda: y, vjp)


def reduce_mean(a: Tensor) -> Tensor:
    size = a.data.size
    shape = a.shape
    return _apply((a,), lambda: np.array([[a.data.mean()]],
                                         dtype=a.data.dtype),
                  lambda g: (np.full(shape, g[0, 0] / size),))


def logsumexp_row(a: Tensor, row_offset: np.ndarray | None = None) -> Tensor:
    """Per-row log-sum-exp, optionally of (a + row_offset) with a constant
    offset vector added to every row (ledger weights enter this way without
    materializing another full matrix)."""
    ad = a.data
    off = None
    if row_offset is not None:
        off = np.asarray(row_offset, dtype=ad.dtype).reshape(1, -1)
        if off.shape[1] != a.shape[1]:
            raise ValueError("row_offset length must match the column count")

    t = ad + off if off is not None else ad.copy()
    m = t.max(axis=1, keepdims=True)
    np.subtract(t, m, out=t)
    np.exp(t, out=t)
    y = m + np.log(t.sum(axis=1, keepdims=True))
    del t

    def vjp(g):
        soft = ad + off if off is not None else ad.copy()
        np.subtract(soft, y, out=soft)
        np.exp(soft, out=soft)
        soft *= g
        return (soft,)

    return _apply((a,), lambda: y, vjp)


def softmax_cross_entropy(logits: Tensor, targets, mask,
                          weights: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy of masked rows against integer targets.

    ``weights`` multiplies each masked row's loss (plain mean, i.e. the sum
    of weighted row losses divided by the number of masked rows).
    """
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError("cross entropy needs at least one masked row")
    tgt = targets[rows]
    if tgt.min() < 0 or tgt.max() >= logits.shape[1]:
        raise IndexError("target class out of range")
    ld = logits.data
    w = np.ones(len(rows), dtype=ld.dtype) if weights is None else \
        np.asarray(weights, dtype=ld.dtype)[rows]

    def forward():
        sel = ld[rows]
        m = sel.max(axis=1, keepdims=True)
        lse = (m + np.log(np.exp(sel - m).sum(axis=1, keepdims=True)))[:, 0]
        ce = lse - sel[np.arange(len(rows)), tgt]
        return np.array([[(w * ce).mean()]], dtype=ld.dtype)

    def vjp(g):
        sel = ld[rows]
        m = sel.max(axis=1, keepdims=True)
        p = np.exp(sel - m)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(len(rows)), tgt] -= 1.0
        p *= (w * (g[0, 0] / len(rows)))[:, None]
        out = np.zeros_like(ld)
        out[rows] = p
        return (out,)

    return _apply((logits,), forward, vjp)


def transpose(a: Tensor) -> Tensor:
    return _apply((a,), lambda: np.ascontiguousarray(a.data.T),
                  lambda g: (np.ascontiguousarray(g.T),))


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[1]:
        raise ValueError("concat_rows needs equal column counts")
    ra = a.shape[0]
    return _apply((a, b), lambda: np.concatenate([a.data, b.data], axis=0),
                  lambda g: (g[:ra], g[ra:]))


def segment_sum(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into num_segments buckets by segment id."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if len(seg) != a.shape[0]:
        raise ValueError("segment_sum needs one segment id per row")
    if len(seg) and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError("segment id out of range")

    def forward():
        out = np.zeros((num_segments, a.shape[1]), dtype=a.data.dtype)
        kernels.scatter_add_rows(out, seg, a.data)
        return out

    return _apply((a,), forward, lambda g: (g[seg],))
