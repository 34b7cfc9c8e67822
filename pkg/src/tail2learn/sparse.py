"""Compressed sparse row matrices for graph operators.

Only what the encoder needs: construction from undirected edge lists,
symmetric degree normalization, and principal submatrix extraction for
graph coarsening. Products with dense matrices live in
:mod:`tail2learn.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Csr:
    """Immutable CSR matrix with float64 values.

    Column indices are sorted within each row, which fixes the accumulation
    order of all products and keeps results reproducible.
    """

    n_rows: int
    n_cols: int
    indptr: np.ndarray   # int64, len n_rows + 1
    indices: np.ndarray  # int64, len nnz
    data: np.ndarray     # float64, len nnz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def transpose(self) -> "Csr":
        """Transposed copy (CSR of the transpose, rows sorted)."""
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64),
                         np.diff(self.indptr))
        return from_coo(self.n_cols, self.n_rows, self.indices, rows, self.data)


def from_coo(n_rows: int, n_cols: int, rows: np.ndarray, cols: np.ndarray,
             data: np.ndarray) -> Csr:
    """Build a CSR matrix from coordinate triples (duplicates not summed)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    data = np.asarray(data, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, data = rows[order], cols[order], data[order]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return Csr(n_rows, n_cols, indptr, cols, data)


def adjacency_csr(n: int, edges: np.ndarray) -> Csr:
    """Binary symmetric adjacency from canonical undirected edges (i < j)."""
    if len(edges) == 0:
        return from_coo(n, n, np.empty(0, np.int64), np.empty(0, np.int64),
                        np.empty(0, np.float64))
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    return from_coo(n, n, src, dst, np.ones(len(src)))


def submatrix(a: Csr, idx: np.ndarray) -> Csr:
    """Principal submatrix a[idx, :][:, idx], rows/cols in the order of idx."""
    idx = np.asarray(idx, dtype=np.int64)
    pos = np.full(a.n_cols, -1, dtype=np.int64)
    pos[idx] = np.arange(len(idx))
    rows, cols, vals = [], [], []
    for new_i, old_i in enumerate(idx):
        lo, hi = a.indptr[old_i], a.indptr[old_i + 1]
        cj = a.indices[lo:hi]
        keep = pos[cj] >= 0
        rows.append(np.full(int(keep.sum()), new_i, dtype=np.int64))
        cols.append(pos[cj[keep]])
        vals.append(a.data[lo:hi][keep])
    if rows:
        rows_a = np.concatenate(rows)
        cols_a = np.concatenate(cols)
        vals_a = np.concatenate(vals)
    else:
        rows_a = np.empty(0, np.int64)
        cols_a = np.empty(0, np.int64)
        vals_a = np.empty(0, np.float64)
    return from_coo(len(idx), len(idx), rows_a, cols_a, vals_a)


def degrees(a: Csr) -> np.ndarray:
    """Row sums (node degrees for a binary adjacency)."""
    out = np.zeros(a.n_rows)
    np.add.at(out, np.repeat(np.arange(a.n_rows), np.diff(a.indptr)), a.data)
    return out


def normalize_augmented(a: Csr) -> Csr:
    """Symmetric normalization with self-loops added first.

    Entry (i, j) of the result is 1/sqrt(dh_i * dh_j) where dh is the degree
    after self-loop augmentation; isolated nodes therefore get a clean 1.0
    on the diagonal.
    """
    dh = degrees(a) + 1.0
    inv_sqrt = 1.0 / np.sqrt(dh)
    rows = np.repeat(np.arange(a.n_rows, dtype=np.int64), np.diff(a.indptr))
    all_rows = np.concatenate([rows, np.arange(a.n_rows, dtype=np.int64)])
    all_cols = np.concatenate([a.indices, np.arange(a.n_rows, dtype=np.int64)])
    vals = inv_sqrt[all_rows] * inv_sqrt[all_cols]
    return from_coo(a.n_rows, a.n_cols, all_rows, all_cols, vals)


def normalize_first_order(a: Csr) -> Csr:
    """First-order filter I + D^(-1/2) A D^(-1/2) (degrees clamped to >= 1)."""
    d = np.maximum(degrees(a), 1.0)
    inv_sqrt = 1.0 / np.sqrt(d)
    rows = np.repeat(np.arange(a.n_rows, dtype=np.int64), np.diff(a.indptr))
    all_rows = np.concatenate([rows, np.arange(a.n_rows, dtype=np.int64)])
    all_cols = np.concatenate([a.indices, np.arange(a.n_rows, dtype=np.int64)])
    vals = np.concatenate([inv_sqrt[rows] * inv_sqrt[a.indices] * a.data,
                           np.ones(a.n_rows)])
    return from_coo(a.n_rows, a.n_cols, all_rows, all_cols, vals)
