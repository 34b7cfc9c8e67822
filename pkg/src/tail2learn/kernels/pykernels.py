"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled via
``T2L_KERNELS=py``. Each backend is deterministic run-to-run; across
backends results agree to rounding order (~1e-15), not bitwise.
"""

from __future__ import annotations

import numpy as np


def spmm(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
         dense: np.ndarray) -> np.ndarray:
    """CSR (n_rows x k) times dense (k x m) product."""
    n_rows = len(indptr) - 1
    if len(indices) == 0:
        return np.zeros((n_rows, dense.shape[1]), dtype=dense.dtype)
    contrib = data[:, None] * dense[indices]
    counts = np.diff(indptr)
    out = np.zeros((n_rows, dense.shape[1]), dtype=dense.dtype)
    nonempty = counts > 0
    # reduceat misbehaves on empty segments, so reduce only nonempty rows
    starts = indptr[:-1][nonempty]
    out[nonempty] = np.add.reduceat(contrib, starts, axis=0)
    return out


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """In place: out[idx[i]] += rows[i], sequential over i (duplicates allowed)."""
    np.add.at(out, idx, rows)
