"""Kernel backend selection.

The compiled extension is preferred when present; ``T2L_KERNELS`` overrides
(``c`` forces the extension, ``py`` forces the numpy fallback, ``auto`` is
the default). Both backends implement the same two functions with the same
accumulation order.
"""

from __future__ import annotations

import os

import numpy as np

from . import pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_choice = os.environ.get("T2L_KERNELS", "auto").lower()
if _choice not in ("auto", "c", "py"):
    raise ValueError(f"T2L_KERNELS must be auto, c or py, got {_choice!r}")
if _choice == "c" and _ckernels is None:
    raise ImportError("T2L_KERNELS=c but the compiled kernels are not built")

_impl = pykernels if (_choice == "py" or _ckernels is None) else _ckernels

BACKEND = "py" if _impl is pykernels else "c"


def spmm(csr, dense: np.ndarray) -> np.ndarray:
    """Sparse (CSR) times dense product; result has the dense dtype."""
    if csr.n_cols != dense.shape[0]:
        raise ValueError(f"spmm shape mismatch: {csr.shape} @ {dense.shape}")
    data = csr.data if csr.data.dtype == dense.dtype else \
        csr.data.astype(dense.dtype)
    return _impl.spmm(csr.indptr, csr.indices, data,
                      np.ascontiguousarray(dense))


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, rows: np.ndarray) -> None:
    """out[idx[i]] += rows[i] for each i, in order; duplicates accumulate."""
    _impl.scatter_add_rows(out, np.ascontiguousarray(idx, dtype=np.int64),
                           np.ascontiguousarray(rows, dtype=out.dtype))


def backend_functions(name: str):
    """Return the raw (spmm, scatter_add_rows) pair of a named backend."""
    if name == "py":
        return pykernels.spmm, pykernels.scatter_add_rows
    if name == "c":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels.spmm, _ckernels.scatter_add_rows
    raise ValueError(f"unknown backend {name!r}")


def set_backend(name: str) -> str:
    """Switch the active backend at runtime (used by benchmarks); returns
    the previously active backend name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "auto":
        name = "c" if _ckernels is not None else "py"
    backend_functions(name)  # validates availability
    _impl = pykernels if name == "py" else _ckernels
    BACKEND = name
    return previous
