# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR-dense products and row scatter-adds.

Accumulation is sequential in index order, so repeated runs are
bit-identical; the numpy fallback may differ by rounding order (~1e-15).
Both float32 and float64 operands are supported.
"""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    cnp.float32_t
    cnp.float64_t


def spmm(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
         floating[::1] data, floating[:, ::1] dense):
    """CSR (n_rows x k) times dense (k x m) product."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t m = dense.shape[1]
    if floating is cnp.float32_t:
        out_arr = np.zeros((n_rows, m), dtype=np.float32)
    else:
        out_arr = np.zeros((n_rows, m))
    cdef floating[:, ::1] out = out_arr
    cdef Py_ssize_t i, p, j, c
    cdef floating v
    for i in range(n_rows):
        for p in range(indptr[i], indptr[i + 1]):
            c = indices[p]
            v = data[p]
            for j in range(m):
                out[i, j] = out[i, j] + v * dense[c, j]
    return out_arr


def scatter_add_rows(floating[:, ::1] out, cnp.int64_t[::1] idx,
                     floating[:, ::1] rows):
    """In place: out[idx[i]] += rows[i], sequential over i (duplicates allowed)."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t m = rows.shape[1]
    cdef Py_ssize_t i, j, r
    for i in range(n):
        r = idx[i]
        for j in range(m):
            out[r, j] = out[r, j] + rows[i, j]
