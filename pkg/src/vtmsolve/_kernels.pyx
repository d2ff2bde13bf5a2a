# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled row-sequential relaxation sweeps over CSR storage.

These loops carry a per-row recurrence (each update reads values written
earlier in the same sweep), so they cannot be expressed as vectorized
numpy operations. Matching pure-python implementations live in
_kernels_py; the two are selected at import time by vtmsolve.kernels.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def sor_sweep(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
              double[::1] data, cnp.int64_t[::1] diag_pos,
              double[::1] x, double[::1] b, double omega, bint reverse):
    """One in-place SOR sweep; omega=1 gives Gauss-Seidel.

    diag_pos[i] is the index of a_ii inside data for row i.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, k, start, stop
    cdef Py_ssize_t dp
    cdef double s, aii
    if reverse:
        for i in range(n - 1, -1, -1):
            start = indptr[i]
            stop = indptr[i + 1]
            dp = diag_pos[i]
            s = 0.0
            for k in range(start, stop):
                if k != dp:
                    s += data[k] * x[indices[k]]
            aii = data[dp]
            x[i] = (1.0 - omega) * x[i] + omega * (b[i] - s) / aii
    else:
        for i in range(n):
            start = indptr[i]
            stop = indptr[i + 1]
            dp = diag_pos[i]
            s = 0.0
            for k in range(start, stop):
                if k != dp:
                    s += data[k] * x[indices[k]]
            aii = data[dp]
            x[i] = (1.0 - omega) * x[i] + omega * (b[i] - s) / aii
