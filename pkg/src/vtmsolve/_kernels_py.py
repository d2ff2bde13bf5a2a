"""Pure-python fallback for the relaxation sweep kernels.

Same contract as the compiled _kernels module, roughly two orders of
magnitude slower. Row accumulation uses np.dot, so results can differ
from the compiled sweep in the last bits; both satisfy the same
convergence contracts.
"""

import numpy as np


def sor_sweep(indptr, indices, data, diag_pos, x, b, omega, reverse):
    """One in-place SOR sweep; omega=1 gives Gauss-Seidel."""
    n = len(x)
    order = range(n - 1, -1, -1) if reverse else range(n)
    one_minus = 1.0 - omega
    for i in order:
        lo, hi = indptr[i], indptr[i + 1]
        dp = diag_pos[i]
        s = np.dot(data[lo:hi], x[indices[lo:hi]]) - data[dp] * x[i]
        x[i] = one_minus * x[i] + omega * (b[i] - s) / data[dp]
