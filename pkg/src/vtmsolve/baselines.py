"""Classical stationary iterative methods used as comparison points.

Point methods (Jacobi, Gauss-Seidel, SOR and their symmetric variants)
and block methods (block Jacobi, overlapped block Jacobi) share the
engine's stopping rule — relative global residual per iteration, the
same divergence limit — so iteration counts are directly comparable.
One iteration always updates every variable once; a symmetric sweep
(forward plus backward) counts as a single iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .engine import _bfs_within
from .netgen import LinearSystem
from .reports import SolveReport, SolveStatus, estimate_cf, residual_status
from .sparse import SingularMatrix, factor, spmv
from .tearing import PartitionLabels, _pattern_rows

METHODS = ("jacobi", "gs", "sgs", "sor", "ssor", "bj", "obj")

_METHOD_ALIASES = {
    "jacobi": "jacobi",
    "gs": "gs", "gaussseidel": "gs",
    "sgs": "sgs", "symmetricgs": "sgs", "symmetricgaussseidel": "sgs",
    "sor": "sor", "successiveoverrelaxation": "sor",
    "ssor": "ssor", "symmetricsor": "ssor",
    "bj": "bj", "blockjacobi": "bj",
    "obj": "obj", "overlappedblockjacobi": "obj",
}


class ZeroDiagonal(np.linalg.LinAlgError):
    """A point method hit a missing or zero diagonal entry."""


class SingularBlock(np.linalg.LinAlgError):
    """A block method could not factor one of its diagonal blocks."""


@dataclass(frozen=True)
class BaselineSpec:
    """Method selection plus its parameters.

    omega applies to sor/ssor (also accepted, and ignored, elsewhere);
    labels supply the blocks for bj/obj; overlap is the BFS growth
    depth for obj.
    """

    method: str
    omega: float = 1.5
    labels: PartitionLabels | None = None
    overlap: int = 1

    def __post_init__(self):
        key = str(self.method).replace("_", "").replace("-", "").lower()
        if key not in _METHOD_ALIASES:
            raise ValueError(f"unknown method '{self.method}', "
                             f"expected one of {METHODS}")
        object.__setattr__(self, "method", _METHOD_ALIASES[key])
        if not 0.0 < self.omega < 2.0:
            raise ValueError("omega must lie in (0, 2)")
        if self.overlap < 1:
            raise ValueError("overlap depth must be >= 1")
        if self.method in ("bj", "obj") and self.labels is None:
            raise ValueError(f"method '{self.method}' needs partition labels")


def overlapped_blocks(labels: PartitionLabels, A, o: int) -> list:
    """Block index sets: each part's own nodes grown by o graph layers.

    A part's own nodes are those assigned to it minus the shared
    interfacial nodes, so grown blocks of adjacent parts meet on the
    separator; with an empty interface the label sets themselves grow.
    Any node left uncovered (an interfacial node farther than o hops
    from every part's own nodes) is added to the block of its labeled
    part, so every node is covered by at least one block.
    """
    if o < 1:
        raise ValueError("overlap depth must be >= 1")
    part_of = labels.part_of
    n = len(part_of)
    iface = np.zeros(n, dtype=bool)
    iface[list(labels.interface)] = True
    pat_ro, pat_ci = _pattern_rows(A)
    blocks = []
    for p in range(labels.n_parts):
        base = np.flatnonzero((part_of == p) & ~iface)
        if len(base) == 0:
            blocks.append(base)
            continue
        dist = _bfs_within(pat_ro, pat_ci, base, o)
        blocks.append(np.flatnonzero(dist >= 0).astype(np.int64))
    covered = np.zeros(n, dtype=bool)
    for blk in blocks:
        covered[blk] = True
    for v in np.flatnonzero(~covered):
        p = int(part_of[v])
        blocks[p] = np.sort(np.append(blocks[p], v)).astype(np.int64)
    return blocks


def _diag_positions(A) -> np.ndarray:
    ro, ci, vals = A.row_offsets, A.col_indices, A.values
    n = A.nrows
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = ro[i], ro[i + 1]
        k = lo + int(np.searchsorted(ci[lo:hi], i))
        if k >= hi or ci[k] != i or vals[k] == 0.0:
            raise ZeroDiagonal(f"row {i} has no usable diagonal entry")
        pos[i] = k
    return pos


def _factor_blocks(sys: LinearSystem, blocks: list):
    prepared = []
    for p, blk in enumerate(blocks):
        sub = sys.A.submatrix(blk, blk)
        try:
            fac = factor(sub, hint="spd" if sys.symmetric else "general")
        except SingularMatrix as exc:
            raise SingularBlock(f"block {p} is singular: {exc}") from exc
        prepared.append((blk, sub.to_scipy(), fac))
    return prepared


def stationary_solve(sys: LinearSystem, spec: BaselineSpec | str,
                     tol: float = 1e-6, max_iter: int = 500):
    """Run one classical stationary method to convergence.

    Accepts a BaselineSpec or a bare method name. Returns
    (x, SolveReport) with the same stopping semantics as vtm_solve.

    Raises:
        ZeroDiagonal: a point method needs a nonzero diagonal.
        SingularBlock: a block method hit an unfactorable block.
    """
    if isinstance(spec, str):
        spec = BaselineSpec(spec)
    A, b = sys.A, sys.b
    n = A.nrows
    start = time.perf_counter()
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    method = spec.method

    step = None
    if method == "jacobi":
        dpos = _diag_positions(A)
        d = A.values[dpos]

        def step(x):
            return x + (b - spmv(A, x)) / d

    elif method in ("gs", "sgs", "sor", "ssor"):
        dpos = _diag_positions(A)
        omega = 1.0 if method in ("gs", "sgs") else spec.omega
        both = method in ("sgs", "ssor")
        ro, ci, vals = A.row_offsets, A.col_indices, A.values

        def step(x):
            x = x.copy()
            kernels.sor_sweep(ro, ci, vals, dpos, x, b, omega, False)
            if both:
                kernels.sor_sweep(ro, ci, vals, dpos, x, b, omega, True)
            return x

    elif method in ("bj", "obj"):
        if method == "bj":
            blocks = [np.flatnonzero(spec.labels.part_of == p).astype(np.int64)
                      for p in range(spec.labels.n_parts)]
        else:
            blocks = overlapped_blocks(spec.labels, A, spec.overlap)
        if len(spec.labels.part_of) != n:
            raise ValueError("labels do not match system size")
        prepared = _factor_blocks(sys, blocks)
        counts = np.zeros(n)
        for blk, _, _ in prepared:
            counts[blk] += 1.0
        if method == "bj" and not np.all(counts == 1.0):
            raise ValueError("block Jacobi labels must partition the nodes")

        def step(x):
            w = spmv(A, x)
            acc = np.zeros(n)
            for blk, sub_sp, fac in prepared:
                if len(blk) == 0:
                    continue
                rhs = b[blk] - w[blk] + sub_sp @ x[blk]
                acc[blk] += fac.solve(rhs)
            return acc / np.maximum(counts, 1.0)

    x = np.zeros(n)
    history: list = []
    status = SolveStatus.MAX_ITERATIONS
    iterations = 0
    for k in range(1, max_iter + 1):
        iterations = k
        x = step(x)
        rel = float(np.linalg.norm(b - spmv(A, x))) / scale
        history.append(rel)
        st = residual_status(rel, tol)
        if st is not None:
            status = st
            break

    report = SolveReport(
        method=method,
        status=status,
        iterations=iterations,
        x=x,
        residual_history=history,
        cf_estimate=estimate_cf(history, stride=1),
        wall_seconds=time.perf_counter() - start,
    )
    return x, report
