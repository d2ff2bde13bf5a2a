"""Virtual transmission iteration over a torn partition.

Each tick every subdomain solves its augmented local system
[[C_p + W_p, E_p], [F_p, D_p]] simultaneously, using the wave messages
that arrived over the virtual wires one delay earlier; solved boundary
voltages and currents then launch the next messages. The wire
admittance blocks W act as the preconditioner: the closer they match
the opposite side's boundary response, the less energy reflects back
and the faster the exchange settles.
"""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .reports import SolveReport, SolveStatus, estimate_cf, residual_status
from .sparse import CsrMatrix, SingularMatrix, factor, spmv
from .tearing import Partition, Subdomain

PRECONDITIONERS = ("scalar", "diag", "ob", "wob", "sca")

_KIND_ALIASES = {
    "scalar": "scalar", "scalaridentity": "scalar",
    "diag": "diag", "diagonal": "diag",
    "ob": "ob", "overlappedblock": "ob",
    "wob": "wob", "weightedoverlappedblock": "wob",
    "sca": "sca", "schurapprox": "sca",
}


class PreconditionerFailure(RuntimeError):
    """A wire admittance block could not be built (not SPD after repair)."""


class LocalSingular(np.linalg.LinAlgError):
    """A subdomain's augmented matrix cannot be factored."""


@dataclass(frozen=True)
class PreconditionerSpec:
    """Recipe for the wire admittance blocks.

    kind selects the family: "scalar" (alpha * I), "diag" (each side's
    own boundary diagonal), "ob" (the opposite side's boundary block),
    "wob" (alpha times the opposite block), "sca" (approximate Schur
    complement of the opposite side, truncated at BFS depth `depth`
    with drop tolerance `drop`). Long-form names (ScalarIdentity,
    Diagonal, OverlappedBlock, WeightedOverlappedBlock, SchurApprox)
    are accepted as aliases. wire_w maps node ids to manual scalar
    admittances that override the computed blocks on those wires.
    """

    kind: str = "scalar"
    alpha: float = 1.0
    depth: float = 2
    drop: float = 0.0
    wire_w: dict | None = None

    def __post_init__(self):
        key = str(self.kind).replace("_", "").replace("-", "").lower()
        if key not in _KIND_ALIASES:
            raise ValueError(f"unknown preconditioner '{self.kind}', "
                             f"expected one of {PRECONDITIONERS}")
        object.__setattr__(self, "kind", _KIND_ALIASES[key])
        if self.kind in ("scalar", "wob") and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind == "sca" and not self.depth >= 1:
            raise ValueError("depth must be >= 1")
        if not 0.0 <= self.drop < 1.0:
            raise ValueError("drop tolerance must lie in [0, 1)")


@dataclass
class BoundaryState:
    """Delay line of one wire-bundle endpoint.

    Ring buffers hold the endpoint's boundary voltages u and inflow
    currents i for the last tau ticks; delayed() reads the tick-(k-tau)
    sample that the opposite end consumes at tick k. Buffers start
    filled with zeros (the zero initial boundary condition).
    """

    tau: int
    u: deque
    i: deque

    @classmethod
    def zeros(cls, width: int, tau: int = 1) -> "BoundaryState":
        if tau < 1:
            raise ValueError("delay must be >= 1")
        return cls(tau,
                   deque([np.zeros(width)] * tau, maxlen=tau),
                   deque([np.zeros(width)] * tau, maxlen=tau))

    def delayed(self) -> tuple:
        return self.u[0], self.i[0]

    def push(self, u_new: np.ndarray, i_new: np.ndarray) -> None:
        self.u.append(u_new)
        self.i.append(i_new)


@dataclass
class WireBundle:
    """All wires between one subdomain pair, acting as one line.

    nodes are the shared interface nodes in ascending order; idx_a /
    idx_b their twin positions in the lower / higher subdomain. W_a is
    the admittance block augmenting the lower subdomain (and shaping
    messages sent into it); W_b the higher one. tau is the common
    delay of the grouped wires.
    """

    pair: tuple
    nodes: np.ndarray
    idx_a: np.ndarray
    idx_b: np.ndarray
    W_a: np.ndarray
    W_b: np.ndarray
    tau: int = 1


def _bfs_within(adj_ro, adj_ci, sources, depth) -> np.ndarray:
    """Hop distances in a local pattern graph, -1 beyond `depth`."""
    n = len(adj_ro) - 1
    dist = np.full(n, -1, dtype=np.int64)
    dq = deque()
    for s in sources:
        dist[s] = 0
        dq.append(int(s))
    while dq:
        u = dq.popleft()
        if dist[u] >= depth:
            continue
        for w in adj_ci[adj_ro[u]:adj_ro[u + 1]]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                dq.append(int(w))
    return dist


def schur_w(sub: Subdomain, depth: float = np.inf, drop: float = 0.0,
            spd_hint: bool = True) -> np.ndarray:
    """Approximate boundary Schur block of one subdomain.

    Computes C - E_t D_t^{-1} F_t where D_t keeps only the inner nodes
    within `depth` BFS hops of the boundary (np.inf keeps all, giving
    the exact Schur complement). Entries below drop * (row max) that
    lie outside the pattern of C are discarded, the result is
    symmetrized, and an indefinite result is shifted onto the SPD cone.

    Raises:
        PreconditionerFailure: the block is not SPD even after the
            shift, or the truncated interior cannot be factored.
    """
    t, m = sub.t, sub.m
    C = sub.C.to_dense()
    if m == 0 or depth == 0:
        W = C.copy()
    else:
        stitched = sub.stitched().to_scipy()
        pattern = (stitched + stitched.T).tocsr()
        dist = _bfs_within(pattern.indptr, pattern.indices, range(t), depth)
        keep = np.flatnonzero(dist[t:] >= 0)
        if len(keep) == 0:
            W = C.copy()
        else:
            Dt = sub.D.submatrix(keep, keep)
            Et = sub.E.submatrix(np.arange(t), keep)
            Ft = sub.F.submatrix(keep, np.arange(t))
            try:
                fac = factor(Dt, hint="spd" if spd_hint else "general")
                X = np.column_stack([fac.solve(col) for col in Ft.to_dense().T])
            except np.linalg.LinAlgError as exc:
                raise PreconditionerFailure(
                    f"truncated interior of subdomain {sub.index} is singular: {exc}"
                ) from exc
            W = C - Et.to_dense() @ X
    if drop > 0 and t > 1:
        cpat = sub.C.to_dense() != 0
        np.fill_diagonal(cpat, True)
        rowmax = np.max(np.abs(W), axis=1, keepdims=True)
        small = np.abs(W) < drop * rowmax
        W = np.where(small & ~cpat, 0.0, W)
    W = 0.5 * (W + W.T)
    lam = np.linalg.eigvalsh(W)
    if lam[0] <= 0:
        mu = abs(lam[0]) + 1e-8 * max(np.trace(W), 0.0) / max(t, 1)
        W = W + mu * np.eye(t)
        lam = np.linalg.eigvalsh(W)
        if lam[0] <= 0:
            raise PreconditionerFailure(
                f"boundary block of subdomain {sub.index} is not positive "
                f"definite after shifting")
    return W


def build_preconditioner(spec: PreconditionerSpec, partition: Partition) -> dict:
    """Admittance blocks for every wire bundle.

    Returns {(pa, pb): WireBundle}. Opposite-side kinds give each
    endpoint the block derived from the far subdomain; "diag" uses each
    side's own boundary diagonal; "scalar" the same alpha * I at both
    ends. Manual wire_w entries replace the row/column of their node
    with a decoupled scalar admittance at both ends.
    """
    subs = partition.subdomains
    tw_loc = [{int(v): i for i, v in enumerate(sub.twin_nodes)}
              for sub in subs]
    schur_cache: dict = {}

    def schur_of(q: int) -> np.ndarray:
        if q not in schur_cache:
            schur_cache[q] = schur_w(subs[q], spec.depth, spec.drop,
                                     spd_hint=partition.system.symmetric)
        return schur_cache[q]

    def opposite_block(q: int, nodes: np.ndarray, use_schur: bool) -> np.ndarray:
        """Subdomain q's boundary block restricted to the bundle's nodes.

        A principal submatrix of an SPD block is SPD, so the restriction
        keeps the convergence guarantee for safe admittance choices.
        """
        pos = np.array([tw_loc[q][int(v)] for v in nodes], dtype=np.int64)
        if use_schur:
            return schur_of(q)[np.ix_(pos, pos)].copy()
        return subs[q].C.submatrix(pos, pos).to_dense()

    bundles: dict = {}
    for (pa, pb), wires in partition.bundles().items():
        nodes = np.array([w.node for w in wires], dtype=np.int64)
        idx_a = np.array([w.end_a[1] for w in wires], dtype=np.int64)
        idx_b = np.array([w.end_b[1] for w in wires], dtype=np.int64)
        tau = wires[0].tau
        k = len(nodes)
        if spec.kind == "scalar":
            W_a = spec.alpha * np.eye(k)
            W_b = spec.alpha * np.eye(k)
        elif spec.kind == "diag":
            W_a = np.diag(subs[pa].C.diagonal()[idx_a])
            W_b = np.diag(subs[pb].C.diagonal()[idx_b])
        elif spec.kind == "ob":
            W_a = opposite_block(pb, nodes, False)
            W_b = opposite_block(pa, nodes, False)
        elif spec.kind == "wob":
            W_a = spec.alpha * opposite_block(pb, nodes, False)
            W_b = spec.alpha * opposite_block(pa, nodes, False)
        else:  # sca
            W_a = opposite_block(pb, nodes, True)
            W_b = opposite_block(pa, nodes, True)
        if spec.wire_w:
            for j, node in enumerate(nodes.tolist()):
                if node in spec.wire_w:
                    w = float(spec.wire_w[node])
                    for W in (W_a, W_b):
                        W[j, :] = 0.0
                        W[:, j] = 0.0
                        W[j, j] = w
        bundles[(pa, pb)] = WireBundle((pa, pb), nodes, idx_a, idx_b,
                                       W_a, W_b, tau)
    return bundles


def manual_bundles(partition: Partition, W) -> dict:
    """Bundles carrying explicitly supplied admittance blocks.

    W may be one dense matrix over the sorted interface nodes (used at
    both ends of every bundle, restricted to its nodes), a vector of
    per-node admittances, or a pair (W_into_lower, W_into_higher) of
    such. Used by the theory checkers to drive the engine with an
    arbitrary W rather than a preconditioner recipe.
    """
    iface = partition.interface_nodes()
    t = len(iface)
    pos = {v: i for i, v in enumerate(iface)}

    def as_block(obj):
        M = np.asarray(obj, dtype=float)
        if M.ndim == 0:
            M = float(M) * np.eye(t)
        elif M.ndim == 1:
            if len(M) != t:
                raise ValueError("per-node admittance vector length mismatch")
            M = np.diag(M)
        elif M.shape != (t, t):
            raise ValueError(f"W must be {t}x{t} over the sorted interface")
        return M

    if isinstance(W, (tuple, list)) and len(W) == 2:
        W_lo, W_hi = as_block(W[0]), as_block(W[1])
    else:
        W_lo = W_hi = as_block(W)

    bundles: dict = {}
    for (pa, pb), wires in partition.bundles().items():
        nodes = np.array([w.node for w in wires], dtype=np.int64)
        idx_a = np.array([w.end_a[1] for w in wires], dtype=np.int64)
        idx_b = np.array([w.end_b[1] for w in wires], dtype=np.int64)
        sel = np.array([pos[int(v)] for v in nodes], dtype=np.int64)
        bundles[(pa, pb)] = WireBundle(
            (pa, pb), nodes, idx_a, idx_b,
            W_lo[np.ix_(sel, sel)].copy(), W_hi[np.ix_(sel, sel)].copy(),
            wires[0].tau)
    return bundles


def _augmented_factor(sub: Subdomain, W_total: np.ndarray, symmetric: bool):
    stitched = sub.stitched().to_scipy().tocoo()
    t = sub.t
    wi, wj = np.nonzero(W_total)
    rows = np.concatenate([stitched.row, wi])
    cols = np.concatenate([stitched.col, wj])
    vals = np.concatenate([stitched.data, W_total[wi, wj]])
    n_loc = t + sub.m
    aug = CsrMatrix.from_coo(n_loc, n_loc, rows, cols, vals)
    try:
        return factor(aug, hint="spd" if symmetric else "general")
    except SingularMatrix as exc:
        raise LocalSingular(
            f"augmented matrix of subdomain {sub.index} is singular: {exc}"
        ) from exc


def local_solve(sub: Subdomain, W_p: np.ndarray, incoming: tuple, fac=None):
    """One augmented solve of a subdomain against incoming wire data.

    incoming is (u_q, i_q): the opposite endpoints' delayed boundary
    voltages and currents, aligned with this subdomain's twin order.
    Returns (u_p, y_p, i_p) where i_p is the current this subdomain
    sends back into the wires. Pass a prefactored augmented matrix via
    `fac` to amortize repeated calls.

    Raises:
        LocalSingular: the augmented matrix cannot be factored.
    """
    u_q, i_q = incoming
    W = np.asarray(W_p, dtype=float)
    if fac is None:
        fac = _augmented_factor(sub, W, symmetric=False)
    message = W @ u_q - i_q
    sol = fac.solve(np.concatenate([sub.f + message, sub.g]))
    u_p = sol[:sub.t]
    y_p = sol[sub.t:]
    i_p = message - W @ u_p
    return u_p, y_p, i_p


@dataclass
class _LocalSolver:
    sub: Subdomain
    fac: object
    # (twin positions, message key) pairs feeding this subdomain's RHS
    feeds: list = field(default_factory=list)

    def solve(self, messages: dict) -> tuple:
        rhs_f = self.sub.f.copy()
        for idx, key in self.feeds:
            rhs_f[idx] += messages[key]
        sol = self.fac.solve(np.concatenate([rhs_f, self.sub.g]))
        t = self.sub.t
        return sol[:t], sol[t:]


def prepare_solvers(partition: Partition, bundles: dict) -> list:
    """Factor every subdomain's augmented matrix once, up front."""
    solvers = []
    for p, sub in enumerate(partition.subdomains):
        W_total = np.zeros((sub.t, sub.t))
        feeds = []
        for (pa, pb), bd in bundles.items():
            if pa == p:
                W_total[np.ix_(bd.idx_a, bd.idx_a)] += bd.W_a
                feeds.append((bd.idx_a, ((pa, pb), "a")))
            if pb == p:
                W_total[np.ix_(bd.idx_b, bd.idx_b)] += bd.W_b
                feeds.append((bd.idx_b, ((pa, pb), "b")))
        fac = _augmented_factor(sub, W_total, partition.system.symmetric)
        solvers.append(_LocalSolver(sub, fac, feeds))
    return solvers


def assemble_solution(partition: Partition, u_list, y_list) -> np.ndarray:
    """Global candidate from local solves: twins averaged, inner copied.

    Twin copies are summed in ascending subdomain order before
    dividing, so the result does not depend on the scheduler.
    """
    x = np.zeros(partition.n)
    for p, sub in enumerate(partition.subdomains):
        x[sub.inner_nodes] = y_list[p]
    for v, copies in partition.twin_map.items():
        s = 0.0
        for part, loc in copies:
            s += float(u_list[part][loc])
        x[v] = s / len(copies)
    return x


def vtm_solve(partition: Partition, precond=None,
              tol: float = 1e-6, max_iter: int = 500,
              scheduler: str = "sequential", observer=None):
    """Run the transmission-exchange iteration to convergence.

    Every tick all subdomains solve simultaneously against the delayed
    boundary data of their wires (delay 1 everywhere), then currents
    and fresh messages derive from the committed boundary voltages.
    Convergence is judged on the assembled candidate's relative
    residual. The "parallel" scheduler farms the local solves to a
    thread pool but commits them in subdomain order, so its iterates
    are bitwise identical to the sequential schedule.

    precond may be a PreconditionerSpec (None means unit scalar wires),
    a {node: admittance} dict of manual per-node wire values on top of
    unit wires, or an explicit dense W (matrix, per-node vector, or
    (W_into_lower, W_into_higher) pair) over the sorted interface.

    Args:
        observer: optional callable (tick, x, interface_values) invoked
            after each tick with the assembled candidate and the
            averaged boundary values over sorted interface nodes.

    Returns:
        (x, SolveReport) — the last assembled candidate and the run
        record; report.status distinguishes convergence, divergence,
        and iteration exhaustion.
    """
    if scheduler not in ("sequential", "parallel"):
        raise ValueError(f"unknown scheduler '{scheduler}'")
    start = time.perf_counter()
    if precond is None:
        bundles = build_preconditioner(PreconditionerSpec(), partition)
    elif isinstance(precond, PreconditionerSpec):
        bundles = build_preconditioner(precond, partition)
    elif isinstance(precond, dict):
        # manual per-node scalars on top of unit wires
        bundles = build_preconditioner(
            PreconditionerSpec("scalar", wire_w=dict(precond)), partition)
    else:
        bundles = manual_bundles(partition, precond)
    solvers = prepare_solvers(partition, bundles)
    A, b = partition.system.A, partition.system.b
    bnorm = float(np.linalg.norm(b))
    scale = bnorm if bnorm > 0 else 1.0
    iface_nodes = partition.interface_nodes()

    state = {(pair, end): BoundaryState.zeros(len(bd.nodes), bd.tau)
             for pair, bd in bundles.items() for end in ("a", "b")}
    N = partition.N
    history: list = []
    mism_history: list = []
    status = SolveStatus.MAX_ITERATIONS
    x = np.zeros(partition.n)
    iterations = 0
    pool = ThreadPoolExecutor(max_workers=min(N, 8)) \
        if scheduler == "parallel" and N > 1 else None
    try:
        for k in range(1, max_iter + 1):
            iterations = k
            messages = {}
            for pair, bd in bundles.items():
                ua_d, ia_d = state[(pair, "a")].delayed()
                ub_d, ib_d = state[(pair, "b")].delayed()
                messages[(pair, "a")] = bd.W_a @ ub_d - ib_d
                messages[(pair, "b")] = bd.W_b @ ua_d - ia_d

            if pool is not None:
                futures = [pool.submit(solvers[p].solve, messages)
                           for p in range(N)]
                results = [fu.result() for fu in futures]
            else:
                results = [solvers[p].solve(messages) for p in range(N)]
            u_list = [r[0] for r in results]
            y_list = [r[1] for r in results]

            mism = 0.0
            for pair, bd in bundles.items():
                ua = u_list[pair[0]][bd.idx_a]
                ub = u_list[pair[1]][bd.idx_b]
                i_a = messages[(pair, "a")] - bd.W_a @ ua
                i_b = messages[(pair, "b")] - bd.W_b @ ub
                state[(pair, "a")].push(ua, i_a)
                state[(pair, "b")].push(ub, i_b)
                if len(ua):
                    mism = max(mism, float(np.max(np.abs(ua - ub))))

            x = assemble_solution(partition, u_list, y_list)
            rel = float(np.linalg.norm(spmv(A, x) - b)) / scale
            history.append(rel)
            mism_history.append(mism)
            if observer is not None:
                observer(k, x.copy(), x[iface_nodes].copy())
            st = residual_status(rel, tol)
            if st is not None:
                status = st
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    report = SolveReport(
        method="vtm",
        status=status,
        iterations=iterations,
        x=x,
        residual_history=history,
        twin_mismatch=mism_history[-1] if mism_history else float("nan"),
        twin_mismatch_history=mism_history,
        cf_estimate=estimate_cf(history, stride=2),
        wall_seconds=time.perf_counter() - start,
    )
    return x, report


def solver_config_text(spec: PreconditionerSpec, tol: float, max_iter: int,
                       scheduler: str, seed: int | None = None) -> str:
    """Flat key-value snapshot of a solver configuration."""
    lines = [
        f"precond {spec.kind}",
        f"alpha {spec.alpha!r}",
        f"depth {spec.depth!r}",
        f"drop {spec.drop!r}",
        f"tol {tol!r}",
        f"max_iter {max_iter}",
        f"scheduler {scheduler}",
    ]
    if seed is not None:
        lines.append(f"seed {seed}")
    if spec.wire_w:
        for node in sorted(spec.wire_w):
            lines.append(f"wire_w {node} {float(spec.wire_w[node])!r}")
    return "\n".join(lines) + "\n"


def parse_solver_config(text: str) -> dict:
    """Parse a solver configuration back into keyword settings."""
    out: dict = {}
    wire_w: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "wire_w" and len(tok) == 3:
                wire_w[int(tok[1])] = float(tok[2])
            elif len(tok) == 2 and tok[0] in ("alpha", "depth", "drop", "tol"):
                out[tok[0]] = float(tok[1])
            elif len(tok) == 2 and tok[0] in ("max_iter", "seed"):
                out[tok[0]] = int(tok[1])
            elif len(tok) == 2 and tok[0] in ("precond", "scheduler"):
                out[tok[0]] = tok[1]
            else:
                raise ValueError("unrecognized record")
        except ValueError as exc:
            raise ValueError(f"config line {ln}: {exc}") from None
    if wire_w:
        out["wire_w"] = wire_w
    return out
