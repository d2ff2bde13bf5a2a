"""Wire tearing: interface selection, node splitting, exact reassembly.

Tearing splits each interfacial node of a linear system into twin
copies, one per adjacent subdomain. Branch couplings (symmetric
negative off-diagonal pairs) follow the subdomain that owns their other
endpoint, carrying their diagonal contribution with them; the remaining
shunt part of the diagonal and the current injection are divided by the
split weights. Twin copies are joined by virtual wires, one per
adjacent subdomain pair, forming a chain when a node touches more than
two subdomains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netgen import LinearSystem
from .sparse import CsrMatrix, mm_write

_BALANCE_SLACK = 1.2  # parts stay within 20% of n/N


class InvalidLabels(ValueError):
    """Partition labels violate the separator property."""


@dataclass(frozen=True)
class PartitionLabels:
    """Node-to-subdomain assignment plus the interfacial node set.

    Every node carries a part label, interfacial nodes included; the
    interface must be a vertex separator, i.e. no matrix entry may join
    inner nodes of different parts.
    """

    part_of: np.ndarray
    interface: frozenset
    n_parts: int

    def __post_init__(self):
        object.__setattr__(self, "part_of", np.asarray(self.part_of, dtype=np.int64))
        object.__setattr__(self, "interface", frozenset(int(v) for v in self.interface))
        n = len(self.part_of)
        if self.n_parts < 1:
            raise ValueError("need at least one part")
        if len(self.part_of) and (self.part_of.min() < 0
                                  or self.part_of.max() >= self.n_parts):
            raise ValueError("part label out of range")
        for v in self.interface:
            if not 0 <= v < n:
                raise ValueError(f"interface node {v} out of range")


@dataclass(frozen=True)
class Wire:
    """One virtual transmission line between twin copies of a node."""

    id: int
    node: int
    end_a: tuple  # (subdomain id, local twin index)
    end_b: tuple
    tau: int = 1

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("wire delay must be >= 1")
        if self.end_a[0] == self.end_b[0]:
            raise ValueError("wire endpoints must lie in distinct subdomains")


@dataclass(frozen=True)
class Subdomain:
    """Local block system of one subdomain.

    The stitched matrix [[C, E], [F, D]] uses twin-first local order:
    local indices 0..t-1 are the twin copies (ascending global node
    id), t..t+m-1 the inner nodes (ascending global id).
    """

    index: int
    C: CsrMatrix
    E: CsrMatrix
    F: CsrMatrix
    D: CsrMatrix
    f: np.ndarray
    g: np.ndarray
    twin_nodes: np.ndarray
    inner_nodes: np.ndarray

    @property
    def t(self) -> int:
        return len(self.twin_nodes)

    @property
    def m(self) -> int:
        return len(self.inner_nodes)

    def twin_local(self, node: int) -> int:
        i = int(np.searchsorted(self.twin_nodes, node))
        if i >= self.t or self.twin_nodes[i] != node:
            raise KeyError(f"node {node} has no twin in subdomain {self.index}")
        return i

    def inner_local(self, node: int) -> int:
        i = int(np.searchsorted(self.inner_nodes, node))
        if i >= self.m or self.inner_nodes[i] != node:
            raise KeyError(f"node {node} is not inner to subdomain {self.index}")
        return i

    def stitched(self) -> CsrMatrix:
        """The full local matrix [[C, E], [F, D]]."""
        import scipy.sparse as sp
        top = sp.hstack([self.C.to_scipy(), self.E.to_scipy()], format="csr")
        bot = sp.hstack([self.F.to_scipy(), self.D.to_scipy()], format="csr")
        return CsrMatrix.from_scipy(sp.vstack([top, bot], format="csr"))

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.f, self.g])


@dataclass(frozen=True)
class Partition:
    """Torn system: subdomains, wires, twin bookkeeping.

    twin_map maps each interface node to its (subdomain, local twin)
    copies in ascending subdomain order; split_weights holds the nominal
    per-subdomain weights in the same order. The originating system is
    kept so solvers can evaluate the global residual.
    """

    N: int
    subdomains: tuple
    wires: tuple
    twin_map: dict
    split_weights: dict
    labels: PartitionLabels
    system: LinearSystem

    @property
    def n(self) -> int:
        return self.system.n

    def interface_nodes(self) -> list:
        return sorted(self.twin_map)

    def bundles(self) -> dict:
        """Wires grouped per subdomain pair.

        Returns {(pa, pb): [wire, ...]} with pa < pb and wires ordered
        by ascending global node id. Each group acts as one
        multi-conductor line whose admittance block couples its wires.
        """
        groups: dict = {}
        for w in self.wires:
            pa, pb = w.end_a[0], w.end_b[0]
            key = (min(pa, pb), max(pa, pb))
            groups.setdefault(key, []).append(w)
        for key in groups:
            groups[key].sort(key=lambda w: w.node)
        return dict(sorted(groups.items()))


def _exact_remainder(total: float, head: float) -> float | None:
    """Share d with fl(head + d) == total, within an ulp of total-head.

    head is the running float sum of the earlier shares in their fixed
    order. For diagonally dominant inputs the plain difference is
    already exact (Sterbenz); the nudge loop covers rounding at the
    boundary. Returns None when no such d exists (the sum lands on a
    round-to-even tie on both sides of total).
    """
    d = total - head
    for _ in range(8):
        s = head + d
        if s == total:
            return d
        d = np.nextafter(d, np.inf if s < total else -np.inf)
    return None


def _exact_shares(total: float, provisional: list) -> list:
    """Extend the provisional shares with a final one so the running
    float sum in list order reproduces total bitwise.

    When no exact remainder exists for the provisional head sum, the
    last provisional share is re-derived from a head nudged by up to
    eight ulps (an equally valid way to split the value) until a head
    with an exact remainder is found.
    """
    if not provisional:
        return [float(total)]
    head = 0.0
    for s in provisional[:-1]:
        head = head + s
    h0 = head + provisional[-1]
    for step in range(17):
        if step:
            k = (step + 1) // 2
            direction = np.inf if step % 2 else -np.inf
            h = h0
            for _ in range(k):
                h = np.nextafter(h, direction)
        else:
            h = h0
        y = h - head
        if head + y != h:
            continue
        d = _exact_remainder(total, h)
        if d is not None:
            return list(provisional[:-1]) + [y, d]
    return list(provisional) + [total - h0]


def _pattern_rows(A: CsrMatrix):
    """Row-wise structural neighbor map of A union A^T (von pattern)."""
    m = A.to_scipy()
    sym = (m + m.T).tocsr()
    sym.sort_indices()
    return sym.indptr, sym.indices


def _interface_row_values(A: CsrMatrix, node: int) -> dict:
    ro, ci, v = A.row_offsets, A.col_indices, A.values
    lo, hi = ro[node], ro[node + 1]
    return {int(c): float(x) for c, x in zip(ci[lo:hi], v[lo:hi])}


def _entry(A: CsrMatrix, i: int, j: int):
    ro, ci = A.row_offsets, A.col_indices
    lo, hi = ro[i], ro[i + 1]
    k = lo + np.searchsorted(ci[lo:hi], j)
    if k < hi and ci[k] == j:
        return float(A.values[k])
    return None


def wire_tear(sys: LinearSystem, labels: PartitionLabels, weights="equal") -> Partition:
    """Tear a system into per-subdomain block systems joined by wires.

    Args:
        sys: the global system A x = b.
        labels: part assignment and interfacial node set.
        weights: "equal" for 1/k splits, or {node: {part: w}} with
            positive weights summing to 1 per node.

    Returns:
        Partition with blocks satisfying sum of aligned C_p == C and
        sum of f_p == f exactly.

    Raises:
        InvalidLabels: an off-diagonal entry joins inner nodes of
            different parts (the separator property fails).
    """
    A, b = sys.A, sys.b
    n = A.nrows
    if len(labels.part_of) != n:
        raise InvalidLabels("label array length does not match system size")
    N = labels.n_parts
    part_of = labels.part_of
    iface = np.zeros(n, dtype=bool)
    iface[list(labels.interface)] = True

    ro, ci, vals = A.row_offsets, A.col_indices, A.values
    row_idx = np.repeat(np.arange(n, dtype=np.int64), np.diff(ro))
    offdiag = row_idx != ci
    bad = offdiag & ~iface[row_idx] & ~iface[ci] & (part_of[row_idx] != part_of[ci])
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise InvalidLabels(
            f"entry ({row_idx[k]},{ci[k]}) joins inner nodes of parts "
            f"{part_of[row_idx[k]]} and {part_of[ci[k]]}; mark one endpoint interfacial")

    pat_ro, pat_ci = _pattern_rows(A)
    iface_sorted = sorted(labels.interface)

    # adjacent subdomains per interface node, ascending
    node_parts: dict = {}
    for v in iface_sorted:
        nb = pat_ci[pat_ro[v]:pat_ro[v + 1]]
        ps = set(part_of[nb[nb != v]].tolist())
        ps.add(int(part_of[v]))
        node_parts[v] = sorted(ps)

    # nominal split weights
    wmap: dict = {}
    if weights == "equal":
        for v in iface_sorted:
            k = len(node_parts[v])
            wmap[v] = tuple((p, 1.0 / k) for p in node_parts[v])
    else:
        for v in iface_sorted:
            given = weights.get(v)
            if given is None:
                raise ValueError(f"missing split weights for interface node {v}")
            if sorted(given) != node_parts[v]:
                raise ValueError(f"weights for node {v} must cover parts {node_parts[v]}")
            ws = [float(given[p]) for p in node_parts[v]]
            if any(w <= 0 for w in ws):
                raise ValueError(f"weights for node {v} must be positive")
            if abs(sum(ws) - 1.0) > 1e-9:
                raise ValueError(f"weights for node {v} must sum to 1")
            wmap[v] = tuple(zip(node_parts[v], ws))

    wdict = {v: dict(wmap[v]) for v in iface_sorted}

    def host_shares(i, j, x):
        """Split a coupling between interface nodes of different parts.

        Hosts are the parts holding twins of both endpoints (always at
        least the two endpoint labels); shares are proportional to the
        product of the endpoint node weights, with the last share
        adjusted so the host-ordered re-summation reproduces x bitwise.
        """
        in_j = set(node_parts[j])
        hosts = [p for p in node_parts[i] if p in in_j]
        raw = [wdict[i][p] * wdict[j][p] for p in hosts]
        tot = sum(raw)
        provisional = [x * (r / tot) for r in raw[:-1]]
        return hosts, _exact_shares(x, provisional)

    twin_nodes = [[] for _ in range(N)]
    for v in iface_sorted:
        for p in node_parts[v]:
            twin_nodes[p].append(v)
    twin_nodes = [np.array(t, dtype=np.int64) for t in twin_nodes]
    inner_mask = ~iface
    inner_nodes = [np.flatnonzero(inner_mask & (part_of == p)).astype(np.int64)
                   for p in range(N)]

    tw_loc = [
        {int(v): i for i, v in enumerate(twin_nodes[p])} for p in range(N)]
    in_loc = [
        {int(v): i for i, v in enumerate(inner_nodes[p])} for p in range(N)]
    inner_local_arr = np.full(n, -1, dtype=np.int64)
    for p in range(N):
        inner_local_arr[inner_nodes[p]] = np.arange(len(inner_nodes[p]))

    trip = [dict(C=([], [], []), E=([], [], []), F=([], [], []), D=([], [], []))
            for _ in range(N)]

    def push(p, block, i, j, x):
        t = trip[p][block]
        t[0].append(i)
        t[1].append(j)
        t[2].append(x)

    # bulk inner-inner entries, vectorized per part
    both_inner = ~iface[row_idx] & ~iface[ci]
    for p in range(N):
        sel = both_inner & (part_of[row_idx] == p)
        li = inner_local_arr[row_idx[sel]]
        lj = inner_local_arr[ci[sel]]
        t = trip[p]["D"]
        t[0].extend(li.tolist())
        t[1].extend(lj.tolist())
        t[2].extend(vals[sel].tolist())

    # entries with at least one interfacial endpoint, excluding twin diagonals
    touch = np.flatnonzero(~both_inner)
    for k in touch.tolist():
        i, j, x = int(row_idx[k]), int(ci[k]), float(vals[k])
        if iface[i] and iface[j]:
            if i == j:
                continue  # handled by the split below
            if part_of[i] == part_of[j]:
                p = int(part_of[i])  # same-part couplings stay intact
                push(p, "C", tw_loc[p][i], tw_loc[p][j], x)
            else:
                # couplings across parts split like the shunts: every
                # hosting subdomain gets a share of the same element,
                # so each block stays a circuit in its own right
                for p, s in zip(*host_shares(i, j, x)):
                    push(p, "C", tw_loc[p][i], tw_loc[p][j], s)
        elif iface[i]:
            p = int(part_of[j])
            push(p, "E", tw_loc[p][i], in_loc[p][j], x)
        else:
            p = int(part_of[i])
            push(p, "F", in_loc[p][i], tw_loc[p][j], x)

    # twin diagonals: branch contributions follow their branch, the shunt
    # residue splits by weight, and the last share is adjusted so the
    # twin_map-ordered re-summation reproduces the original value bitwise
    f_parts = [np.zeros(len(twin_nodes[p])) for p in range(N)]
    g_parts = [b[inner_nodes[p]].copy() for p in range(N)]
    for v in iface_sorted:
        rowv = _interface_row_values(A, v)
        a_vv = rowv.get(v, 0.0)
        branch_to: dict = {p: 0.0 for p in node_parts[v]}
        branch_total = 0.0
        for u in sorted(rowv):
            if u == v:
                continue
            x = rowv[u]
            if x < 0 and _entry(A, u, v) == x:
                if not iface[u]:
                    branch_to[int(part_of[u])] += -x
                elif part_of[u] == part_of[v]:
                    branch_to[int(part_of[v])] += -x
                else:
                    # diagonal contribution follows the coupling split so
                    # every host's block stamps a complete branch
                    for p, s in zip(*host_shares(v, u, x)):
                        branch_to[p] += -s
                branch_total += -x
        residue = a_vv - branch_total
        parts = node_parts[v]
        ws = [w for _p, w in wmap[v]]
        provisional = [branch_to[p] + ws[idx] * residue
                       for idx, p in enumerate(parts[:-1])]
        for p, d in zip(parts, _exact_shares(a_vv, provisional)):
            push(p, "C", tw_loc[p][v], tw_loc[p][v], d)

        bv = float(b[v])
        provisional = [ws[idx] * bv for idx in range(len(parts) - 1)]
        for p, s in zip(parts, _exact_shares(bv, provisional)):
            f_parts[p][tw_loc[p][v]] = s

    subdomains = []
    for p in range(N):
        t = len(twin_nodes[p])
        m = len(inner_nodes[p])
        C = CsrMatrix.from_coo(t, t, *trip[p]["C"])
        E = CsrMatrix.from_coo(t, m, *trip[p]["E"])
        F = CsrMatrix.from_coo(m, t, *trip[p]["F"])
        D = CsrMatrix.from_coo(m, m, *trip[p]["D"])
        subdomains.append(Subdomain(p, C, E, F, D, f_parts[p], g_parts[p],
                                    twin_nodes[p], inner_nodes[p]))

    twin_map = {v: tuple((p, tw_loc[p][v]) for p in node_parts[v])
                for v in iface_sorted}
    wires = []
    wid = 0
    for v in iface_sorted:
        chain = node_parts[v]
        for a, bp in zip(chain, chain[1:]):
            wires.append(Wire(wid, v, (a, tw_loc[a][v]), (bp, tw_loc[bp][v])))
            wid += 1

    return Partition(N, tuple(subdomains), tuple(wires), twin_map, wmap,
                     labels, sys)


def reassemble(p: Partition) -> LinearSystem:
    """Collapse twin copies back into the original system.

    Twin rows/columns and RHS shares are summed in twin_map order; by
    construction of wire_tear this reproduces the original values
    bitwise for circuit-derived systems.
    """
    n = p.n
    rows, cols, vals = [], [], []
    coupling: dict = {}  # (gi, gj) -> shares summed in subdomain order
    b = np.zeros(n)
    for sub in p.subdomains:
        tn, inn = sub.twin_nodes, sub.inner_nodes
        for block, rmap, cmap in (
                (sub.C, tn, tn), (sub.E, tn, inn), (sub.F, inn, tn), (sub.D, inn, inn)):
            ro, ci, v = block.row_offsets, block.col_indices, block.values
            for i in range(block.nrows):
                gi = int(rmap[i])
                for k in range(ro[i], ro[i + 1]):
                    gj = int(cmap[ci[k]])
                    if block is sub.C:
                        if gi == gj:
                            continue  # twin diagonals re-summed below in twin order
                        # split couplings re-sum in subdomain order, matching
                        # the share order used by wire_tear
                        key = (gi, gj)
                        coupling[key] = coupling.get(key, 0.0) + float(v[k])
                        continue
                    rows.append(gi)
                    cols.append(gj)
                    vals.append(float(v[k]))
        b[inn] = sub.g
    for (gi, gj), x in coupling.items():
        rows.append(gi)
        cols.append(gj)
        vals.append(x)
    for v, copies in p.twin_map.items():
        total = 0.0
        btotal = 0.0
        present = False
        for part, loc in copies:
            sub = p.subdomains[part]
            entry = _entry(sub.C, loc, loc)
            if entry is not None:
                total = total + entry
                present = True
            btotal = btotal + float(sub.f[loc])
        if present:
            rows.append(v)
            cols.append(v)
            vals.append(total)
        b[v] = btotal
    A = CsrMatrix.from_coo(n, n, rows, cols, vals)
    return LinearSystem(A, b, symmetric=A.is_symmetric(), tag=p.system.tag)


# ---------------------------------------------------------------------------
# Interface selection
# ---------------------------------------------------------------------------

def select_interface(A: CsrMatrix, N: int, strategy: str = "bfs-grow",
                     dims=None) -> PartitionLabels:
    """Choose part labels and a vertex-separator interface.

    strategy "geometric" slices the grid (dims required, x-fastest node
    numbering) into axis-aligned boxes, preferring parallel cut planes
    over crossing ones and falling back to recursive coordinate
    bisection when no balanced parallel layout exists; "bfs-grow" grows
    balanced parts by breadth-first search from spread seeds, then
    smooths the ragged frontiers greedily. The edge separator between
    parts is converted to a vertex separator by moving, for each cut
    edge, the endpoint in the larger part into the interface (ties by
    lower node id). Interface nodes keep their original part label;
    couplings between interface nodes of different parts are split
    across the hosting subdomains by wire_tear.
    """
    n = A.nrows
    if N > n:
        raise ValueError(f"cannot split {n} nodes into {N} parts")
    if N < 1:
        raise ValueError("need at least one part")
    if N == 1:
        return PartitionLabels(np.zeros(n, dtype=np.int64), frozenset(), 1)

    pat_ro, pat_ci = _pattern_rows(A)
    if strategy == "geometric":
        if dims is None:
            raise ValueError("geometric strategy needs grid dims")
        if int(np.prod(dims)) != n:
            raise ValueError(f"dims {tuple(dims)} do not match n={n}")
        part_of = _rcb_labels(dims, N)
    elif strategy == "bfs-grow":
        part_of = _bfs_grow_labels(pat_ro, pat_ci, n, N)
    else:
        raise ValueError(f"unknown strategy '{strategy}'")

    interface = _vertex_separator(pat_ro, pat_ci, part_of, N)
    return PartitionLabels(part_of, frozenset(interface), N)


def _axis_bounds(extent: int, c: int) -> list:
    """Proportional integer cut positions of an axis into c runs."""
    b = [int(round(extent * i / c)) for i in range(c + 1)]
    for i in range(1, c + 1):
        if b[i] <= b[i - 1]:
            b[i] = b[i - 1] + 1
    return b


def _plan_splits(dims, N: int):
    """Per-axis split counts for an axis-aligned box layout, or None.

    Prefers cutting as few axes as possible: crossing separator planes
    slow the boundary exchange far more than parallel planes that are
    merely closer together. Among layouts with equally few cut axes the
    plan keeps cut planes as far apart as possible, then prefers
    splitting earlier axes. Layouts whose largest or smallest part
    leaves the 20% balance band are rejected; None means no planned
    layout is feasible and the caller should bisect recursively.
    """
    nd = len(dims)
    n = 1
    for d in dims:
        n *= d
    target = n / N

    def tuples(axis: int, left: int):
        if axis == nd - 1:
            if left <= dims[axis]:
                yield (left,)
            return
        for c in range(1, min(left, dims[axis]) + 1):
            if left % c == 0:
                for rest in tuples(axis + 1, left // c):
                    yield (c,) + rest

    best = None
    for cs in tuples(0, N):
        maxp = minp = 1
        for a in range(nd):
            b = _axis_bounds(dims[a], cs[a])
            th = [b[i + 1] - b[i] for i in range(cs[a])]
            maxp *= max(th)
            minp *= min(th)
        if maxp > 1.2 * target + 1e-9 or minp < 0.8 * target - 1e-9:
            continue
        multi = sum(1 for c in cs if c > 1)
        spacing = min((dims[a] / cs[a] for a in range(nd) if cs[a] > 1),
                      default=float("inf"))
        key = (multi, -spacing, tuple(-c for c in cs))
        if best is None or key < best[0]:
            best = (key, cs)
    return best[1] if best else None


def _rcb_labels(dims, N: int) -> np.ndarray:
    """Geometric labels: axis-aligned boxes with cuts kept parallel.

    A planned layout (see _plan_splits) slices each axis independently;
    when none is feasible the grid is bisected recursively along the
    longest axis instead.
    """
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    ids = np.arange(n)
    coords = np.empty((n, len(dims)), dtype=np.int64)
    rem = ids
    for axis, d in enumerate(dims):
        coords[:, axis] = rem % d
        rem = rem // d

    plan = _plan_splits(dims, N)
    if plan is not None:
        part_of = np.zeros(n, dtype=np.int64)
        stride = 1
        for axis, c in enumerate(plan):
            b = np.asarray(_axis_bounds(dims[axis], c)[1:-1], dtype=np.int64)
            runs = np.searchsorted(b, coords[:, axis], side="right")
            part_of += stride * runs
            stride *= c
        return part_of
    return _bisect_labels(dims, coords, n, N)


def _bisect_labels(dims, coords, n: int, N: int) -> np.ndarray:
    part_of = np.zeros(n, dtype=np.int64)
    next_label = [0]

    def split(sel: np.ndarray, boxes_left: int):
        if boxes_left == 1:
            part_of[sel] = next_label[0]
            next_label[0] += 1
            return
        left_boxes = (boxes_left + 1) // 2
        spans = [coords[sel, ax].max() - coords[sel, ax].min() for ax in range(len(dims))]
        axis = int(np.argmax(spans))
        c = coords[sel, axis]
        order = np.argsort(c, kind="stable")
        cut = int(round(len(sel) * left_boxes / boxes_left))
        cut = min(max(cut, 1), len(sel) - 1)
        # keep equal coordinates on one side so cuts follow grid planes
        while cut < len(sel) and c[order[cut]] == c[order[cut - 1]]:
            cut += 1
        if cut == len(sel):
            cut = int(round(len(sel) * left_boxes / boxes_left))
            while cut > 1 and c[order[cut - 1]] == c[order[cut - 2]]:
                cut -= 1
        split(sel[order[:cut]], left_boxes)
        split(sel[order[cut:]], boxes_left - left_boxes)

    split(np.arange(n), N)
    return part_of


def _bfs_grow_labels(pat_ro, pat_ci, n: int, N: int) -> np.ndarray:
    from collections import deque

    # spread seeds: node 0, then repeatedly the node farthest from all seeds
    dist = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    seeds = [0]

    def relax(src):
        dq = deque([src])
        dist[src] = 0
        while dq:
            u = dq.popleft()
            for w in pat_ci[pat_ro[u]:pat_ro[u + 1]]:
                if dist[w] > dist[u] + 1:
                    dist[w] = dist[u] + 1
                    dq.append(w)

    relax(0)
    while len(seeds) < N:
        unreached = dist == np.iinfo(np.int64).max
        cand = int(np.flatnonzero(unreached)[0]) if unreached.any() \
            else int(np.argmax(dist))
        seeds.append(cand)
        relax(cand)

    part_of = np.full(n, -1, dtype=np.int64)
    queues = [deque([s]) for s in seeds]
    sizes = [0] * N
    cap = int(np.ceil(n / N * _BALANCE_SLACK))
    claimed = 0
    for p, s in enumerate(seeds):
        part_of[s] = p
        sizes[p] += 1
        claimed += 1
    while claimed < n:
        progress = False
        for p in range(N):
            if sizes[p] >= cap:
                continue
            while queues[p]:
                u = queues[p].popleft()
                nxt = None
                for w in pat_ci[pat_ro[u]:pat_ro[u + 1]]:
                    if part_of[w] < 0:
                        nxt = int(w)
                        break
                if nxt is None:
                    continue
                queues[p].appendleft(u)  # u may have more unclaimed neighbors
                part_of[nxt] = p
                sizes[p] += 1
                claimed += 1
                queues[p].append(nxt)
                progress = True
                break
        if not progress:
            # disconnected remainder: seed the smallest part on the
            # lowest unclaimed node
            u = int(np.flatnonzero(part_of < 0)[0])
            p = int(np.argmin(sizes))
            part_of[u] = p
            sizes[p] += 1
            claimed += 1
            queues[p].append(u)
    return _refine_labels(pat_ro, pat_ci, part_of, N)


def _refine_labels(pat_ro, pat_ci, part_of, N: int, sweeps: int = 8) -> np.ndarray:
    """Greedy boundary smoothing of grown part labels.

    Nodes move to the neighboring part holding strictly more of their
    neighbors, while part sizes stay within the balance slack. This
    flattens the ragged frontiers breadth-first growth leaves behind,
    which shortens the separator and keeps the exchanged boundary data
    well conditioned. Deterministic: ascending node order, ascending
    part order, fixed sweep budget.
    """
    n = len(part_of)
    sizes = np.bincount(part_of, minlength=N).astype(np.int64)
    cap = int(np.ceil(n / N * _BALANCE_SLACK))
    floor_ = int(np.floor(n / N * (2.0 - _BALANCE_SLACK)))
    for _ in range(sweeps):
        moved = 0
        for v in range(n):
            p = int(part_of[v])
            cnt: dict = {}
            for w in pat_ci[pat_ro[v]:pat_ro[v + 1]]:
                w = int(w)
                if w != v:
                    q = int(part_of[w])
                    cnt[q] = cnt.get(q, 0) + 1
            best, best_n = p, cnt.get(p, 0)
            for q in sorted(cnt):
                if q != p and cnt[q] > best_n and sizes[q] < cap \
                        and sizes[p] - 1 >= floor_:
                    best, best_n = q, cnt[q]
            if best != p:
                sizes[p] -= 1
                sizes[best] += 1
                part_of[v] = best
                moved += 1
        if moved == 0:
            break
    return part_of


def _vertex_separator(pat_ro, pat_ci, part_of, N: int) -> set:
    sizes = np.bincount(part_of, minlength=N)
    interface: set = set()
    n = len(part_of)
    for u in range(n):
        for w in pat_ci[pat_ro[u]:pat_ro[u + 1]]:
            w = int(w)
            if w <= u:
                continue
            if part_of[u] == part_of[w]:
                continue
            if u in interface or w in interface:
                continue
            su, sw = sizes[part_of[u]], sizes[part_of[w]]
            if su > sw:
                interface.add(u)
            elif sw > su:
                interface.add(w)
            else:
                interface.add(min(u, w))
    return interface


# ---------------------------------------------------------------------------
# Partition text serialization
# ---------------------------------------------------------------------------

def partition_write(p: Partition, w_blocks: dict | None = None) -> dict:
    """Serialize a partition to text files.

    Returns {filename: content}: "partition.txt" with part/iface/
    weight/wire lines, plus one Matrix Market file per wire bundle when
    w_blocks maps (pa, pb) pairs to admittance blocks.
    """
    lines = []
    for node, part in enumerate(p.labels.part_of):
        lines.append(f"part {node} {int(part)}")
    for node in sorted(p.labels.interface):
        lines.append(f"iface {node}")
    for node in p.interface_nodes():
        for part, w in p.split_weights[node]:
            lines.append(f"weight {node} {part} {float(w)!r}")
    for w in p.wires:
        lines.append(f"wire {w.id} {w.end_a[0]} {w.end_a[1]} "
                     f"{w.end_b[0]} {w.end_b[1]} {w.tau}")
    files = {"partition.txt": "\n".join(lines) + "\n"}
    if w_blocks:
        for (pa, pb), block in sorted(w_blocks.items()):
            files[f"W_{pa}_{pb}.mtx"] = mm_write(CsrMatrix.from_dense(block))
    return files


def partition_read(text: str):
    """Parse partition.txt content.

    Returns (PartitionLabels, weights) suitable for re-running
    wire_tear; wire lines are validated for shape but the wire list
    itself is reproduced deterministically by wire_tear.
    """
    parts: dict = {}
    iface: set = set()
    weights: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "part" and len(tok) == 3:
                parts[int(tok[1])] = int(tok[2])
            elif tok[0] == "iface" and len(tok) == 2:
                iface.add(int(tok[1]))
            elif tok[0] == "weight" and len(tok) == 4:
                weights.setdefault(int(tok[1]), {})[int(tok[2])] = float(tok[3])
            elif tok[0] == "wire" and len(tok) == 7:
                [int(x) for x in tok[1:]]
            else:
                raise ValueError("unrecognized record")
        except ValueError as exc:
            raise ValueError(f"partition line {ln}: {exc}") from None
    if not parts:
        raise ValueError("partition file has no part records")
    n = max(parts) + 1
    if sorted(parts) != list(range(n)):
        raise ValueError("part records must cover nodes 0..n-1")
    part_of = np.array([parts[i] for i in range(n)], dtype=np.int64)
    n_parts = int(part_of.max()) + 1
    labels = PartitionLabels(part_of, frozenset(iface), n_parts)
    return labels, (weights if weights else "equal")
