"""Test-system construction.

Builds circuit-derived linear systems by nodal analysis: arbitrary
netlists of resistor branches, ground resistors, current injections and
voltage-controlled current sources, structured 2-D/3-D resistor grids
with a ground at every node, and the four-node op-amp ring benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparse import CsrMatrix, mm_write, mm_write_vector, require_finite

_DEFAULT_BRANCH_G = 1.0
_DEFAULT_GROUND_G = 0.1


@dataclass(frozen=True)
class Netlist:
    """Current-driven circuit description.

    Attributes:
        node_count: number of nodes (0-based node ids).
        branches: (node_a, node_b, conductance) resistor branches,
            conductance strictly positive, no self loops.
        grounds: (node, conductance) resistors to ground, positive.
        injections: (node, current) independent current sources.
        vccs: (out_node, ctrl_node, transconductance) controlled
            sources; each stamps its transconductance at the single
            matrix position (out_node, ctrl_node).
    """

    node_count: int
    branches: tuple = ()
    grounds: tuple = ()
    injections: tuple = ()
    vccs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(tuple(b) for b in self.branches))
        object.__setattr__(self, "grounds", tuple(tuple(g) for g in self.grounds))
        object.__setattr__(self, "injections", tuple(tuple(i) for i in self.injections))
        object.__setattr__(self, "vccs", tuple(tuple(v) for v in self.vccs))
        n = self.node_count
        if n < 1:
            raise ValueError("netlist needs at least one node")
        for a, b, g in self.branches:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"branch ({a},{b}) out of range")
            if a == b:
                raise ValueError(f"self-loop branch at node {a}")
            if not g > 0:
                raise ValueError(f"branch ({a},{b}) conductance must be positive")
        for node, g in self.grounds:
            if not 0 <= node < n:
                raise ValueError(f"ground at node {node} out of range")
            if not g > 0:
                raise ValueError(f"ground at node {node} must be positive")
        for node, _cur in self.injections:
            if not 0 <= node < n:
                raise ValueError(f"injection at node {node} out of range")
        for out, ctrl, _gm in self.vccs:
            if not (0 <= out < n and 0 <= ctrl < n):
                raise ValueError(f"vccs ({out},{ctrl}) out of range")


@dataclass(frozen=True)
class LinearSystem:
    """A x = b with provenance metadata."""

    A: CsrMatrix
    b: np.ndarray
    symmetric: bool
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "b", require_finite(self.b, "b"))
        if self.A.nrows != self.A.ncols:
            raise ValueError("system matrix must be square")
        if self.b.shape != (self.A.nrows,):
            raise ValueError("rhs length must match matrix dimension")

    @property
    def n(self) -> int:
        return self.A.nrows


def assemble(net: Netlist) -> LinearSystem:
    """Nodal-analysis assembly of a netlist.

    Diagonal entries collect incident branch conductances plus the
    ground conductance; off-diagonals get minus the branch conductance;
    VCCS elements add their transconductance at (out, ctrl); b collects
    the injected currents.
    """
    rows, cols, vals = [], [], []
    for a, b, g in net.branches:
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [g, g, -g, -g]
    for node, g in net.grounds:
        rows.append(node)
        cols.append(node)
        vals.append(g)
    for out, ctrl, gm in net.vccs:
        rows.append(out)
        cols.append(ctrl)
        vals.append(gm)
    A = CsrMatrix.from_coo(net.node_count, net.node_count, rows, cols, vals)
    b = np.zeros(net.node_count)
    for node, cur in net.injections:
        b[node] += cur
    return LinearSystem(A, b, symmetric=A.is_symmetric(), tag="netlist")


def splitmix64_stream(seed: int, count: int) -> np.ndarray:
    """Deterministic uniform [0,1) samples via the splitmix64 generator."""
    mask = (1 << 64) - 1
    x = seed & mask
    out = np.empty(count)
    for i in range(count):
        x = (x + 0x9E3779B97F4A7C15) & mask
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        z = z ^ (z >> 31)
        out[i] = (z >> 11) * (1.0 / (1 << 53))
    return out


def grid_index2d(nx: int, ix: int, iy: int) -> int:
    """Node id convention for 2-D grids: x varies fastest."""
    return iy * nx + ix


def grid_index3d(nx: int, ny: int, ix: int, iy: int, iz: int) -> int:
    """Node id convention for 3-D grids: x fastest, then y, then z."""
    return (iz * ny + iy) * nx + ix


def grid2d(nx: int, ny: int, branch_g: float = _DEFAULT_BRANCH_G,
           ground_g: float = _DEFAULT_GROUND_G, rhs_seed: int = 42) -> LinearSystem:
    """4-neighbor resistor grid with a ground resistor at every node.

    The ground at every node makes the matrix strictly diagonally
    dominant and hence SPD. The right-hand side is drawn from the
    seeded splitmix64 stream, so identical arguments give bit-identical
    systems.
    """
    if nx < 2 or ny < 2:
        raise ValueError("grid2d needs nx, ny >= 2")
    if not (branch_g > 0 and ground_g > 0):
        raise ValueError("conductances must be positive")
    n = nx * ny
    ids = np.arange(n, dtype=np.int64)
    ix = ids % nx
    iy = ids // nx
    ea = np.concatenate([ids[ix < nx - 1], ids[iy < ny - 1]])
    eb = np.concatenate([ids[ix < nx - 1] + 1, ids[iy < ny - 1] + nx])
    rows = np.concatenate([ea, eb, ea, eb, ids])
    cols = np.concatenate([ea, eb, eb, ea, ids])
    g = float(branch_g)
    vals = np.concatenate([np.full(len(ea), g), np.full(len(ea), g),
                           np.full(len(ea), -g), np.full(len(ea), -g),
                           np.full(n, float(ground_g))])
    A = CsrMatrix.from_coo(n, n, rows, cols, vals)
    b = splitmix64_stream(rhs_seed, n)
    return LinearSystem(A, b, symmetric=True,
                        tag=f"grid2d-{nx}x{ny}-seed{rhs_seed}")


def grid3d(nx: int, ny: int, nz: int, branch_g: float = _DEFAULT_BRANCH_G,
           ground_g: float = _DEFAULT_GROUND_G, rhs_seed: int = 42) -> LinearSystem:
    """6-neighbor resistor grid, otherwise as grid2d."""
    if nx < 2 or ny < 2 or nz < 2:
        raise ValueError("grid3d needs nx, ny, nz >= 2")
    if not (branch_g > 0 and ground_g > 0):
        raise ValueError("conductances must be positive")
    n = nx * ny * nz
    ids = np.arange(n, dtype=np.int64)
    ix = ids % nx
    iy = (ids // nx) % ny
    iz = ids // (nx * ny)
    ea = np.concatenate([ids[ix < nx - 1], ids[iy < ny - 1], ids[iz < nz - 1]])
    eb = np.concatenate([ids[ix < nx - 1] + 1, ids[iy < ny - 1] + nx,
                         ids[iz < nz - 1] + nx * ny])
    rows = np.concatenate([ea, eb, ea, eb, ids])
    cols = np.concatenate([ea, eb, eb, ea, ids])
    g = float(branch_g)
    vals = np.concatenate([np.full(len(ea), g), np.full(len(ea), g),
                           np.full(len(ea), -g), np.full(len(ea), -g),
                           np.full(n, float(ground_g))])
    A = CsrMatrix.from_coo(n, n, rows, cols, vals)
    b = splitmix64_stream(rhs_seed, n)
    return LinearSystem(A, b, symmetric=True,
                        tag=f"grid3d-{nx}x{ny}x{nz}-seed{rhs_seed}")


_OPAMP_G = (1.0, 1.0, 1.0, 1.0)
_OPAMP_COUPLINGS = (10.0, 10.0, 10.0, -10.0)  # (g13, g34, g42, g21)
_OPAMP_I = (1.0, 1.0, 1.0, 1.0)


def opamp_ring(g=_OPAMP_G, couplings=_OPAMP_COUPLINGS, I=_OPAMP_I) -> LinearSystem:
    """Four-node amplifier ring with feedback.

    Node conductances g1..g4 sit on the diagonal; the couplings
    (g13, g34, g42, g21) are VCCS gains forming a feedback loop, placed
    at rows 3, 4, 2, 1 respectively (1-based). Default gains give a
    loop gain of -1e4, which defeats the classical point iterations.
    """
    g = tuple(float(x) for x in g)
    g13, g34, g42, g21 = (float(x) for x in couplings)
    I = tuple(float(x) for x in I)
    if len(g) != 4 or len(I) != 4:
        raise ValueError("opamp_ring expects 4 node conductances and 4 currents")
    if any(x == 0 for x in g):
        raise ValueError("node conductances must be nonzero")
    rows = [0, 1, 2, 3, 0, 1, 2, 3]
    cols = [0, 1, 2, 3, 1, 3, 0, 2]
    vals = [g[0], g[1], g[2], g[3], g21, g42, g13, g34]
    keep = [k for k, v in enumerate(vals) if v != 0 or k < 4]
    A = CsrMatrix.from_coo(4, 4, [rows[k] for k in keep], [cols[k] for k in keep],
                           [vals[k] for k in keep])
    return LinearSystem(A, np.array(I), symmetric=A.is_symmetric(), tag="opamp")


def loop_gain(g=_OPAMP_G, couplings=_OPAMP_COUPLINGS) -> float:
    """Feedback loop gain of the amplifier ring."""
    g = tuple(float(x) for x in g)
    if any(x == 0 for x in g):
        raise ValueError("node conductances must be nonzero")
    g13, g34, g42, g21 = (float(x) for x in couplings)
    return (g13 * g34 * g42 * g21) / (g[0] * g[1] * g[2] * g[3])


# ---------------------------------------------------------------------------
# Netlist text format
# ---------------------------------------------------------------------------

def parse_netlist(text: str) -> Netlist:
    """Parse the line-oriented netlist format.

    Lines: `R a b g` branch, `G a g` ground, `I a val` injection,
    `VCCS out ctrl gm` controlled source, `#` comments; 0-based nodes.
    """
    branches, grounds, injections, vccs = [], [], [], []
    max_node = -1
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].upper()
        try:
            if kind == "R" and len(parts) == 4:
                a, b, g = int(parts[1]), int(parts[2]), float(parts[3])
                branches.append((a, b, g))
                max_node = max(max_node, a, b)
            elif kind == "G" and len(parts) == 3:
                a, g = int(parts[1]), float(parts[2])
                grounds.append((a, g))
                max_node = max(max_node, a)
            elif kind == "I" and len(parts) == 3:
                a, val = int(parts[1]), float(parts[2])
                injections.append((a, val))
                max_node = max(max_node, a)
            elif kind == "VCCS" and len(parts) == 4:
                out, ctrl, gm = int(parts[1]), int(parts[2]), float(parts[3])
                vccs.append((out, ctrl, gm))
                max_node = max(max_node, out, ctrl)
            else:
                raise ValueError("unrecognized element")
        except ValueError as exc:
            raise ValueError(f"netlist line {ln}: {exc}") from None
    if max_node < 0:
        raise ValueError("netlist has no elements")
    return Netlist(max_node + 1, tuple(branches), tuple(grounds),
                   tuple(injections), tuple(vccs))


def write_netlist(net: Netlist) -> str:
    out = [f"# netlist with {net.node_count} nodes"]
    out += [f"R {a} {b} {float(g)!r}" for a, b, g in net.branches]
    out += [f"G {a} {float(g)!r}" for a, g in net.grounds]
    out += [f"I {a} {float(v)!r}" for a, v in net.injections]
    out += [f"VCCS {o} {c} {float(gm)!r}" for o, c, gm in net.vccs]
    return "\n".join(out) + "\n"


def system_files(sys: LinearSystem) -> dict[str, str]:
    """Matrix Market file contents for a system (A and b)."""
    return {"A.mtx": mm_write(sys.A), "b.mtx": mm_write_vector(sys.b)}
