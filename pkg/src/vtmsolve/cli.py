"""Command-line harness: generate, tear, solve, analyze, benchmark.

Node ids on the command line (e.g. --wire-w) use Matrix Market's
1-based row numbering; netlist files keep their own 0-based ids as
documented in the netlist format. Exit codes: 0 success/converged,
2 usage or input error, 3 diverged, 4 iteration budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .baselines import BaselineSpec, stationary_solve
from .engine import PreconditionerSpec, vtm_solve
from .netgen import LinearSystem, grid2d, grid3d, opamp_ring, parse_netlist, assemble
from .reports import SolveStatus
from .sparse import (CsrMatrix, SparseFormatError, mm_read, mm_read_vector,
                     mm_write, mm_write_vector)
from .tearing import (PartitionLabels, _pattern_rows, partition_write,
                      select_interface, wire_tear)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_MAXITER = 4

logger = logging.getLogger("vtmsolve")

_STATUS_EXIT = {
    SolveStatus.CONVERGED: EXIT_OK,
    SolveStatus.DIVERGED: EXIT_DIVERGED,
    SolveStatus.MAX_ITERATIONS: EXIT_MAXITER,
}

CSV_HEADER = ["matrix", "method", "precond", "parts", "iterations",
              "converged", "residual", "cf", "seconds"]

_BENCH_DEFAULT_METHODS = ("vtm_diag", "vtm_ob", "vtm_wob", "vtm_sca",
                          "bj", "obj", "jacobi", "gs", "sor", "ssor")


class UsageError(Exception):
    """Bad flags or unreadable inputs; maps to exit code 2."""


def _setup_logging() -> None:
    levels = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    raw = os.environ.get("VTM_LOG", "error").strip().lower()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(levels.get(raw, logging.ERROR))
    if raw not in levels and raw:
        logger.error("unknown VTM_LOG level '%s', using error", raw)


def _read_system(matrix_path: str, rhs_path: str) -> LinearSystem:
    try:
        A = mm_read(Path(matrix_path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read matrix file: {exc}") from exc
    except SparseFormatError as exc:
        raise UsageError(f"bad matrix file {matrix_path}: {exc}") from exc
    try:
        b = mm_read_vector(Path(rhs_path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read rhs file: {exc}") from exc
    except SparseFormatError as exc:
        raise UsageError(f"bad rhs file {rhs_path}: {exc}") from exc
    if len(b) != A.nrows:
        raise UsageError(f"rhs length {len(b)} does not match matrix "
                         f"size {A.nrows}")
    tag = Path(matrix_path).stem
    return LinearSystem(A, b, symmetric=A.is_symmetric(), tag=tag)


def _parse_wire_w(entries) -> dict:
    """--wire-w NODE=VALUE pairs (1-based node ids) to a 0-based dict."""
    out: dict = {}
    for raw in entries or []:
        try:
            node_s, value_s = raw.split("=", 1)
            node = int(node_s)
            value = float(value_s)
        except ValueError:
            raise UsageError(f"bad --wire-w entry '{raw}', "
                             f"expected NODE=VALUE") from None
        if node < 1:
            raise UsageError(f"--wire-w node ids are 1-based, got {node}")
        if not value > 0:
            raise UsageError(f"--wire-w admittance must be positive, got {value}")
        out[node - 1] = value
    return out


def _forced_labels(A: CsrMatrix, forced_nodes, n_parts: int) -> PartitionLabels:
    """Partition whose interface is exactly the user-named nodes.

    The remaining graph must fall apart into at least n_parts connected
    components; components are dealt to parts largest-first to balance
    sizes. Named nodes take the part of their lowest-id neighbor.
    """
    n = A.nrows
    iface = sorted(set(int(v) for v in forced_nodes))
    for v in iface:
        if not 0 <= v < n:
            raise UsageError(f"wire node {v + 1} is out of range for n={n}")
    iface_set = set(iface)
    pat_ro, pat_ci = _pattern_rows(A)
    comp_of = np.full(n, -1, dtype=np.int64)
    comps = []
    for start in range(n):
        if start in iface_set or comp_of[start] >= 0:
            continue
        comp = [start]
        comp_of[start] = len(comps)
        dq = deque([start])
        while dq:
            u = dq.popleft()
            for w in pat_ci[pat_ro[u]:pat_ro[u + 1]]:
                w = int(w)
                if w in iface_set or comp_of[w] >= 0:
                    continue
                comp_of[w] = len(comps)
                comp.append(w)
                dq.append(w)
        comps.append(comp)
    if len(comps) < n_parts:
        raise UsageError(
            f"the named wire nodes split the graph into {len(comps)} "
            f"component(s), fewer than --parts {n_parts}")
    part_of = np.zeros(n, dtype=np.int64)
    sizes = [0] * n_parts
    order = sorted(range(len(comps)), key=lambda c: (-len(comps[c]), comps[c][0]))
    for c in order:
        p = int(np.argmin(sizes))
        for v in comps[c]:
            part_of[v] = p
        sizes[p] += len(comps[c])
    for v in iface:
        neigh = [int(w) for w in pat_ci[pat_ro[v]:pat_ro[v + 1]]
                 if int(w) != v and int(w) not in iface_set]
        part_of[v] = part_of[min(neigh)] if neigh else 0
    return PartitionLabels(part_of, frozenset(iface), n_parts)


def _labels_for(A: CsrMatrix, parts: int, strategy: str, dims,
                wire_w: dict) -> PartitionLabels:
    if wire_w:
        return _forced_labels(A, wire_w.keys(), parts)
    try:
        return select_interface(A, parts, strategy=strategy, dims=dims)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_dims(raw) -> tuple | None:
    if not raw:
        return None
    try:
        dims = tuple(int(t) for t in str(raw).split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad --dims '{raw}', expected e.g. 100,100") from None
    if not dims:
        raise UsageError("empty --dims")
    return dims


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    out_dir = Path(args.out)
    try:
        if args.kind == "grid2d":
            sys_ = grid2d(args.nx, args.ny, branch_g=args.branch,
                          ground_g=args.ground, rhs_seed=args.seed)
        elif args.kind == "grid3d":
            sys_ = grid3d(args.nx, args.ny, args.nz, branch_g=args.branch,
                          ground_g=args.ground, rhs_seed=args.seed)
        elif args.kind == "opamp":
            sys_ = opamp_ring()
        else:  # netlist
            if not args.file:
                raise UsageError("--kind netlist needs --file")
            try:
                text = Path(args.file).read_text()
            except OSError as exc:
                raise UsageError(f"cannot read netlist: {exc}") from exc
            sys_ = assemble(parse_netlist(text))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "A.mtx").write_text(mm_write(sys_.A))
    (out_dir / "b.mtx").write_text(mm_write_vector(sys_.b))
    meta = [f"kind {args.kind}", f"tag {sys_.tag}", f"n {sys_.n}",
            f"nnz {sys_.A.nnz}", f"seed {args.seed}"]
    if args.kind in ("grid2d", "grid3d"):
        meta += [f"branch {args.branch!r}", f"ground {args.ground!r}"]
    (out_dir / "meta.txt").write_text("\n".join(meta) + "\n")
    logger.info("wrote %s (%d nodes, %d entries)", out_dir / "A.mtx",
                sys_.n, sys_.A.nnz)
    print(f"wrote {out_dir / 'A.mtx'} and {out_dir / 'b.mtx'} "
          f"(n={sys_.n}, nnz={sys_.A.nnz})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _run_method(sys_: LinearSystem, method: str, precond: str, args,
                wire_w: dict, dims):
    """Shared solve path for cmd_solve and cmd_bench. Returns (x, report)."""
    if method.startswith("vtm"):
        labels = _labels_for(sys_.A, args.parts, args.strategy, dims, wire_w)
        partition = wire_tear(sys_, labels)
        spec = PreconditionerSpec(kind=precond, alpha=args.alpha,
                                  depth=args.depth, drop=args.drop,
                                  wire_w=wire_w or None)
        return vtm_solve(partition, spec, tol=args.tol, max_iter=args.max_iter,
                         scheduler=args.scheduler), partition
    if method in ("bj", "obj"):
        labels = _labels_for(sys_.A, args.parts, args.strategy, dims, {})
        spec = BaselineSpec(method, omega=args.omega, labels=labels,
                            overlap=args.overlap)
    else:
        spec = BaselineSpec(method, omega=args.omega)
    return stationary_solve(sys_, spec, tol=args.tol, max_iter=args.max_iter), None


def cmd_solve(args) -> int:
    sys_ = _read_system(args.matrix, args.rhs)
    wire_w = _parse_wire_w(args.wire_w)
    dims = _parse_dims(args.dims)
    try:
        (x, report), partition = _run_method(sys_, args.method, args.precond,
                                             args, wire_w, dims)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise UsageError(str(exc)) from exc
    doc = report.to_dict()
    doc["matrix"] = sys_.tag
    doc["parts"] = args.parts if args.method in ("vtm", "bj", "obj") else 1
    text = json.dumps(doc, indent=2)
    if args.out_report:
        Path(args.out_report).write_text(text + "\n")
    else:
        print(text)
    if args.out_solution:
        Path(args.out_solution).write_text(mm_write_vector(x))
    if args.out_partition and partition is not None:
        out_dir = Path(args.out_partition)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, content in partition_write(partition).items():
            (out_dir / name).write_text(content)
    logger.info("%s finished: %s after %d iterations (residual %.3e)",
                args.method, report.status.value, report.iterations,
                report.residual)
    return _STATUS_EXIT[report.status]


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    sys_ = _read_system(args.matrix, args.rhs)
    wire_w = _parse_wire_w(args.wire_w)
    dims = _parse_dims(args.dims)
    if args.parts != 2:
        raise UsageError("analyze covers 2-part partitions")
    labels = _labels_for(sys_.A, 2, args.strategy, dims, wire_w)
    partition = wire_tear(sys_, labels)
    spec = PreconditionerSpec(kind=args.precond, alpha=args.alpha,
                              depth=args.depth, drop=args.drop,
                              wire_w=wire_w or None)
    try:
        S1, _r1, S2, _r2 = analysis._two_part_schur(partition)
        t = S1.shape[0]
        W1, W2 = analysis._normalize_w(partition, spec, t)
        T1 = analysis.reflection_matrix(W1, S1)
        T2 = analysis.reflection_matrix(W2, S2)
        cf = analysis.convergence_factor(partition, spec)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise UsageError(str(exc)) from exc
    x, report = vtm_solve(partition, spec, tol=args.tol,
                          max_iter=args.max_iter, scheduler=args.scheduler)
    observed = report.cf_estimate
    doc = {
        "matrix": sys_.tag,
        "s1_spd": analysis._spd_flag(S1),
        "s2_spd": analysis._spd_flag(S2),
        "w_spd": analysis._spd_flag(W1) and analysis._spd_flag(W2),
        "rho_t1": float(np.max(np.abs(np.linalg.eigvals(T1)))) if t else 0.0,
        "rho_t2": float(np.max(np.abs(np.linalg.eigvals(T2)))) if t else 0.0,
        "rho_t1t2": cf * cf,
        "cf": cf,
        "predicted_two_tick_ratio": cf * cf,
        "observed_two_tick_ratio": observed,
        "iterations": report.iterations,
        "converged": report.converged,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def _bench_systems(args) -> list:
    systems = []
    if args.matrix:
        if not args.rhs:
            raise UsageError("--matrix needs --rhs")
        systems.append((_read_system(args.matrix, args.rhs), None))
    if args.kind == "grid2d":
        systems.append((grid2d(args.nx, args.ny, branch_g=args.branch,
                               ground_g=args.ground, rhs_seed=args.seed),
                        (args.nx, args.ny)))
    elif args.kind == "grid3d":
        systems.append((grid3d(args.nx, args.ny, args.nz, branch_g=args.branch,
                               ground_g=args.ground, rhs_seed=args.seed),
                        (args.nx, args.ny, args.nz)))
    elif args.kind == "opamp":
        systems.append((opamp_ring(), None))
    elif args.kind != "none":
        raise UsageError(f"unknown --kind '{args.kind}'")
    if not systems:
        raise UsageError("no matrices to benchmark")
    return systems


def _bench_one(sys_, dims, method_token: str, parts: int, args):
    method, _, precond = method_token.partition("_")
    if method == "vtm":
        precond = precond or "scalar"
    tick = time.perf_counter()
    try:
        ns = argparse.Namespace(**{**vars(args), "parts": parts})
        (x, report), _partition = _run_method(sys_, method, precond, ns, {},
                                              dims)
        seconds = time.perf_counter() - tick
        return {
            "matrix": sys_.tag,
            "method": method_token,
            "precond": precond if method == "vtm" else "-",
            "parts": parts if method in ("vtm", "bj", "obj") else 1,
            "iterations": report.iterations,
            "converged": "true" if report.converged else "false",
            "residual": repr(float(report.residual)),
            "cf": repr(float(report.cf_estimate)),
            "seconds": f"{seconds:.3f}",
        }
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.error("bench %s on %s failed: %s", method_token, sys_.tag, exc)
        return None


def cmd_bench(args) -> int:
    systems = _bench_systems(args)
    try:
        parts_list = [int(t) for t in str(args.parts).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad --parts '{args.parts}'") from None
    if not parts_list:
        raise UsageError("empty --parts list")
    tokens = [t.strip() for t in args.methods.split(",") if t.strip()]
    if not tokens:
        raise UsageError("empty --methods list")
    configs = [(sys_, dims, token, parts)
               for sys_, dims in systems
               for parts in parts_list
               for token in tokens]
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(
                lambda cfg: _bench_one(cfg[0], cfg[1], cfg[2], cfg[3], args),
                configs))
    else:
        rows = [_bench_one(s, d, t, p, args) for s, d, t, p in configs]
    rows = [r for r in rows if r is not None]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK if rows else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common_solver_flags(p) -> None:
    p.add_argument("--parts", type=int, default=2,
                   help="number of subdomains (default 2)")
    p.add_argument("--precond", default="scalar",
                   choices=["scalar", "diag", "ob", "wob", "sca"],
                   help="wire admittance recipe for vtm (default scalar)")
    p.add_argument("--alpha", type=float, default=1.0,
                   help="scale for scalar/wob preconditioners")
    p.add_argument("--depth", type=float, default=2,
                   help="BFS truncation depth for sca (default 2)")
    p.add_argument("--drop", type=float, default=0.0,
                   help="drop tolerance for sca (default 0)")
    p.add_argument("--omega", type=float, default=1.5,
                   help="relaxation factor for sor/ssor (default 1.5)")
    p.add_argument("--overlap", type=int, default=1,
                   help="overlap depth for obj (default 1)")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="relative residual tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=500, dest="max_iter",
                   help="iteration budget (default 500)")
    p.add_argument("--scheduler", default="sequential",
                   choices=["sequential", "parallel"],
                   help="vtm tick execution mode")
    p.add_argument("--strategy", default="bfs-grow",
                   choices=["bfs-grow", "geometric"],
                   help="partitioning strategy (geometric needs --dims)")
    p.add_argument("--dims", default=None,
                   help="grid dims for geometric partitioning, e.g. 100,100")
    p.add_argument("--wire-w", action="append", dest="wire_w",
                   metavar="NODE=VALUE",
                   help="manual wire admittance at a node (1-based id); "
                        "named nodes become the interface")


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="vtmsolve",
                   description="Virtual transmission solver toolkit")
    sub = root.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a test system")
    g.add_argument("--kind", required=True,
                   choices=["grid2d", "grid3d", "opamp", "netlist"])
    g.add_argument("--nx", type=int, default=10)
    g.add_argument("--ny", type=int, default=10)
    g.add_argument("--nz", type=int, default=10)
    g.add_argument("--branch", type=float, default=1.0)
    g.add_argument("--ground", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--file", default=None, help="netlist input file")
    g.add_argument("--out", default=".", help="output directory")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve a system with one method")
    s.add_argument("--matrix", required=True)
    s.add_argument("--rhs", required=True)
    s.add_argument("--method", required=True,
                   choices=["vtm", "jacobi", "gs", "sgs", "sor", "ssor",
                            "bj", "obj"])
    _add_common_solver_flags(s)
    s.add_argument("--out-report", default=None, dest="out_report",
                   help="write the JSON report here instead of stdout")
    s.add_argument("--out-solution", default=None, dest="out_solution",
                   help="write the solution vector (Matrix Market)")
    s.add_argument("--out-partition", default=None, dest="out_partition",
                   help="write the partition text files to this directory")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("analyze", help="convergence theory report")
    a.add_argument("--matrix", required=True)
    a.add_argument("--rhs", required=True)
    _add_common_solver_flags(a)
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="method sweep with CSV output")
    b.add_argument("--kind", default="grid2d",
                   choices=["grid2d", "grid3d", "opamp", "none"])
    b.add_argument("--nx", type=int, default=30)
    b.add_argument("--ny", type=int, default=30)
    b.add_argument("--nz", type=int, default=10)
    b.add_argument("--branch", type=float, default=1.0)
    b.add_argument("--ground", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--matrix", default=None, help="extra matrix file")
    b.add_argument("--rhs", default=None)
    b.add_argument("--methods", default=",".join(_BENCH_DEFAULT_METHODS))
    b.add_argument("--parts", default="2")
    b.add_argument("--alpha", type=float, default=1.0)
    b.add_argument("--depth", type=float, default=2)
    b.add_argument("--drop", type=float, default=0.0)
    b.add_argument("--omega", type=float, default=1.5)
    b.add_argument("--overlap", type=int, default=1)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    b.add_argument("--scheduler", default="sequential",
                   choices=["sequential", "parallel"])
    b.add_argument("--strategy", default=None,
                   help="partitioning strategy override")
    b.add_argument("--jobs", type=int, default=1,
                   help="run configurations concurrently")
    b.add_argument("--out", default=None, help="CSV output path")
    b.set_defaults(func=cmd_bench)
    return root


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "bench":
            # generated grids default to geometric cuts, files to bfs-grow
            if args.strategy is None:
                args.strategy = "geometric" if args.kind in ("grid2d", "grid3d") \
                    else "bfs-grow"
            args.dims = None
            args.wire_w = None
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SparseFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
