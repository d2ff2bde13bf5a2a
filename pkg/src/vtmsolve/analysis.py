"""Executable convergence theory for the transmission-exchange solver.

Schur complements reduce each subdomain to its boundary response; the
reflection matrix (W - S)(W + S)^-1 measures how much of an incident
boundary wave a subdomain bounces back when the wires carry admittance
W; the convergence factor is the square root of the spectral radius of
the two-sided reflection product. All routines work on dense
restrictions to the interface and are intended for interfaces up to
roughly a thousand nodes.
"""

from __future__ import annotations

import numpy as np

from .engine import PreconditionerSpec, build_preconditioner, vtm_solve
from .netgen import LinearSystem
from .sparse import SingularMatrix, factor, matrix_sqrt
from .tearing import Partition, Subdomain


class SingularInner(np.linalg.LinAlgError):
    """A subdomain's inner block cannot be eliminated."""


class SingularSum(np.linalg.LinAlgError):
    """W + S is singular, so the reflection matrix is undefined."""


class SingularSchurSum(np.linalg.LinAlgError):
    """S_1 + S_2 is singular, so the interface fixed point is undefined."""


def schur_complement(sub: Subdomain):
    """Boundary-reduced operator and RHS of one subdomain.

    Eliminates the inner unknowns through a factorization of D (never
    an explicit inverse): S = C - E D^-1 F over the twin nodes, and
    r = f - E D^-1 g.

    Returns:
        (S, r) with S dense (t x t) and r a length-t vector.

    Raises:
        SingularInner: D cannot be factored.
    """
    C = sub.C.to_dense()
    f = sub.f.copy()
    if sub.m == 0:
        return C, f
    hint = "spd" if sub.D.is_symmetric() else "general"
    try:
        fac = factor(sub.D, hint=hint)
        X = np.column_stack([fac.solve(col) for col in sub.F.to_dense().T])
        w = fac.solve(sub.g)
    except SingularMatrix as exc:
        raise SingularInner(
            f"inner block of subdomain {sub.index} is singular: {exc}") from exc
    E = sub.E.to_dense()
    return C - E @ X, f - E @ w


def _embedded_schur(partition: Partition):
    """Sum of per-subdomain Schur data aligned on the sorted interface."""
    iface = partition.interface_nodes()
    pos = {v: i for i, v in enumerate(iface)}
    t = len(iface)
    S = np.zeros((t, t))
    r = np.zeros(t)
    for sub in partition.subdomains:
        if sub.t == 0:
            continue
        Sp, rp = schur_complement(sub)
        idx = np.array([pos[int(v)] for v in sub.twin_nodes], dtype=np.int64)
        S[np.ix_(idx, idx)] += Sp
        r[idx] += rp
    return S, r, iface


def reflection_matrix(W, S) -> np.ndarray:
    """Boundary reflection T = (W - S)(W + S)^-1.

    Scalars are treated as 1x1 matrices. For SPD W and S every
    eigenvalue of T has magnitude below one.

    Raises:
        SingularSum: W + S is singular.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if W.shape != S.shape or W.shape[0] != W.shape[1]:
        raise ValueError("W and S must be square matrices of equal size")
    try:
        return np.linalg.solve((W + S).T, (W - S).T).T
    except np.linalg.LinAlgError as exc:
        raise SingularSum(f"W + S is singular: {exc}") from exc


def _two_part_schur(partition: Partition):
    if partition.N != 2:
        raise ValueError("convergence theory covers 2-part partitions")
    iface = partition.interface_nodes()
    for sub in partition.subdomains:
        if sorted(int(v) for v in sub.twin_nodes) != iface:
            raise ValueError("every interface node must be shared by both parts")
    S1, r1 = schur_complement(partition.subdomains[0])
    S2, r2 = schur_complement(partition.subdomains[1])
    return S1, r1, S2, r2


def _normalize_w(partition: Partition, W, t: int):
    """Per-endpoint admittance blocks (W_into_sub0, W_into_sub1) from
    a scalar, vector, matrix, (W1, W2) pair, node->value dict, or
    PreconditionerSpec."""
    if isinstance(W, PreconditionerSpec):
        bundles = build_preconditioner(W, partition)
        bd = bundles[(0, 1)]
        if len(bd.nodes) != t:
            raise ValueError("wire bundle does not span the interface")
        return bd.W_a, bd.W_b
    if isinstance(W, dict):
        iface = partition.interface_nodes()
        d = np.ones(t)
        for node, val in W.items():
            d[iface.index(int(node))] = float(val)
        M = np.diag(d)
        return M, M
    if isinstance(W, (tuple, list)) and len(W) == 2:
        W1 = np.atleast_2d(np.asarray(W[0], dtype=float))
        W2 = np.atleast_2d(np.asarray(W[1], dtype=float))
        if W1.shape == (1, 1) and t > 1:
            W1 = float(W1[0, 0]) * np.eye(t)
        if W2.shape == (1, 1) and t > 1:
            W2 = float(W2[0, 0]) * np.eye(t)
        return W1, W2
    if np.isscalar(W):
        M = float(W) * np.eye(t)
        return M, M
    M = np.asarray(W, dtype=float)
    if M.ndim == 1:
        M = np.diag(M)
    return M, M


def convergence_factor(partition: Partition, W) -> float:
    """Asymptotic contraction per exchange round trip, sqrt(rho(T1 T2)).

    W may be a scalar, a dense matrix over the sorted interface, a
    (W1, W2) per-endpoint pair, a node->value dict of manual wire
    admittances, or a PreconditionerSpec. With one shared W this is the
    spectral radius of the reflection product T1 T2; with per-endpoint
    blocks it generalizes to the delayed-exchange round-trip operator
    (W1 + S1)^-1 (W1 - S2)(W2 + S2)^-1 (W2 - S1).
    """
    S1, _r1, S2, _r2 = _two_part_schur(partition)
    t = S1.shape[0]
    W1, W2 = _normalize_w(partition, W, t)
    try:
        M = np.linalg.solve(W1 + S1, W1 - S2) @ np.linalg.solve(W2 + S2, W2 - S1)
    except np.linalg.LinAlgError as exc:
        raise SingularSum(f"W + S is singular: {exc}") from exc
    rho = float(np.max(np.abs(np.linalg.eigvals(M)))) if t else 0.0
    return float(np.sqrt(rho))


def _spd_flag(M: np.ndarray) -> bool:
    if M.size == 0:
        return True
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0)


def verify_theorem1(sys: LinearSystem, partition: Partition, W,
                    tol: float = 1e-8, max_iter: int = 500) -> dict:
    """Check the SPD convergence guarantee on one instance.

    For SPD system, 2-part partition, and one shared SPD W, verifies:
    both Schur complements SPD; rho(T1 T2) < 1; the product bound
    rho(T1 T2) <= rho(T1) rho(T2); and that the iteration actually
    converges with the interface values matching the reduced direct
    solution. Returns a report dict with an overall "ok" flag and a
    "failures" list naming each violated check; if an SPD precheck
    fails, no convergence claim is attempted.
    """
    S1, r1, S2, r2 = _two_part_schur(partition)
    t = S1.shape[0]
    W1, W2 = _normalize_w(partition, W, t)
    report: dict = {
        "s1_spd": _spd_flag(S1),
        "s2_spd": _spd_flag(S2),
        "w_spd": _spd_flag(W1) and _spd_flag(W2),
        "rho_t1": float("nan"),
        "rho_t2": float("nan"),
        "rho_t1t2": float("nan"),
        "cf": float("nan"),
        "product_ok": None,
        "converged": None,
        "interface_error": float("nan"),
        "iterations": 0,
        "failures": [],
    }
    failures = report["failures"]
    for key in ("s1_spd", "s2_spd", "w_spd"):
        if not report[key]:
            failures.append(f"{key} precheck failed")
    if failures:
        report["ok"] = False
        return report

    T1 = reflection_matrix(W1, S1)
    T2 = reflection_matrix(W2, S2)
    rho1 = float(np.max(np.abs(np.linalg.eigvals(T1))))
    rho2 = float(np.max(np.abs(np.linalg.eigvals(T2))))
    single_w = np.array_equal(W1, W2)
    M = np.linalg.solve(W1 + S1, W1 - S2) @ np.linalg.solve(W2 + S2, W2 - S1)
    rho12 = float(np.max(np.abs(np.linalg.eigvals(M))))
    report.update(rho_t1=rho1, rho_t2=rho2, rho_t1t2=rho12,
                  cf=float(np.sqrt(rho12)))
    if not rho12 < 1.0:
        failures.append(f"rho(T1T2) = {rho12} is not below 1")
    if single_w:
        ok = rho12 <= rho1 * rho2 * (1 + 1e-10) + 1e-12
        report["product_ok"] = ok
        if not ok:
            failures.append(
                f"rho(T1T2) = {rho12} exceeds rho(T1)rho(T2) = {rho1 * rho2}")

    x, solve_report = vtm_solve(partition, precond=(W1, W2),
                                tol=tol, max_iter=max_iter)
    report["converged"] = solve_report.converged
    report["iterations"] = solve_report.iterations
    if not solve_report.converged:
        failures.append(f"vtm did not converge ({solve_report.status.value})")
    try:
        u_star = np.linalg.solve(S1 + S2, r1 + r2)
    except np.linalg.LinAlgError as exc:
        raise SingularSchurSum(f"S1 + S2 is singular: {exc}") from exc
    iface = partition.interface_nodes()
    denom = max(float(np.linalg.norm(u_star)), 1e-300)
    err = float(np.linalg.norm(x[iface] - u_star)) / denom
    report["interface_error"] = err
    if solve_report.converged and not err <= 1e-6:
        failures.append(f"interface error {err} exceeds 1e-6")
    report["ok"] = not failures
    return report


def lemma6_check(Z, S, rel_tol: float = 1e-8, abs_floor: float = 1e-12) -> bool:
    """Eigenvalue-multiset equality of Z S and sqrt(Z) S sqrt(Z).

    Both inputs must be SPD and of equal dimension; the comparison
    sorts both spectra and allows `rel_tol` relative deviation with an
    `abs_floor` absolute floor.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if Z.shape != S.shape or Z.shape[0] != Z.shape[1]:
        raise ValueError("Z and S must be square matrices of equal size")
    R = matrix_sqrt(Z)
    left = np.sort(np.linalg.eigvals(Z @ S).real)
    right = np.sort(np.linalg.eigvalsh(R @ S @ R.T))
    scale = np.maximum(np.abs(right), abs_floor)
    return bool(np.all(np.abs(left - right) <= rel_tol * scale + abs_floor))


def interface_fixed_point(partition: Partition, W=None) -> np.ndarray:
    """The exchange iteration's limit on the interface.

    Solves (sum_p S_p) u = sum_p r_p over the sorted interface nodes.
    The fixed point does not depend on the wire admittance; W is
    accepted for signature parity with the solver entry points and
    ignored. Equals the interface restriction of the direct solution
    of the untorn system.

    Raises:
        SingularSchurSum: the summed Schur complement is singular.
    """
    del W
    S, r, _iface = _embedded_schur(partition)
    try:
        return np.linalg.solve(S, r)
    except np.linalg.LinAlgError as exc:
        raise SingularSchurSum(f"summed Schur complement is singular: {exc}") from exc


def stationary_spectral_radius(A, method: str = "jacobi",
                               omega: float = 1.0) -> float:
    """Spectral radius of a classical method's dense iteration matrix.

    Explains observed divergence: radius >= 1 means the splitting
    iteration cannot contract. Supports jacobi, gs, sor, sgs, ssor.
    """
    dense = A.to_dense() if hasattr(A, "to_dense") else np.asarray(A, dtype=float)
    d = np.diag(dense)
    if np.any(d == 0):
        raise np.linalg.LinAlgError("zero diagonal entry")
    D = np.diag(d)
    L = np.tril(dense, -1)
    U = np.triu(dense, 1)
    key = method.lower()
    if key == "jacobi":
        M = np.linalg.solve(D, -(L + U))
    elif key in ("gs", "sgs", "sor", "ssor"):
        w = 1.0 if key in ("gs", "sgs") else omega
        forward = np.linalg.solve(D + w * L, (1 - w) * D - w * U)
        if key in ("sgs", "ssor"):
            backward = np.linalg.solve(D + w * U, (1 - w) * D - w * L)
            M = backward @ forward
        else:
            M = forward
    else:
        raise ValueError(f"unknown method '{method}'")
    return float(np.max(np.abs(np.linalg.eigvals(M))))
