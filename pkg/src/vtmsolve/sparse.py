"""Sparse and dense linear-algebra foundation.

Provides the CSR matrix type used throughout the package, Matrix Market
input/output, direct factorizations for the local solves, symmetric
eigendecomposition, the SPD matrix square root, and spectral radius
estimation. Heavy numerical work is delegated to numpy and scipy; this
module owns the storage contracts and the error behavior.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SparseFormatError(ValueError):
    """Malformed Matrix Market or vector text input."""


class SingularMatrix(np.linalg.LinAlgError):
    """Matrix is singular to working precision."""


class NotSPD(np.linalg.LinAlgError):
    """Matrix expected to be symmetric positive definite is not."""


# Dense fallback threshold for factorizations. Below this size a dense
# Cholesky/LU is cheaper and gives a true Cholesky path for spd hints;
# above it SuperLU is used (scipy ships no sparse Cholesky).
_DENSE_LIMIT = 600

# Full eigensolve limit for spectral_radius.
_EIG_LIMIT = 2000


def require_finite(values: np.ndarray, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a float64 array, rejecting NaN/Inf entries.

    Args:
        values: array-like of reals.
        name: label used in the error message.

    Raises:
        ValueError: if any entry is not finite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


class Dominance(enum.Enum):
    """Diagonal dominance classification of a square matrix."""

    STRICT = "Strict"
    WEAK = "Weak"
    NO = "No"


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix of real coefficients.

    Attributes:
        nrows: number of rows.
        ncols: number of columns.
        row_offsets: int64 array of length nrows+1, non-decreasing,
            row_offsets[0] == 0 and row_offsets[nrows] == len(values).
        col_indices: int64 array; strictly increasing within each row.
        values: float64 array, same length as col_indices. Stored zeros
            are permitted; the structural pattern is what splitting
            operations preserve.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets",
                           np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices",
                           np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=np.float64))
        ro, ci, v = self.row_offsets, self.col_indices, self.values
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("negative dimensions")
        if ro.shape != (self.nrows + 1,):
            raise ValueError("row_offsets must have length nrows+1")
        if ro[0] != 0 or ro[-1] != len(v) or len(ci) != len(v):
            raise ValueError("row_offsets endpoints inconsistent with values")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ValueError("column index out of range")
        for r in range(self.nrows):
            cols = ci[ro[r]:ro[r + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {r}: column indices not strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nrows, self.ncols)

    @staticmethod
    def from_coo(nrows: int, ncols: int, rows, cols, vals) -> "CsrMatrix":
        """Build from triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        m = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return CsrMatrix(nrows, ncols, m.indptr, m.indices, m.data)

    @staticmethod
    def from_scipy(m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return CsrMatrix(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @staticmethod
    def from_dense(arr) -> "CsrMatrix":
        return CsrMatrix.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=np.float64)))

    @staticmethod
    def identity(n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=np.int64)
        return CsrMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets),
                             shape=(self.nrows, self.ncols))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def diagonal(self) -> np.ndarray:
        if self.nrows != self.ncols:
            raise ValueError("diagonal of non-square matrix")
        return self.to_scipy().diagonal()

    def submatrix(self, rows, cols) -> "CsrMatrix":
        """Restriction to the given row and column index lists (in order)."""
        m = self.to_scipy()[np.asarray(rows, dtype=np.int64), :]
        m = m[:, np.asarray(cols, dtype=np.int64)]
        return CsrMatrix.from_scipy(m)

    def is_symmetric(self, rel_tol: float = 1e-12) -> bool:
        if self.nrows != self.ncols:
            return False
        m = self.to_scipy()
        diff = abs(m - m.T)
        scale = abs(m).max() if m.nnz else 0.0
        return diff.nnz == 0 or diff.max() <= rel_tol * max(scale, 1e-300)


# ---------------------------------------------------------------------------
# Matrix Market I/O
# ---------------------------------------------------------------------------

def mm_read(text: str) -> CsrMatrix:
    """Parse Matrix Market coordinate content into a CsrMatrix.

    Symmetric storage is expanded to full general storage; duplicate
    entries are summed. Only ``matrix coordinate real {general|symmetric}``
    headers are accepted.

    Raises:
        SparseFormatError: malformed header, out-of-range indices, or a
            non-real field, naming the offending line number.
    """
    lines = text.splitlines()
    if not lines:
        raise SparseFormatError("line 1: empty input")
    banner = lines[0].strip().lower().split()
    if len(banner) != 5 or banner[0] != "%%matrixmarket" or banner[1] != "matrix":
        raise SparseFormatError("line 1: malformed Matrix Market header")
    fmt, fieldkind, symm = banner[2], banner[3], banner[4]
    if fmt != "coordinate":
        raise SparseFormatError(f"line 1: unsupported format '{fmt}'")
    if fieldkind != "real":
        raise SparseFormatError(f"line 1: unsupported field '{fieldkind}'")
    if symm not in ("general", "symmetric"):
        raise SparseFormatError(f"line 1: unsupported symmetry '{symm}'")

    size_line = None
    for ln in range(1, len(lines)):
        stripped = lines[ln].strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = ln
        break
    if size_line is None:
        raise SparseFormatError(f"line {len(lines)}: missing size line")
    parts = lines[size_line].split()
    if len(parts) != 3:
        raise SparseFormatError(f"line {size_line + 1}: size line must be 'rows cols nnz'")
    try:
        nrows, ncols, nnz = (int(p) for p in parts)
    except ValueError:
        raise SparseFormatError(f"line {size_line + 1}: non-integer size field") from None
    if nrows < 0 or ncols < 0 or nnz < 0:
        raise SparseFormatError(f"line {size_line + 1}: negative size")

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    seen = 0
    for ln in range(size_line + 1, len(lines)):
        stripped = lines[ln].strip()
        if not stripped or stripped.startswith("%"):
            continue
        if seen >= nnz:
            raise SparseFormatError(f"line {ln + 1}: more entries than declared nnz={nnz}")
        parts = stripped.split()
        if len(parts) != 3:
            raise SparseFormatError(f"line {ln + 1}: entry must be 'row col value'")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise SparseFormatError(f"line {ln + 1}: non-integer index") from None
        try:
            v = float(parts[2])
        except ValueError:
            raise SparseFormatError(f"line {ln + 1}: non-real value field") from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise SparseFormatError(f"line {ln + 1}: index ({i},{j}) out of range")
        rows[seen], cols[seen], vals[seen] = i - 1, j - 1, v
        seen += 1
    if seen != nnz:
        raise SparseFormatError(f"line {len(lines)}: expected {nnz} entries, found {seen}")

    if symm == "symmetric":
        if nrows != ncols:
            raise SparseFormatError("line 1: symmetric matrix must be square")
        off = rows != cols
        mirror_r, mirror_c, mirror_v = cols[off], rows[off], vals[off]
        rows = np.concatenate([rows, mirror_r])
        cols = np.concatenate([cols, mirror_c])
        vals = np.concatenate([vals, mirror_v])
    return CsrMatrix.from_coo(nrows, ncols, rows, cols, vals)


def mm_write(A: CsrMatrix) -> str:
    """Serialize to Matrix Market coordinate general format (1-based)."""
    out = ["%%MatrixMarket matrix coordinate real general",
           f"{A.nrows} {A.ncols} {A.nnz}"]
    ro, ci, v = A.row_offsets, A.col_indices, A.values
    for r in range(A.nrows):
        for k in range(ro[r], ro[r + 1]):
            out.append(f"{r + 1} {ci[k] + 1} {float(v[k])!r}")
    return "\n".join(out) + "\n"


def mm_read_vector(text: str) -> np.ndarray:
    """Parse a vector from Matrix Market array format or plain text.

    Plain text is one value per line; blank lines and lines starting
    with '%' or '#' are skipped.
    """
    lines = text.splitlines()
    first = lines[0].strip().lower() if lines else ""
    if first.startswith("%%matrixmarket"):
        banner = first.split()
        if len(banner) != 5 or banner[2] != "array" or banner[3] != "real":
            raise SparseFormatError("line 1: expected 'matrix array real general' for vectors")
        data_lines = [(ln, s) for ln, s in enumerate(lines[1:], start=2)
                      if s.strip() and not s.strip().startswith("%")]
        if not data_lines:
            raise SparseFormatError("line 2: missing size line")
        ln0, size = data_lines[0]
        parts = size.split()
        if len(parts) != 2:
            raise SparseFormatError(f"line {ln0}: size line must be 'rows cols'")
        n, m = int(parts[0]), int(parts[1])
        if m != 1:
            raise SparseFormatError(f"line {ln0}: vector must have one column")
        body = data_lines[1:]
        if len(body) != n:
            raise SparseFormatError(f"line {len(lines)}: expected {n} values, found {len(body)}")
        vals = []
        for ln, s in body:
            try:
                vals.append(float(s.strip()))
            except ValueError:
                raise SparseFormatError(f"line {ln}: non-real value") from None
        return require_finite(np.array(vals), "vector")
    vals = []
    for ln, s in enumerate(lines, start=1):
        stripped = s.strip()
        if not stripped or stripped.startswith(("%", "#")):
            continue
        try:
            vals.append(float(stripped))
        except ValueError:
            raise SparseFormatError(f"line {ln}: non-real value") from None
    return require_finite(np.array(vals), "vector")


def mm_write_vector(v: np.ndarray) -> str:
    """Serialize a vector in Matrix Market array format."""
    v = np.asarray(v, dtype=np.float64)
    out = ["%%MatrixMarket matrix array real general", f"{len(v)} 1"]
    out.extend(f"{float(x)!r}" for x in v)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product y = A x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.ncols,):
        raise ValueError(f"dimension mismatch: matrix is {A.nrows}x{A.ncols}, "
                         f"vector has length {x.shape}")
    return A.to_scipy() @ x


@dataclass
class Factorization:
    """Opaque direct factorization with a solve method.

    kind is "cholesky" when a true Cholesky factorization was computed
    (dense spd path) and "lu" otherwise (dense LU or SuperLU; the sparse
    spd path runs SuperLU in symmetric mode since scipy has no sparse
    Cholesky).
    """

    kind: str
    n: int
    _solver: object = field(repr=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError("right-hand side length mismatch")
        x = self._solver(b)
        if x.size and not np.all(np.isfinite(x)):
            raise SingularMatrix("solve produced non-finite values")
        return x


def factor(A: CsrMatrix, hint: str = "general") -> Factorization:
    """Factorize a square matrix for repeated solves.

    Cholesky is attempted when hint == "spd", falling back to LU when the
    matrix turns out not to be positive definite.

    Raises:
        SingularMatrix: singular to working precision.
        ValueError: non-square input or unknown hint.
    """
    if A.nrows != A.ncols:
        raise ValueError("cannot factorize a non-square matrix")
    if hint not in ("spd", "general"):
        raise ValueError(f"unknown hint '{hint}'")
    n = A.nrows
    if n == 0:
        return Factorization("lu", 0, lambda b: np.asarray(b, dtype=np.float64))

    if n <= _DENSE_LIMIT:
        dense = A.to_dense()
        if hint == "spd":
            try:
                c = sla.cho_factor(dense, check_finite=False)
                return Factorization("cholesky", n,
                                     lambda b: sla.cho_solve(c, b, check_finite=False))
            except np.linalg.LinAlgError:
                pass
        try:
            lu, piv = sla.lu_factor(dense, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularMatrix(str(exc)) from None
        u_diag = np.abs(np.diag(lu))
        if u_diag.size and u_diag.min() <= 1e-14 * max(u_diag.max(), 1e-300):
            raise SingularMatrix("zero pivot in LU factorization")
        return Factorization("lu", n,
                             lambda b: sla.lu_solve((lu, piv), b, check_finite=False))

    m = A.to_scipy().tocsc()
    try:
        if hint == "spd":
            lu = spla.splu(m, permc_spec="MMD_AT_PLUS_A",
                           diag_pivot_thresh=0.001,
                           options=dict(SymmetricMode=True))
        else:
            lu = spla.splu(m)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from None
    return Factorization("lu", n, lu.solve)


def factor_solve(A: CsrMatrix, b: np.ndarray, hint: str = "general") -> np.ndarray:
    """One-shot direct solve of A x = b."""
    b = require_finite(b, "rhs")
    if b.shape != (A.nrows,):
        raise ValueError("right-hand side length mismatch")
    return factor(A, hint).solve(b)


def is_diagonally_dominant(A: CsrMatrix) -> Dominance:
    """Classify diagonal dominance row by row.

    Strict requires |a_ii| > sum of off-diagonal magnitudes for every
    row; Weak requires >= everywhere with at least one row tied; any
    violated row yields No.
    """
    if A.nrows != A.ncols:
        raise ValueError("dominance is defined for square matrices")
    ro, ci, v = A.row_offsets, A.col_indices, A.values
    all_strict = True
    for r in range(A.nrows):
        lo, hi = ro[r], ro[r + 1]
        cols = ci[lo:hi]
        vals = v[lo:hi]
        on = cols == r
        diag = float(np.abs(vals[on]).sum()) if on.any() else 0.0
        off = float(np.abs(vals[~on]).sum())
        if diag < off:
            return Dominance.NO
        if diag == off:
            all_strict = False
    return Dominance.STRICT if all_strict else Dominance.WEAK


def sym_eigen(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix as M = Q^T diag(lam) Q.

    Returns:
        (Q, lam) with orthogonal Q (rows are eigenvectors) and
        eigenvalues lam in ascending order.

    Raises:
        ValueError: M not symmetric within 1e-12 relative.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = np.abs(M).max() if M.size else 0.0
    if M.size and np.abs(M - M.T).max() > 1e-12 * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    lam, vecs = np.linalg.eigh(M)
    return vecs.T, lam


def matrix_sqrt(Z: np.ndarray) -> np.ndarray:
    """Square root R of an SPD matrix with R^T R = Z.

    Built from the eigendecomposition Z = Q^T diag(lam) Q as
    R = diag(sqrt(lam)) Q. Any valid R satisfies the defining identity;
    this is the canonical construction.

    Raises:
        NotSPD: an eigenvalue <= 1e-12 times the largest eigenvalue.
    """
    Q, lam = sym_eigen(Z)
    if lam.size == 0:
        return np.zeros_like(Z)
    if lam.max() <= 0 or lam.min() <= 1e-12 * lam.max():
        raise NotSPD("matrix is not positive definite")
    return np.sqrt(lam)[:, None] * Q


def spectral_radius(M: np.ndarray) -> float:
    """Largest eigenvalue magnitude of a square dense matrix.

    Full eigensolve up to n = 2000; power iteration with a fixed start
    vector (all ones plus 1e-3 at index 0) and 1e-8 stagnation tolerance
    beyond that.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    n = M.shape[0]
    if n == 0:
        return 0.0
    if n <= _EIG_LIMIT:
        return float(np.abs(np.linalg.eigvals(M)).max())
    v = np.ones(n)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    est_prev = 0.0
    for _ in range(10000):
        # two steps per round so complex-pair dominated spectra settle
        w = M @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        est = float(np.sqrt(nw))
        v = w / nw
        if abs(est - est_prev) <= 1e-8 * max(est, 1.0):
            return est
        est_prev = est
    return est_prev
