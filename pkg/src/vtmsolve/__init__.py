"""Virtual transmission solver toolkit.

Tears a sparse conductance-style linear system into subdomains joined
by virtual transmission wires, then solves it by iterating delayed
boundary exchanges until the assembled candidate meets the residual
tolerance. Ships the tearing algebra, the exchange engine with a
family of wire-admittance preconditioners, classical stationary
baselines for comparison, and spectral analysis tools that predict the
observed convergence rate.
"""

from .sparse import (CsrMatrix, Dominance, Factorization, NotSPD,
                     SingularMatrix, SparseFormatError, factor, factor_solve,
                     is_diagonally_dominant, matrix_sqrt, mm_read,
                     mm_read_vector, mm_write, mm_write_vector,
                     spectral_radius, spmv, sym_eigen)
from .kernels import HAVE_COMPILED, backend_name, sor_sweep
from .netgen import (LinearSystem, Netlist, assemble, grid2d, grid3d,
                     loop_gain, opamp_ring, parse_netlist, splitmix64_stream,
                     system_files, write_netlist)
from .tearing import (InvalidLabels, Partition, PartitionLabels, Subdomain,
                      Wire, partition_read, partition_write, reassemble,
                      select_interface, wire_tear)
from .reports import (DIVERGENCE_LIMIT, Diverged, MaxIterations, SolveReport,
                      SolveStatus, estimate_cf)
from .engine import (PRECONDITIONERS, BoundaryState, LocalSingular,
                     PreconditionerFailure, PreconditionerSpec, WireBundle,
                     assemble_solution, build_preconditioner, local_solve,
                     manual_bundles, parse_solver_config, prepare_solvers,
                     schur_w, solver_config_text, vtm_solve)
from .baselines import (METHODS, BaselineSpec, SingularBlock, ZeroDiagonal,
                        overlapped_blocks, stationary_solve)
from .analysis import (SingularInner, SingularSchurSum, SingularSum,
                       convergence_factor, interface_fixed_point, lemma6_check,
                       reflection_matrix, schur_complement,
                       stationary_spectral_radius, verify_theorem1)

__version__ = "0.1.0"

__all__ = [
    "CsrMatrix", "Dominance", "Factorization", "NotSPD", "SingularMatrix",
    "SparseFormatError", "factor", "factor_solve", "is_diagonally_dominant",
    "matrix_sqrt", "mm_read", "mm_read_vector", "mm_write", "mm_write_vector",
    "spectral_radius", "spmv", "sym_eigen",
    "HAVE_COMPILED", "backend_name", "sor_sweep",
    "LinearSystem", "Netlist", "assemble", "grid2d", "grid3d", "loop_gain",
    "opamp_ring", "parse_netlist", "splitmix64_stream", "system_files",
    "write_netlist",
    "InvalidLabels", "Partition", "PartitionLabels", "Subdomain", "Wire",
    "partition_read", "partition_write", "reassemble", "select_interface",
    "wire_tear",
    "DIVERGENCE_LIMIT", "Diverged", "MaxIterations", "SolveReport",
    "SolveStatus", "estimate_cf",
    "PRECONDITIONERS", "BoundaryState", "LocalSingular",
    "PreconditionerFailure", "PreconditionerSpec", "WireBundle",
    "assemble_solution", "build_preconditioner", "local_solve",
    "manual_bundles", "parse_solver_config", "prepare_solvers", "schur_w",
    "solver_config_text", "vtm_solve",
    "METHODS", "BaselineSpec", "SingularBlock", "ZeroDiagonal",
    "overlapped_blocks", "stationary_solve",
    "SingularInner", "SingularSchurSum", "SingularSum", "convergence_factor",
    "interface_fixed_point", "lemma6_check", "reflection_matrix",
    "schur_complement", "stationary_spectral_radius", "verify_theorem1",
    "__version__",
]
