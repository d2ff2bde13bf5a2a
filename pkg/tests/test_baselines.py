"""Classical stationary methods used as comparison points."""

import numpy as np
import pytest

from _synth import two_part
from vtmsolve import (
    BaselineSpec,
    CsrMatrix,
    Diverged,
    LinearSystem,
    METHODS,
    PartitionLabels,
    PreconditionerSpec,
    SingularBlock,
    SolveStatus,
    ZeroDiagonal,
    factor_solve,
    grid2d,
    kernels,
    opamp_ring,
    overlapped_blocks,
    select_interface,
    stationary_solve,
    vtm_solve,
    wire_tear,
)


def _system(A, b):
    A = CsrMatrix.from_dense(np.asarray(A, dtype=float))
    return LinearSystem(A=A, b=np.asarray(b, dtype=float),
                        symmetric=A.is_symmetric(), tag="inline")


# ---------------------------------------------------------------------------
# Specification validation
# ---------------------------------------------------------------------------


class TestBaselineSpec:
    def test_methods_exported(self):
        assert set(METHODS) == {"jacobi", "gs", "sgs", "sor", "ssor", "bj", "obj"}

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            BaselineSpec("multigrid")

    def test_omega_range(self):
        with pytest.raises(ValueError, match="omega"):
            BaselineSpec("sor", omega=2.0)
        with pytest.raises(ValueError, match="omega"):
            BaselineSpec("ssor", omega=0.0)

    def test_overlap_depth(self):
        labels = PartitionLabels(np.zeros(4, dtype=np.int64), frozenset(), 1)
        with pytest.raises(ValueError, match="overlap"):
            BaselineSpec("obj", labels=labels, overlap=0)

    def test_block_methods_need_labels(self):
        with pytest.raises(ValueError, match="needs partition labels"):
            BaselineSpec("bj")


# ---------------------------------------------------------------------------
# Point methods
# ---------------------------------------------------------------------------


class TestPointMethods:
    def test_jacobi_diagonal_system_one_iteration(self):
        sys = _system(np.diag([2.0, 4.0]), [2.0, 4.0])
        x, report = stationary_solve(sys, "jacobi", tol=1e-12)
        np.testing.assert_allclose(x, [1.0, 1.0])
        assert report.iterations == 1
        assert report.status is SolveStatus.CONVERGED

    def test_gauss_seidel_reaches_exact_solution(self):
        sys = _system([[2.0, -1.0], [-1.0, 2.0]], [1.0, 1.0])
        x, report = stationary_solve(sys, "gs", tol=1e-10)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-9)
        assert report.status is SolveStatus.CONVERGED

    def test_symmetric_sweep_is_forward_then_backward(self):
        sys = grid2d(5, 5)
        A = sys.A
        dpos = np.empty(A.nrows, dtype=np.int64)
        for i in range(A.nrows):
            row = A.col_indices[A.row_offsets[i]:A.row_offsets[i + 1]]
            dpos[i] = A.row_offsets[i] + int(np.flatnonzero(row == i)[0])
        manual = np.zeros(A.nrows)
        kernels.sor_sweep(A.row_offsets, A.col_indices, A.values, dpos,
                          manual, sys.b, 1.0, False)
        kernels.sor_sweep(A.row_offsets, A.col_indices, A.values, dpos,
                          manual, sys.b, 1.0, True)
        _, report = stationary_solve(sys, "sgs", tol=1e-30, max_iter=1)
        # One sgs iteration == one forward plus one backward sweep.
        first_iterate = report.x
        np.testing.assert_array_equal(first_iterate, manual)

    def test_sor_omega_changes_trajectory(self):
        sys = grid2d(6, 6)
        _, r10 = stationary_solve(sys, BaselineSpec("sor", omega=1.0), tol=1e-10)
        _, r15 = stationary_solve(sys, BaselineSpec("sor", omega=1.5), tol=1e-10)
        assert r10.iterations != r15.iterations

    def test_zero_diagonal_rejected(self):
        sys = _system([[0.0, 1.0], [1.0, 0.0]], [1.0, 1.0])
        with pytest.raises(ZeroDiagonal, match="row 0"):
            stationary_solve(sys, "jacobi")

    def test_divergence_reported_on_feedback_ring(self):
        sys = opamp_ring()
        for spec in ("jacobi", "gs", BaselineSpec("sor", omega=1.0),
                     BaselineSpec("sor", omega=1.5)):
            _, report = stationary_solve(sys, spec, tol=1e-8, max_iter=200)
            assert report.status is SolveStatus.DIVERGED
            with pytest.raises(Diverged):
                report.raise_for_status()

    def test_all_point_methods_converge_on_dominant_grid(self):
        sys = grid2d(6, 6)
        direct = factor_solve(sys.A, sys.b)
        for name in ("jacobi", "gs", "sgs", "sor", "ssor"):
            x, report = stationary_solve(sys, name, tol=1e-10, max_iter=3000)
            assert report.status is SolveStatus.CONVERGED, name
            np.testing.assert_allclose(x, direct, rtol=1e-6)


# ---------------------------------------------------------------------------
# Block methods
# ---------------------------------------------------------------------------


class TestBlockMethods:
    def test_single_block_is_direct_solve(self):
        sys = grid2d(5, 5)
        labels = PartitionLabels(np.zeros(25, dtype=np.int64), frozenset(), 1)
        x, report = stationary_solve(sys, BaselineSpec("bj", labels=labels),
                                     tol=1e-10)
        assert report.iterations == 1
        np.testing.assert_allclose(x, factor_solve(sys.A, sys.b), rtol=1e-10)

    def test_block_jacobi_converges_on_grid(self):
        sys = grid2d(8, 8)
        labels = select_interface(sys.A, 2)
        x, report = stationary_solve(sys, BaselineSpec("bj", labels=labels),
                                     tol=1e-8, max_iter=500)
        assert report.status is SolveStatus.CONVERGED
        direct = factor_solve(sys.A, sys.b)
        np.testing.assert_allclose(x, direct, rtol=1e-5)

    @pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
    def test_singular_block_reported(self):
        sys = _system([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
        labels = PartitionLabels(np.zeros(2, dtype=np.int64), frozenset(), 1)
        with pytest.raises(SingularBlock, match="block 0"):
            stationary_solve(sys, BaselineSpec("bj", labels=labels))

    def test_labels_must_match_size(self):
        sys = grid2d(4, 4)
        labels = PartitionLabels(np.zeros(3, dtype=np.int64), frozenset(), 1)
        with pytest.raises(ValueError, match="labels do not match"):
            stationary_solve(sys, BaselineSpec("bj", labels=labels))

    def test_overlapped_blocks_match_torn_subdomains(self):
        # At depth 1 each overlapped block is exactly the node set of the
        # corresponding torn subdomain (own nodes plus the twin layer) --
        # the structural reason overlapped block Jacobi and the wire
        # iteration with block admittances march in lockstep. Exact when
        # every separator node borders its own part's interior, which a
        # geometric strip separator guarantees.
        sys = grid2d(10, 10)
        labels = select_interface(sys.A, 2, "geometric", dims=(10, 10))
        part = wire_tear(sys, labels)
        blocks = overlapped_blocks(labels, sys.A, 1)
        for sub, blk in zip(part.subdomains, blocks):
            nodes = set(sub.twin_nodes.tolist()) | set(sub.inner_nodes.tolist())
            assert set(blk.tolist()) == nodes

    def test_overlapped_jacobi_matches_wire_iteration_counts(self):
        sys = grid2d(12, 12)
        labels, part = two_part(sys, "geometric", dims=(12, 12))
        _, rv = vtm_solve(part, PreconditionerSpec("ob"), tol=1e-8)
        _, ro = stationary_solve(
            sys, BaselineSpec("obj", labels=labels, overlap=1), tol=1e-8)
        assert abs(rv.iterations - ro.iterations) <= 1


class TestOverlappedBlocks:
    def test_path_graph_layers(self):
        sys = _system([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]],
                      [1.0, 0.0, 0.0])
        labels = PartitionLabels(np.array([0, 0, 1]), frozenset(), 2)
        blocks = overlapped_blocks(labels, sys.A, 1)
        assert [sorted(b.tolist()) for b in blocks] == [[0, 1, 2], [1, 2]]

    def test_zero_depth_rejected(self):
        sys = grid2d(3, 3)
        labels = select_interface(sys.A, 2)
        with pytest.raises(ValueError, match=">= 1"):
            overlapped_blocks(labels, sys.A, 0)

    def test_grid_block_sizes(self):
        # Own nodes (labels minus separator) grown one layer: the side
        # hosting the separator column regains exactly it (18 nodes), the
        # other side reaches across and absorbs it on top (24 nodes).
        sys = grid2d(6, 6)
        labels = select_interface(sys.A, 2, "geometric", dims=(6, 6))
        blocks = overlapped_blocks(labels, sys.A, 1)
        assert sorted(len(b) for b in blocks) == [18, 24]

    def test_every_node_covered(self):
        for N in (2, 3, 4):
            sys = grid2d(7, 6)
            labels = select_interface(sys.A, N)
            blocks = overlapped_blocks(labels, sys.A, 1)
            covered = np.zeros(42, dtype=int)
            for b in blocks:
                covered[b] += 1
            assert np.all(covered >= 1)

    def test_deeper_overlap_grows_blocks(self):
        sys = grid2d(8, 8)
        labels = select_interface(sys.A, 2)
        b1 = overlapped_blocks(labels, sys.A, 1)
        b2 = overlapped_blocks(labels, sys.A, 2)
        assert all(len(x2) > len(x1) for x1, x2 in zip(b1, b2))
        for x1, x2 in zip(b1, b2):
            assert set(x1.tolist()) <= set(x2.tolist())

    def test_adjacent_blocks_overlap_on_separator(self):
        sys = grid2d(6, 6)
        labels = select_interface(sys.A, 2, "geometric", dims=(6, 6))
        blocks = overlapped_blocks(labels, sys.A, 1)
        shared = set(blocks[0].tolist()) & set(blocks[1].tolist())
        assert labels.interface <= shared
