"""Circuit description, stamping, generators, and netlist text round-trips."""

import numpy as np
import pytest

from _synth import ge_solve, random_netlist
from vtmsolve import (
    CsrMatrix,
    Dominance,
    LinearSystem,
    Netlist,
    assemble,
    factor_solve,
    grid2d,
    grid3d,
    is_diagonally_dominant,
    loop_gain,
    opamp_ring,
    parse_netlist,
    splitmix64_stream,
    system_files,
    write_netlist,
)


# ---------------------------------------------------------------------------
# Stamping
# ---------------------------------------------------------------------------


class TestAssemble:
    def test_two_node_divider(self):
        net = Netlist(2, ((0, 1, 1.0),), ((0, 1.0), (1, 1.0)), ((0, 1.0),))
        sys = assemble(net)
        np.testing.assert_array_equal(sys.A.to_dense(), [[2.0, -1.0], [-1.0, 2.0]])
        np.testing.assert_array_equal(sys.b, [1.0, 0.0])
        assert sys.symmetric

    def test_single_node(self):
        sys = assemble(Netlist(1, (), ((0, 2.0),), ((0, 4.0),)))
        np.testing.assert_array_equal(sys.A.to_dense(), [[2.0]])
        np.testing.assert_array_equal(sys.b, [4.0])
        assert factor_solve(sys.A, sys.b)[0] == pytest.approx(2.0)

    def test_parallel_branches_sum(self):
        net = Netlist(2, ((0, 1, 1.0), (0, 1, 2.0)), ((0, 1.0),), ((0, 1.0),))
        A = assemble(net).A.to_dense()
        assert A[0, 1] == pytest.approx(-3.0)
        assert A[1, 1] == pytest.approx(3.0)

    def test_controlled_source_breaks_symmetry(self):
        net = Netlist(2, ((0, 1, 1.0),), ((0, 1.0), (1, 1.0)), ((0, 1.0),),
                      vccs=((0, 1, 0.5),))
        sys = assemble(net)
        assert not sys.symmetric
        assert sys.A.to_dense()[0, 1] == pytest.approx(-1.0 + 0.5)

    def test_solution_matches_longhand_elimination(self):
        net = random_netlist(31, n=25, n_vccs=4)
        sys = assemble(net)
        want = ge_solve(sys.A.to_dense(), sys.b)
        np.testing.assert_allclose(factor_solve(sys.A, sys.b), want,
                                   rtol=1e-9, atol=1e-12)

    def test_validation_errors(self):
        with pytest.raises(ValueError, match="at least one node"):
            Netlist(0, (), (), ())
        with pytest.raises(ValueError, match="self-loop"):
            Netlist(2, ((1, 1, 1.0),), (), ())
        with pytest.raises(ValueError, match="out of range"):
            Netlist(2, ((0, 5, 1.0),), (), ())
        with pytest.raises(ValueError, match="must be positive"):
            Netlist(2, ((0, 1, -1.0),), (), ())
        with pytest.raises(ValueError, match="ground at node"):
            Netlist(2, ((0, 1, 1.0),), ((7, 1.0),), ())
        with pytest.raises(ValueError, match="must be positive"):
            Netlist(2, ((0, 1, 1.0),), ((0, 0.0),), ())
        with pytest.raises(ValueError, match="injection"):
            Netlist(2, ((0, 1, 1.0),), (), ((9, 1.0),))
        with pytest.raises(ValueError, match="vccs"):
            Netlist(2, ((0, 1, 1.0),), (), (), vccs=((0, 4, 1.0),))

    def test_linear_system_validation(self):
        A = CsrMatrix.from_dense(np.eye(2))
        with pytest.raises(ValueError, match="length"):
            LinearSystem(A=A, b=np.ones(3), symmetric=True, tag="t")
        with pytest.raises(ValueError, match="non-finite"):
            LinearSystem(A=A, b=np.array([1.0, np.nan]), symmetric=True, tag="t")


# ---------------------------------------------------------------------------
# Grid generators
# ---------------------------------------------------------------------------


class TestGrids:
    def test_grid2d_smallest(self):
        sys = grid2d(2, 2, branch_g=1.0, ground_g=1.0)
        A = sys.A.to_dense()
        np.testing.assert_allclose(np.diag(A), [3.0, 3.0, 3.0, 3.0])
        offdiag = A - np.diag(np.diag(A))
        assert np.count_nonzero(offdiag) == 8  # 4 undirected edges
        assert set(np.unique(offdiag)) == {0.0, -1.0}

    def test_grid2d_always_strictly_dominant(self):
        for nx, ny in ((2, 2), (5, 3), (9, 9)):
            assert is_diagonally_dominant(grid2d(nx, ny).A) is Dominance.STRICT

    def test_grid2d_large_size(self):
        sys = grid2d(100, 100)
        assert sys.A.nrows == 10000
        assert sys.symmetric

    def test_grid3d_corner_diagonal(self):
        sys = grid3d(2, 2, 2, branch_g=2.0, ground_g=0.5)
        np.testing.assert_allclose(sys.A.diagonal(), np.full(8, 3 * 2.0 + 0.5))

    def test_grid3d_large_size(self):
        sys = grid3d(30, 30, 30)
        assert sys.A.nrows == 27000
        assert is_diagonally_dominant(sys.A) is Dominance.STRICT

    def test_generators_are_deterministic(self):
        a = grid2d(7, 5, rhs_seed=9)
        b = grid2d(7, 5, rhs_seed=9)
        np.testing.assert_array_equal(a.A.values, b.A.values)
        np.testing.assert_array_equal(a.b, b.b)
        c = grid2d(7, 5, rhs_seed=10)
        assert not np.array_equal(a.b, c.b)

    def test_tags_identify_instance(self):
        assert grid2d(7, 5, rhs_seed=9).tag == "grid2d-7x5-seed9"
        assert grid3d(2, 3, 4).tag == "grid3d-2x3x4-seed42"

    def test_dimension_validation(self):
        with pytest.raises(ValueError, match="nx, ny"):
            grid2d(1, 5)
        with pytest.raises(ValueError, match="nx, ny, nz"):
            grid3d(2, 2, 1)
        with pytest.raises(ValueError, match="positive"):
            grid2d(3, 3, branch_g=0.0)


# ---------------------------------------------------------------------------
# Feedback ring and its loop gain
# ---------------------------------------------------------------------------


class TestFeedbackRing:
    def test_default_matrix(self):
        sys = opamp_ring()
        np.testing.assert_array_equal(
            sys.A.to_dense(),
            [[1.0, -10.0, 0.0, 0.0],
             [0.0, 1.0, 0.0, 10.0],
             [10.0, 0.0, 1.0, 0.0],
             [0.0, 0.0, 10.0, 1.0]],
        )
        np.testing.assert_array_equal(sys.b, np.ones(4))
        assert not sys.symmetric

    def test_zero_couplings_leave_diagonal(self):
        sys = opamp_ring(couplings=(0.0, 0.0, 0.0, 0.0))
        np.testing.assert_array_equal(sys.A.to_dense(), np.eye(4))

    def test_loop_gain_defaults(self):
        assert loop_gain() == pytest.approx(-1.0e4)

    def test_loop_gain_zero_coupling(self):
        assert loop_gain(couplings=(10.0, 0.0, 10.0, -10.0)) == 0.0

    def test_loop_gain_unit_conductances(self):
        assert loop_gain(g=(1.0, 1.0, 1.0, 1.0),
                         couplings=(2.0, 3.0, 4.0, 5.0)) == pytest.approx(120.0)

    def test_zero_node_conductance_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            opamp_ring(g=(1.0, 0.0, 1.0, 1.0))
        with pytest.raises(ValueError, match="nonzero"):
            loop_gain(g=(1.0, 0.0, 1.0, 1.0))


# ---------------------------------------------------------------------------
# Netlist text format
# ---------------------------------------------------------------------------


class TestNetlistText:
    def test_round_trip_preserves_everything(self):
        net = random_netlist(3, n=20, n_vccs=3)
        back = parse_netlist(write_netlist(net))
        assert back.node_count == net.node_count
        assert back.branches == net.branches
        assert back.grounds == net.grounds
        assert back.injections == net.injections
        assert back.vccs == net.vccs

    def test_round_trip_keeps_exact_floats(self):
        net = Netlist(2, ((0, 1, 0.1 + 0.2),), ((0, 1e-30),), ((1, -1.0 / 3.0),))
        back = parse_netlist(write_netlist(net))
        assert back.branches[0][2] == net.branches[0][2]
        assert back.grounds[0][1] == net.grounds[0][1]
        assert back.injections[0][1] == net.injections[0][1]

    def test_parse_errors_name_line(self):
        text = "R 0 1 1.0\nG 0 1.0\nR 1 x 2.0\n"
        with pytest.raises(ValueError, match="netlist line 3"):
            parse_netlist(text)

    def test_structural_errors_surface_after_parse(self):
        with pytest.raises(ValueError, match="self-loop"):
            parse_netlist("R 1 1 2.0\nG 0 1.0\n")

    def test_unrecognized_element_named(self):
        with pytest.raises(ValueError, match="netlist line 2: unrecognized element"):
            parse_netlist("R 0 1 1.0\nQ 0 1 2\n")

    def test_empty_netlist_rejected(self):
        with pytest.raises(ValueError, match="no elements"):
            parse_netlist("# nothing here\n")

    def test_system_files_round_trip(self):
        from vtmsolve import mm_read, mm_read_vector

        sys = assemble(random_netlist(8, n=12))
        files = system_files(sys)
        assert set(files) == {"A.mtx", "b.mtx"}
        A = mm_read(files["A.mtx"])
        b = mm_read_vector(files["b.mtx"])
        np.testing.assert_array_equal(A.to_dense(), sys.A.to_dense())
        np.testing.assert_array_equal(b, sys.b)


# ---------------------------------------------------------------------------
# Seeded uniform stream
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def _reference_stream(seed, count):
    """The published 64-bit mix generator, written out independently."""
    out = []
    state = seed & _MASK
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        out.append((z >> 11) * 2.0 ** -53)
    return np.array(out)


class TestSeededStream:
    def test_matches_reference_algorithm(self):
        for seed in (0, 1, 42, 1234567, 2**63):
            np.testing.assert_array_equal(
                splitmix64_stream(seed, 16), _reference_stream(seed, 16)
            )

    def test_deterministic_and_in_unit_interval(self):
        a = splitmix64_stream(99, 1000)
        b = splitmix64_stream(99, 1000)
        np.testing.assert_array_equal(a, b)
        assert np.all(a >= 0.0) and np.all(a < 1.0)
        # Crude uniformity sanity check.
        assert 0.4 < a.mean() < 0.6

    def test_different_seeds_differ(self):
        assert not np.array_equal(splitmix64_stream(1, 8), splitmix64_stream(2, 8))
