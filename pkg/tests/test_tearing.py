"""Interface selection, system tearing, reassembly, and partition text I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _synth import assert_same_system, random_netlist, random_system
from vtmsolve import (
    InvalidLabels,
    Netlist,
    PartitionLabels,
    Subdomain,
    Wire,
    assemble,
    grid2d,
    opamp_ring,
    partition_read,
    partition_write,
    reassemble,
    select_interface,
    sym_eigen,
    wire_tear,
)


def _chain(gs, grounds, injections):
    n = len(gs) + 1
    branches = tuple((i, i + 1, g) for i, g in enumerate(gs))
    return assemble(Netlist(n, branches, tuple(grounds), tuple(injections)))


# ---------------------------------------------------------------------------
# Label container and wire validation
# ---------------------------------------------------------------------------


class TestLabelValidation:
    def test_part_label_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            PartitionLabels(np.array([0, 2]), frozenset(), 2)

    def test_interface_node_out_of_range(self):
        with pytest.raises(ValueError, match="interface node"):
            PartitionLabels(np.array([0, 1]), frozenset({5}), 2)

    def test_at_least_one_part(self):
        with pytest.raises(ValueError, match="at least one part"):
            PartitionLabels(np.zeros(2, dtype=np.int64), frozenset(), 0)

    def test_wire_needs_distinct_parts(self):
        with pytest.raises(ValueError, match="distinct subdomains"):
            Wire(id=0, node=1, end_a=(0, 0), end_b=(0, 1))

    def test_wire_delay_positive(self):
        with pytest.raises(ValueError, match="delay"):
            Wire(id=0, node=1, end_a=(0, 0), end_b=(1, 0), tau=0)

    def test_labels_must_match_system(self):
        sys = random_system(1, n=10)
        with pytest.raises(InvalidLabels, match="length"):
            wire_tear(sys, PartitionLabels(np.zeros(4, dtype=np.int64),
                                           frozenset(), 2))

    def test_unmarked_cross_coupling_rejected(self):
        # Two inner nodes of different parts joined directly: somebody
        # forgot to put an endpoint on the interface.
        sys = _chain([1.0], [(0, 1.0), (1, 1.0)], [(0, 1.0)])
        bad = PartitionLabels(np.array([0, 1]), frozenset(), 2)
        with pytest.raises(InvalidLabels, match="joins inner nodes"):
            wire_tear(sys, bad)


# ---------------------------------------------------------------------------
# Tearing a chain at one node
# ---------------------------------------------------------------------------


class TestChainTearing:
    """Node shunts split across twins; series branches follow their side."""

    def test_asymmetric_chain_attribution(self):
        # 0 -(2)- 1 -(4)- 2 with shunt 3 and injection 5 at the cut node.
        sys = _chain([2.0, 4.0], [(0, 1.0), (1, 3.0), (2, 1.0)], [(1, 5.0)])
        labels = PartitionLabels(np.array([0, 0, 1]), frozenset({1}), 2)
        part = wire_tear(sys, labels)

        a, b = part.subdomains
        # Twin diagonal = full series conductance into own side + half shunt.
        assert a.C.to_dense()[0, 0] == pytest.approx(2.0 + 1.5)
        assert b.C.to_dense()[0, 0] == pytest.approx(4.0 + 1.5)
        # The series couplings stay whole on their side.
        assert a.E.to_dense()[0, 0] == -2.0
        assert a.F.to_dense()[0, 0] == -2.0
        assert b.E.to_dense()[0, 0] == -4.0
        # Injection splits evenly between the twins.
        assert a.f[0] == b.f[0] == pytest.approx(2.5)
        # Exactly one virtual wire joining the twins.
        assert len(part.wires) == 1
        w = part.wires[0]
        assert (w.node, w.end_a, w.end_b, w.tau) == (1, (0, 0), (1, 0), 1)
        assert part.twin_map == {1: ((0, 0), (1, 0))}
        assert part.split_weights == {1: ((0, 0.5), (1, 0.5))}

    def test_twin_diagonals_resum_bitwise(self):
        sys = _chain([0.1, 0.7, 1.3], [(i, 0.3) for i in range(4)], [(2, 1.0)])
        labels = PartitionLabels(np.array([0, 0, 1, 1]), frozenset({1, 2}), 2)
        part = wire_tear(sys, labels)
        A = sys.A.to_dense()
        for node, ends in part.twin_map.items():
            total = 0.0
            for p, loc in ends:
                total += part.subdomains[p].C.to_dense()[loc, loc]
            assert total == A[node, node]  # bitwise, not approx


# ---------------------------------------------------------------------------
# Tearing the feedback ring at its two middle nodes
# ---------------------------------------------------------------------------


class TestRingTearing:
    def test_subsystems_exactly(self):
        sys = opamp_ring()
        labels = PartitionLabels(np.array([0, 0, 1, 1]), frozenset({1, 2}), 2)
        part = wire_tear(sys, labels)

        a, b = part.subdomains
        # Twins sorted ascending: local 0 is node 1, local 1 is node 2.
        np.testing.assert_array_equal(a.twin_nodes, [1, 2])
        np.testing.assert_array_equal(b.twin_nodes, [1, 2])
        np.testing.assert_array_equal(a.inner_nodes, [0])
        np.testing.assert_array_equal(b.inner_nodes, [3])

        np.testing.assert_array_equal(a.C.to_dense(), np.diag([0.5, 0.5]))
        np.testing.assert_array_equal(b.C.to_dense(), np.diag([0.5, 0.5]))
        np.testing.assert_array_equal(a.E.to_dense(), [[0.0], [10.0]])
        np.testing.assert_array_equal(a.F.to_dense(), [[-10.0, 0.0]])
        np.testing.assert_array_equal(a.D.to_dense(), [[1.0]])
        np.testing.assert_array_equal(b.E.to_dense(), [[10.0], [0.0]])
        np.testing.assert_array_equal(b.F.to_dense(), [[0.0, 10.0]])
        np.testing.assert_array_equal(b.D.to_dense(), [[1.0]])
        np.testing.assert_array_equal(a.f, [0.5, 0.5])
        np.testing.assert_array_equal(b.f, [0.5, 0.5])
        np.testing.assert_array_equal(a.g, [1.0])
        np.testing.assert_array_equal(b.g, [1.0])
        assert len(part.wires) == 2

    def test_local_index_helpers(self):
        sys = opamp_ring()
        labels = PartitionLabels(np.array([0, 0, 1, 1]), frozenset({1, 2}), 2)
        sub = wire_tear(sys, labels).subdomains[0]
        assert sub.twin_local(2) == 1
        assert sub.inner_local(0) == 0
        with pytest.raises(KeyError, match="no twin"):
            sub.twin_local(0)
        with pytest.raises(KeyError, match="not inner"):
            sub.inner_local(2)


# ---------------------------------------------------------------------------
# Structural invariants of torn systems
# ---------------------------------------------------------------------------


def _stitched_dense(sub: Subdomain):
    t = len(sub.twin_nodes)
    m = len(sub.inner_nodes)
    M = np.zeros((t + m, t + m))
    M[:t, :t] = sub.C.to_dense()
    if m:
        M[:t, t:] = sub.E.to_dense()
        M[t:, :t] = sub.F.to_dense()
        M[t:, t:] = sub.D.to_dense()
    return M


class TestTornInvariants:
    @pytest.mark.parametrize("N", [2, 3, 4])
    def test_spd_systems_tear_into_spd_blocks(self, N):
        sys = grid2d(6, 6)
        labels = select_interface(sys.A, N)
        part = wire_tear(sys, labels)
        for sub in part.subdomains:
            M = _stitched_dense(sub)
            np.testing.assert_allclose(M, M.T, atol=0)
            _, lam = sym_eigen(M)
            assert lam[0] > 0.0

    def test_interface_rows_sum_back(self):
        sys = random_system(17, n=40)
        labels = select_interface(sys.A, 3)
        part = wire_tear(sys, labels)
        A = sys.A.to_dense()
        # Every global coupling is recoverable by summing block entries.
        acc = np.zeros_like(A)
        for sub in part.subdomains:
            M = _stitched_dense(sub)
            nodes = np.concatenate([sub.twin_nodes, sub.inner_nodes]).astype(int)
            for li, gi in enumerate(nodes):
                for lj, gj in enumerate(nodes):
                    acc[gi, gj] += M[li, lj]
        # Twin diagonals and split couplings summed over copies equal the
        # original; everything else appears exactly once.
        np.testing.assert_allclose(acc, A, rtol=0, atol=1e-12)

    def test_rhs_shares_resum(self):
        sys = random_system(23, n=35)
        labels = select_interface(sys.A, 2)
        part = wire_tear(sys, labels)
        for node, ends in part.twin_map.items():
            total = sum(part.subdomains[p].f[loc] for p, loc in ends)
            assert total == sys.b[node]


# ---------------------------------------------------------------------------
# Reassembly round trips
# ---------------------------------------------------------------------------


class TestReassemble:
    def test_grid_round_trip(self):
        sys = grid2d(4, 4)
        labels = select_interface(sys.A, 2)
        assert_same_system(reassemble(wire_tear(sys, labels)), sys)

    def test_chain_round_trip(self):
        sys = _chain([2.0, 4.0], [(0, 1.0), (1, 3.0), (2, 1.0)], [(1, 5.0)])
        labels = PartitionLabels(np.array([0, 0, 1]), frozenset({1}), 2)
        assert_same_system(reassemble(wire_tear(sys, labels)), sys)

    def test_many_systems_round_trip_bitwise(self):
        for seed in range(30):
            sys = random_system(seed, n=20 + seed, n_vccs=seed % 3)
            N = 2 + seed % 3
            labels = select_interface(sys.A, N)
            assert_same_system(reassemble(wire_tear(sys, labels)), sys)

    @given(st.integers(0, 10**6), st.integers(2, 4))
    @settings(max_examples=30, deadline=None)
    def test_round_trip_property(self, seed, N):
        sys = random_system(seed, n=16 + seed % 30)
        labels = select_interface(sys.A, N)
        assert_same_system(reassemble(wire_tear(sys, labels)), sys)


# ---------------------------------------------------------------------------
# Custom split weights
# ---------------------------------------------------------------------------


class TestCustomWeights:
    def _sys_and_labels(self):
        sys = _chain([2.0, 4.0], [(0, 1.0), (1, 3.0), (2, 1.0)], [(1, 5.0)])
        return sys, PartitionLabels(np.array([0, 0, 1]), frozenset({1}), 2)

    def test_honored_and_round_trip(self):
        sys, labels = self._sys_and_labels()
        part = wire_tear(sys, labels, weights={1: {0: 0.25, 1: 0.75}})
        a, b = part.subdomains
        # Shunt residue 3 and injection 5 now split 25/75.
        assert a.C.to_dense()[0, 0] == pytest.approx(2.0 + 0.25 * 3.0)
        assert b.C.to_dense()[0, 0] == pytest.approx(4.0 + 0.75 * 3.0)
        assert a.f[0] == pytest.approx(1.25)
        assert b.f[0] == pytest.approx(3.75)
        assert part.split_weights[1] == ((0, 0.25), (1, 0.75))
        assert_same_system(reassemble(part), sys)

    def test_missing_node_rejected(self):
        sys, labels = self._sys_and_labels()
        with pytest.raises(ValueError, match="missing split weights"):
            wire_tear(sys, labels, weights={})

    def test_wrong_parts_rejected(self):
        sys, labels = self._sys_and_labels()
        with pytest.raises(ValueError, match="must cover parts"):
            wire_tear(sys, labels, weights={1: {0: 0.5, 2: 0.5}})

    def test_nonpositive_rejected(self):
        sys, labels = self._sys_and_labels()
        with pytest.raises(ValueError, match="must be positive"):
            wire_tear(sys, labels, weights={1: {0: -0.5, 1: 1.5}})

    def test_must_sum_to_one(self):
        sys, labels = self._sys_and_labels()
        with pytest.raises(ValueError, match="sum to 1"):
            wire_tear(sys, labels, weights={1: {0: 0.6, 1: 0.6}})


# ---------------------------------------------------------------------------
# Interface selection
# ---------------------------------------------------------------------------


class TestSelectInterface:
    def test_path_graph(self):
        sys = _chain([1.0, 1.0], [(i, 1.0) for i in range(3)], [(0, 1.0)])
        labels = select_interface(sys.A, 2)
        assert sorted(labels.interface) == [1]
        assert labels.part_of.tolist() == [0, 0, 1]

    def test_square_grid_geometric(self):
        sys = grid2d(4, 4)
        labels = select_interface(sys.A, 2, "geometric", dims=(4, 4))
        # One full grid line of 4 separator nodes, parts balanced 8/8.
        assert sorted(labels.interface) == [1, 5, 9, 13]
        assert np.bincount(labels.part_of).tolist() == [8, 8]
        # Tie on part sizes puts the separator on the lower-labeled side.
        assert all(labels.part_of[v] == 0 for v in labels.interface)

    def test_single_part_has_no_interface(self):
        sys = grid2d(3, 3)
        labels = select_interface(sys.A, 1)
        assert labels.interface == frozenset()
        assert labels.n_parts == 1
        assert np.all(labels.part_of == 0)

    def test_more_parts_than_nodes_rejected(self):
        sys = _chain([1.0], [(0, 1.0), (1, 1.0)], [(0, 1.0)])
        with pytest.raises(ValueError, match="cannot split"):
            select_interface(sys.A, 9)

    def test_geometric_needs_dims(self):
        with pytest.raises(ValueError, match="needs grid dims"):
            select_interface(grid2d(3, 3).A, 2, "geometric")

    def test_unknown_strategy(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            select_interface(grid2d(3, 3).A, 2, "metis")

    def test_disconnected_components_split_without_interface(self):
        net = Netlist(4, ((0, 1, 1.0), (2, 3, 1.0)),
                      tuple((i, 1.0) for i in range(4)), ((0, 1.0),))
        sys = assemble(net)
        labels = select_interface(sys.A, 2)
        assert labels.interface == frozenset()
        assert labels.part_of[0] == labels.part_of[1]
        assert labels.part_of[2] == labels.part_of[3]
        assert labels.part_of[0] != labels.part_of[2]

    @pytest.mark.parametrize("strategy,dims", [("bfs-grow", None),
                                               ("geometric", (8, 8))])
    def test_parts_balanced_within_tolerance(self, strategy, dims):
        sys = grid2d(8, 8)
        for N in (2, 4):
            labels = select_interface(sys.A, N, strategy, dims=dims)
            sizes = np.bincount(labels.part_of, minlength=N)
            assert sizes.min() >= 0.8 * 64 / N - 1
            assert sizes.max() <= 1.2 * 64 / N + 1

    def test_deterministic(self):
        sys = grid2d(9, 7)
        a = select_interface(sys.A, 3)
        b = select_interface(sys.A, 3)
        np.testing.assert_array_equal(a.part_of, b.part_of)
        assert a.interface == b.interface

    def test_separator_endpoints_cover_all_cut_edges(self):
        sys = random_system(5, n=60)
        labels = select_interface(sys.A, 3)
        A = sys.A
        iface = np.zeros(A.nrows, dtype=bool)
        iface[list(labels.interface)] = True
        ro, ci = A.row_offsets, A.col_indices
        for i in range(A.nrows):
            for k in range(ro[i], ro[i + 1]):
                j = int(ci[k])
                if i != j and labels.part_of[i] != labels.part_of[j]:
                    assert iface[i] or iface[j]


# ---------------------------------------------------------------------------
# Partition text round trip
# ---------------------------------------------------------------------------


class TestPartitionFiles:
    def test_round_trip(self):
        sys = grid2d(5, 4)
        labels = select_interface(sys.A, 2)
        part = wire_tear(sys, labels, weights={
            v: {0: 0.3, 1: 0.7} for v in labels.interface})
        files = partition_write(part)
        assert "partition.txt" in files
        back_labels, back_weights = partition_read(files["partition.txt"])
        np.testing.assert_array_equal(back_labels.part_of, labels.part_of)
        assert back_labels.interface == labels.interface
        assert back_labels.n_parts == labels.n_parts
        part2 = wire_tear(sys, back_labels, weights=back_weights)
        for s1, s2 in zip(part.subdomains, part2.subdomains):
            np.testing.assert_array_equal(s1.C.to_dense(), s2.C.to_dense())
            np.testing.assert_array_equal(s1.f, s2.f)

    def test_equal_weights_round_trip(self):
        sys = grid2d(4, 4)
        labels = select_interface(sys.A, 2)
        part = wire_tear(sys, labels)
        _, weights = partition_read(partition_write(part)["partition.txt"])
        part2 = wire_tear(sys, labels, weights=weights) if weights != "equal" \
            else wire_tear(sys, labels)
        np.testing.assert_array_equal(
            part.subdomains[0].C.values, part2.subdomains[0].C.values)

    def test_w_blocks_emitted(self):
        from vtmsolve import mm_read

        sys = grid2d(4, 4)
        labels = select_interface(sys.A, 2)
        part = wire_tear(sys, labels)
        t = len(part.twin_map)
        W = np.eye(t) * 2.0
        files = partition_write(part, w_blocks={(0, 1): W})
        names = [k for k in files if k.endswith(".mtx")]
        assert names == ["W_0_1.mtx"]
        np.testing.assert_array_equal(mm_read(files["W_0_1.mtx"]).to_dense(), W)

    def test_read_rejects_garbage(self):
        with pytest.raises(ValueError):
            partition_read("part 0 0\nnonsense 1 2\n")
