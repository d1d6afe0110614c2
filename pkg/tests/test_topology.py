import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcastlab.radio import table_from_adjacency
from mcastlab.topology import (
    LinkMatrix,
    UnknownNode,
    circular_permutation,
    covering_neighbors,
    local_ordering,
    matrix_from_adjacency,
    psi_position,
    reach_set,
)

from conftest import chain_adjacency, ground_truth_tables, random_geometric


class TestCircularPermutation:
    def test_middle_origin(self):
        assert circular_permutation(3, 5) == [3, 4, 5, 1, 2]

    def test_identity_rotation(self):
        assert circular_permutation(1, 4) == [1, 2, 3, 4]

    def test_last_origin(self):
        assert circular_permutation(4, 4) == [4, 1, 2, 3]

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            circular_permutation(0, 4)
        with pytest.raises(ValueError):
            circular_permutation(6, 4)

    @given(st.integers(1, 40), st.data())
    @settings(max_examples=60, deadline=None)
    def test_inverse_restores_identity(self, n, data):
        i = data.draw(st.integers(1, n))
        perm = circular_permutation(i, n)
        inverse = [0] * n
        for pos, node in enumerate(perm):
            inverse[node - 1] = pos
        assert [perm[inverse[v - 1]] for v in range(1, n + 1)] == list(range(1, n + 1))

    def test_psi_position_matches_permutation(self):
        perm = circular_permutation(4, 7)
        for pos, node in enumerate(perm):
            assert psi_position(4, node, 7) == pos


class TestLocalOrdering:
    def test_origin_first_and_relative_order(self):
        order = local_ordering(4, {1, 2, 6}, 6)
        assert order == [4, 6, 1, 2]

    def test_origin_included_even_if_absent_from_members(self):
        assert local_ordering(2, {5}, 5)[0] == 2


class TestNeighborSets:
    def test_chain_covering(self):
        tables = ground_truth_tables(chain_adjacency(3), 3)
        assert covering_neighbors(3, tables[1]) == {2}

    def test_chain_reach(self):
        tables = ground_truth_tables(chain_adjacency(3), 3)
        assert reach_set(2, tables[1]) == {3}

    def test_full_cover(self):
        adj = {1: {2, 3}, 2: {1, 4, 5}, 3: {1, 4, 5}, 4: {2, 3}, 5: {2, 3}}
        table = table_from_adjacency(1, adj, 5)
        assert covering_neighbors(4, table) == {2, 3}
        assert covering_neighbors(5, table) == {2, 3}

    def test_unknown_nodes_raise(self):
        tables = ground_truth_tables(chain_adjacency(3), 3)
        with pytest.raises(UnknownNode):
            covering_neighbors(2, tables[1])  # one-hop, not two-hop
        with pytest.raises(UnknownNode):
            reach_set(3, tables[1])  # two-hop, not one-hop

    def test_reach_empty_when_no_two_hop_adjacency(self):
        adj = {1: {2, 3}, 2: {1}, 3: {1, 4}, 4: {3}}
        table = table_from_adjacency(1, adj, 4)
        assert reach_set(2, table) == set()
        assert reach_set(3, table) == {4}

    def test_star_reach_covers_all_two_hop(self):
        adj = {1: {2}, 2: {1, 3, 4, 5}, 3: {2}, 4: {2}, 5: {2}}
        table = table_from_adjacency(1, adj, 5)
        assert reach_set(2, table) == table.two_hop == {3, 4, 5}

    def test_duality_and_union_on_random_graphs(self, rng):
        for _ in range(30):
            n = int(rng.integers(5, 16))
            _, adj = random_geometric(n, 400.0, 180.0, rng, connected=False)
            for origin in range(1, n + 1):
                table = table_from_adjacency(origin, adj, n)
                reaches = {y: reach_set(y, table) for y in table.one_hop}
                for z in table.two_hop:
                    covers = covering_neighbors(z, table)
                    for y in table.one_hop:
                        assert (z in reaches[y]) == (y in covers)
                covered = set()
                for y in table.one_hop:
                    covered |= reaches[y]
                assert covered == table.two_hop


class TestLinkMatrix:
    def test_local_matrix_row_one_is_origin(self):
        tables = ground_truth_tables(chain_adjacency(4), 4)
        lm = tables[2].link_matrix()
        assert lm.ordering[0] == 2
        assert lm.ordering == [2, 3, 4, 1]
        row = lm.entries[0]
        for j, node in enumerate(lm.ordering):
            assert row[j] == (1 if node in tables[2].one_hop else 0)

    def test_zero_diagonal_and_symmetry(self, rng):
        _, adj = random_geometric(8, 400.0, 200.0, rng, connected=False)
        table = table_from_adjacency(3, adj, 8)
        lm = table.link_matrix()
        assert np.all(np.diag(lm.entries) == 0)
        assert np.array_equal(lm.entries, lm.entries.T)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            LinkMatrix(np.zeros((2, 3), dtype=np.uint8), [1, 2])

    def test_matrix_from_adjacency_ignores_outsiders(self):
        lm = matrix_from_adjacency({1: {2, 9}, 2: {1}}, [1, 2])
        assert lm.entries.tolist() == [[0, 1], [1, 0]]
