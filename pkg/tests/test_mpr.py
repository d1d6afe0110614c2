from itertools import combinations

import numpy as np
import pytest

from mcastlab import Simulator
from mcastlab.engine import Packet
from mcastlab.mpr import (
    Decision,
    DuplicateCache,
    ForwardingMode,
    MprState,
    TooLarge,
    brute_force_min_mpr,
    collect_selectors,
    forward_decision,
    select_mpr,
    select_mpr_detailed,
)
from mcastlab.radio import table_from_adjacency
from mcastlab.topology import reach_set

from conftest import ground_truth_tables, random_geometric, static_geometric_scenario


def exhaustive_minimum(table):
    """Independent in-test enumeration, kept separate from the shipped oracle."""
    n1 = sorted(table.one_hop)
    for size in range(len(n1) + 1):
        for combo in combinations(n1, size):
            covered = set()
            for y in combo:
                covered |= table.adjacency.get(y, set()) & table.two_hop
            if table.two_hop <= covered:
                return set(combo)
    return set(n1)


def sole_cover_table():
    # origin 6: N1={1,2}, N2={3,4,5}; links 1-3, 1-4, 2-4, 2-5
    adj = {6: {1, 2}, 1: {6, 3, 4}, 2: {6, 4, 5}, 3: {1}, 4: {1, 2}, 5: {2}}
    return table_from_adjacency(6, adj, 6)


def greedy_pick_table():
    # origin 6: N1={1,2,3}, N2={4,5}; links 1-4, 2-4, 2-5, 3-5
    adj = {6: {1, 2, 3}, 1: {6, 4}, 2: {6, 4, 5}, 3: {6, 5}, 4: {1, 2}, 5: {2, 3}}
    return table_from_adjacency(6, adj, 6)


class TestSelectMpr:
    def test_sole_covers_forced(self):
        table = sole_cover_table()
        assert select_mpr(table) == {1, 2}
        assert exhaustive_minimum(table) == {1, 2}

    def test_greedy_picks_double_cover(self):
        table = greedy_pick_table()
        assert select_mpr(table) == {2}
        assert exhaustive_minimum(table) == {2}

    def test_empty_two_hop_gives_empty_set(self):
        adj = {1: {2, 3}, 2: {1, 3}, 3: {1, 2}}
        assert select_mpr(table_from_adjacency(1, adj, 3)) == set()

    def test_tie_breaks_by_circular_order(self):
        # N1={2,4} both cover N2={1,5}; from origin 3 the circular order is
        # [3,4,5,1,2], so 4 wins the tie.
        adj = {3: {2, 4}, 2: {3, 1, 5}, 4: {3, 1, 5}, 1: {2, 4}, 5: {2, 4}}
        assert select_mpr(table_from_adjacency(3, adj, 5)) == {4}

    def test_uncoverable_two_hop_flagged_and_skipped(self):
        table = sole_cover_table()
        table.two_hop.add(9)  # no adjacency evidence for node 9
        chosen, uncoverable = select_mpr_detailed(table)
        assert uncoverable == {9}
        assert chosen == {1, 2}

    def test_coverage_on_random_snapshots(self, rng):
        checked = 0
        for _ in range(25):
            n = int(rng.integers(8, 26))
            _, adj = random_geometric(n, 550.0, 200.0, rng, connected=False)
            for origin in range(1, n + 1):
                table = table_from_adjacency(origin, adj, n)
                chosen = select_mpr(table)
                covered = set()
                for y in chosen:
                    covered |= reach_set(y, table)
                assert covered == table.two_hop
                assert chosen <= table.one_hop
                checked += 1
        assert checked > 100


class TestBruteForceOracle:
    def test_matches_independent_enumeration(self, rng):
        for _ in range(10):
            n = int(rng.integers(6, 12))
            _, adj = random_geometric(n, 400.0, 170.0, rng, connected=False)
            for origin in range(1, n + 1):
                table = table_from_adjacency(origin, adj, n)
                if len(table.one_hop) > 10:
                    continue
                assert len(brute_force_min_mpr(table)) == len(exhaustive_minimum(table))

    def test_dominance_of_heuristic(self, rng):
        for _ in range(20):
            n = int(rng.integers(6, 14))
            _, adj = random_geometric(n, 500.0, 190.0, rng, connected=False)
            for origin in range(1, n + 1):
                table = table_from_adjacency(origin, adj, n)
                if len(table.one_hop) > 12:
                    continue
                assert len(select_mpr(table)) >= len(brute_force_min_mpr(table))

    def test_empty_two_hop(self):
        adj = {1: {2}, 2: {1}}
        assert brute_force_min_mpr(table_from_adjacency(1, adj, 2)) == set()

    def test_guard_rejects_large_neighborhoods(self):
        adj = {1: set(range(2, 27))}
        for j in range(2, 27):
            adj[j] = {1}
        with pytest.raises(TooLarge):
            brute_force_min_mpr(table_from_adjacency(1, adj, 26))


class TestDuplicateCache:
    def test_positive_after_insert(self):
        cache = DuplicateCache()
        assert not cache.contains(1, 0, now=0.0)
        cache.insert(1, 0, now=0.0)
        assert cache.contains(1, 0, now=1.0)

    def test_age_eviction(self):
        cache = DuplicateCache(age_limit_s=30.0)
        cache.insert(1, 0, now=0.0)
        assert cache.contains(1, 0, now=30.0)
        assert not cache.contains(1, 0, now=30.5)

    def test_capacity_fifo_eviction(self):
        cache = DuplicateCache(capacity=3)
        for seq in range(4):
            cache.insert(1, seq, now=0.0)
        assert not cache.contains(1, 0, now=0.0)
        assert cache.contains(1, 3, now=0.0)

    def test_check_and_insert(self):
        cache = DuplicateCache()
        assert cache.check_and_insert(2, 5, now=1.0) is False
        assert cache.check_and_insert(2, 5, now=1.1) is True


class TestForwardDecision:
    def packet(self, ttl=255):
        return Packet(source=1, seq=0, size_bytes=256, ttl=ttl)

    def test_duplicates_drop_in_all_modes(self):
        for mode in (ForwardingMode.FLOODING, ForwardingMode.S_MPR, ForwardingMode.NS_MPR):
            cache = DuplicateCache()
            cache.insert(1, 0, now=0.0)
            state = MprState(selectors={2})
            assert forward_decision(mode, self.packet(), 2, state, cache, 1.0) is Decision.DROP

    def test_flooding_forwards_unique(self):
        assert (
            forward_decision(
                ForwardingMode.FLOODING, self.packet(), 2, MprState(), DuplicateCache(), 0.0
            )
            is Decision.FORWARD
        )

    def test_smpr_requires_selector_hop(self):
        state = MprState(selectors={3})
        assert (
            forward_decision(ForwardingMode.S_MPR, self.packet(), 2, state, DuplicateCache(), 0.0)
            is Decision.DROP
        )
        assert (
            forward_decision(ForwardingMode.S_MPR, self.packet(), 3, state, DuplicateCache(), 0.0)
            is Decision.FORWARD
        )

    def test_nsmpr_forwards_from_any_hop_with_selectors(self):
        state = MprState(selectors={7})
        assert (
            forward_decision(ForwardingMode.NS_MPR, self.packet(), 2, state, DuplicateCache(), 0.0)
            is Decision.FORWARD
        )

    def test_nsmpr_never_forwards_without_selectors(self):
        assert (
            forward_decision(ForwardingMode.NS_MPR, self.packet(), 2, MprState(), DuplicateCache(), 0.0)
            is Decision.DROP
        )

    def test_exhausted_ttl_drops(self):
        assert (
            forward_decision(
                ForwardingMode.FLOODING, self.packet(ttl=0), 2, MprState(), DuplicateCache(), 0.0
            )
            is Decision.DROP
        )


class TestAnnouncements:
    def test_collect_selectors_pure(self):
        selectors = collect_selectors({1: {2}, 2: set(), 3: {2}})
        assert selectors[2] == {1, 3}
        assert selectors[1] == set()

    def test_announcements_propagate_in_simulator(self):
        cfg, adj = static_geometric_scenario(seed=77)
        sim = Simulator(cfg, 4)
        sim.run_until(4.0)
        truth = ground_truth_tables(adj, cfg.node_count)
        for nid in range(1, cfg.node_count + 1):
            assert sim.nodes[nid].table.one_hop == truth[nid].one_hop
        announced = {nid: set(sim.nodes[nid].mpr_state.mpr_set) for nid in sim.nodes}
        expected = collect_selectors(announced)
        for nid in sim.nodes:
            assert sim.nodes[nid].mpr_state.selectors == expected[nid]

    def test_eviction_removes_selector(self):
        cfg, _ = static_geometric_scenario(seed=78, n=8)
        sim = Simulator(cfg, 4)
        sim.run_until(4.0)
        victim = None
        for nid in sim.nodes:
            if sim.nodes[nid].mpr_state.selectors:
                victim = nid
                break
        assert victim is not None
        chooser = next(iter(sim.nodes[victim].mpr_state.selectors))
        # silence the chooser by teleporting it out of everyone's range
        sim.nodes[chooser].mob.x = 10_000.0
        sim.nodes[chooser].mob.y = 10_000.0
        sim.run_until(4.0 + cfg.expiry_s + 1.0)
        assert chooser not in sim.nodes[victim].mpr_state.selectors


class TestRelayCompleteness:
    def relay_reaches_everyone(self, adj, n, source):
        """Pure-graph relay propagation with first-arrival-round semantics."""
        tables = ground_truth_tables(adj, n)
        mpr_sets = {i: select_mpr(tables[i]) for i in tables}
        selectors = collect_selectors(mpr_sets)
        received = {source}
        frontier = [source]
        first_hop: dict[int, set[int]] = {}
        while frontier:
            arrivals: dict[int, set[int]] = {}
            for tx in frontier:
                for nbr in adj[tx]:
                    arrivals.setdefault(nbr, set()).add(tx)
            frontier = []
            for node, senders in sorted(arrivals.items()):
                if node in received:
                    continue
                received.add(node)
                first_hop[node] = senders
                if senders & selectors.get(node, set()):
                    frontier.append(node)
        return received == set(range(1, n + 1))

    def test_smpr_relay_covers_connected_graphs(self, rng):
        # relayed flooding over the MPR backbone reaches every node
        for k in range(100):
            n = int(rng.integers(6, 21))
            _, adj = random_geometric(n, 500.0, 200.0, rng, connected=True)
            source = int(rng.integers(1, n + 1))
            assert self.relay_reaches_everyone(adj, n, source), f"graph {k} source {source}"
