import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcastlab import Simulator
from mcastlab.radio import (
    HelloMessage,
    HelloRecord,
    NeighborTable,
    RadioModel,
    build_table,
    hello_gap,
    table_from_adjacency,
)

from conftest import chain_adjacency, ground_truth_tables, static_chain_scenario


class TestDeliveryProbability:
    def test_full_reliability_inside_full_range(self):
        assert RadioModel().delivery_probability(100.0) == 1.0
        assert RadioModel().delivery_probability(200.0) == 1.0

    def test_ramp_midpoint(self):
        assert RadioModel().delivery_probability(225.0) == pytest.approx(0.5)

    def test_disconnects_beyond_max_range(self):
        assert RadioModel().delivery_probability(250.0) == 0.0
        assert RadioModel().delivery_probability(300.0) == 0.0

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            RadioModel().delivery_probability(-1.0)

    def test_hard_disk_model_allowed(self):
        disk = RadioModel(full_range_m=200.0, max_range_m=200.0)
        assert disk.delivery_probability(199.9) == 1.0
        assert disk.delivery_probability(200.0) == 1.0
        assert disk.delivery_probability(200.1) == 0.0

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ValueError):
            RadioModel(full_range_m=260.0, max_range_m=250.0)
        with pytest.raises(ValueError):
            RadioModel(full_range_m=0.0)

    @given(st.floats(0.0, 400.0), st.floats(0.0, 400.0))
    @settings(max_examples=100, deadline=None)
    def test_monotone_non_increasing(self, d1, d2):
        model = RadioModel()
        lo, hi = sorted((d1, d2))
        assert model.delivery_probability(lo) >= model.delivery_probability(hi)


class TestAirtime:
    def test_256_byte_datagram_at_1mbps(self):
        airtime = RadioModel().airtime_s(256)
        assert airtime == 2048 / 1_000_000
        assert airtime == 0.002048

    def test_hello_frame(self):
        assert RadioModel().airtime_s(64) == 512 / 1_000_000


class TestHelloMessage:
    def test_sender_excluded_from_neighbor_list(self):
        with pytest.raises(ValueError):
            HelloMessage(sender=1, neighbor_list=(1, 2), queue_length=0)

    def test_gap_statistics(self):
        rng = np.random.default_rng(3)
        gaps = [hello_gap(rng, 0.25, 0.75) for _ in range(10_000)]
        assert abs(np.mean(gaps) - 0.5) / 0.5 < 0.02
        assert min(gaps) >= 0.25
        assert max(gaps) <= 0.75


class TestBuildTable:
    def test_no_hellos_heard(self):
        table = build_table(1, 5, {}, now=10.0, expiry_s=2.25)
        assert table.one_hop == set()
        assert table.two_hop == set()
        assert table.n_i == 1

    def test_chain_view_from_records(self):
        heard = {2: HelloRecord(9.5, (1, 3), 0, False)}
        table = build_table(1, 3, heard, now=10.0, expiry_s=2.25)
        assert table.one_hop == {2}
        assert table.two_hop == {3}
        assert table.adjacency[2] == {1, 3}

    def test_stale_sender_evicted(self):
        heard = {
            2: HelloRecord(1.0, (), 0, False),
            3: HelloRecord(9.0, (), 0, False),
        }
        table = build_table(1, 4, heard, now=10.0, expiry_s=2.25)
        assert table.one_hop == {3}

    def test_queue_lengths_reported(self):
        heard = {2: HelloRecord(9.9, (), 7, False)}
        table = build_table(1, 3, heard, now=10.0, expiry_s=2.25, own_queue_length=3)
        assert table.queue_lengths == {1: 3, 2: 7}


class TestDiscoveryInSimulator:
    def test_tables_converge_after_three_hello_periods(self):
        cfg = static_chain_scenario(n=5)
        sim = Simulator(cfg, 21)
        sim.run_until(3 * cfg.hello_interval_max_s + 0.05)
        truth = ground_truth_tables(chain_adjacency(5), 5)
        for nid in range(1, 6):
            table = sim.nodes[nid].table
            assert table.one_hop == truth[nid].one_hop, f"node {nid} one-hop"
            assert table.two_hop == truth[nid].two_hop, f"node {nid} two-hop"

    def test_symmetry_once_converged(self):
        cfg = static_chain_scenario(n=5)
        sim = Simulator(cfg, 22)
        sim.run_until(3.0)
        for i in range(1, 6):
            for j in sim.nodes[i].table.one_hop:
                assert i in sim.nodes[j].table.one_hop

    def test_hello_reception_updates_tables(self):
        cfg = static_chain_scenario(n=2, flow_rate_pps=1.0)
        sim = Simulator(cfg, 5)
        sim.run_until(2.0)
        assert sim.nodes[1].table.one_hop == {2}
        assert sim.nodes[2].table.queue_lengths.get(1) is not None

    def test_neighbor_expires_after_silence(self):
        cfg = static_chain_scenario(n=2, spacing=150.0, episode_length_s=10.0)
        sim = Simulator(cfg, 9)
        sim.run_until(2.0)
        assert 2 in sim.nodes[1].table.one_hop
        # teleport node 2 out of range; its HELLOs stop reaching node 1
        sim.nodes[2].mob.x = 600.0
        sim.run_until(2.0 + cfg.expiry_s + 1.0)
        assert 2 not in sim.nodes[1].table.one_hop


class TestGroundTruthHelper:
    def test_matches_build_table_on_chain(self):
        truth = table_from_adjacency(1, chain_adjacency(3), 3)
        heard = {2: HelloRecord(0.0, (1, 3), 0, False)}
        built = build_table(1, 3, heard, now=0.5, expiry_s=2.25)
        assert truth.one_hop == built.one_hop
        assert truth.two_hop == built.two_hop
        assert truth.adjacency == built.adjacency

    def test_isolated_origin(self):
        table = table_from_adjacency(4, {1: {2}, 2: {1}}, 4)
        assert isinstance(table, NeighborTable)
        assert table.n_i == 1
