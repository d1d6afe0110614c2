"""Shared builders: geometric graphs, ground-truth tables, canned scenarios."""

from __future__ import annotations

import numpy as np
import pytest

from mcastlab import ScenarioConfig, validate
from mcastlab.radio import table_from_adjacency


def disk_adjacency(positions: np.ndarray, radius: float) -> dict[int, set[int]]:
    """Unit-disk adjacency over 1-based node ids."""
    n = positions.shape[0]
    adj: dict[int, set[int]] = {i + 1: set() for i in range(n)}
    for i in range(n):
        for j in range(i + 1, n):
            if float(np.hypot(*(positions[i] - positions[j]))) <= radius:
                adj[i + 1].add(j + 1)
                adj[j + 1].add(i + 1)
    return adj


def is_connected(adj: dict[int, set[int]], n: int) -> bool:
    seen, stack = {1}, [1]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def random_geometric(n: int, side: float, radius: float, rng, connected: bool = True):
    """Random positions and their disk adjacency; resamples until connected."""
    while True:
        pos = rng.uniform(0.0, side, size=(n, 2))
        adj = disk_adjacency(pos, radius)
        if not connected or is_connected(adj, n):
            return pos, adj


def ground_truth_tables(adj: dict[int, set[int]], n: int):
    return {i: table_from_adjacency(i, adj, n) for i in range(1, n + 1)}


def chain_adjacency(n: int) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {i: set() for i in range(1, n + 1)}
    for i in range(1, n):
        adj[i].add(i + 1)
        adj[i + 1].add(i)
    return adj


def static_chain_scenario(n: int = 5, spacing: float = 150.0, **overrides) -> ScenarioConfig:
    """Static line topology: only adjacent nodes are in radio range."""
    base = dict(
        name="chain",
        node_count=n,
        arena_side_m=max(700.0, spacing * n + 100.0),
        episode_length_s=30.0,
        mode="flooding",
        placement="fixed",
        positions=tuple((50.0 + spacing * k, 100.0) for k in range(n)),
        mean_speed_min_mps=0.0,
        mean_speed_max_mps=0.0,
        speed_sigma_mps=0.0,
        flow_sources=(1,),
        flow_arrival="deterministic",
        flow_rate_pps=2.0,
        flow_start_s=5.0,
        flow_stop_s=25.0,
    )
    base.update(overrides)
    return validate(ScenarioConfig(**base))


def mesh3_scenario(**overrides) -> ScenarioConfig:
    """Three static nodes, all pairwise within full radio range."""
    base = dict(
        name="mesh3",
        node_count=3,
        arena_side_m=550.0,
        episode_length_s=100.0,
        mode="flooding",
        placement="fixed",
        positions=((100.0, 100.0), (150.0, 100.0), (125.0, 143.3)),
        mean_speed_min_mps=0.0,
        mean_speed_max_mps=0.0,
        speed_sigma_mps=0.0,
        flow_sources=(1,),
        flow_arrival="deterministic",
        flow_rate_pps=1.0,
        flow_start_s=0.0,
        flow_max_packets=1,
    )
    base.update(overrides)
    return validate(ScenarioConfig(**base))


def static_geometric_scenario(seed: int, n: int = 15, side: float = 550.0, **overrides):
    """Connected static scenario with hard-disk links (no loss ramp)."""
    rng = np.random.default_rng(seed)
    pos, adj = random_geometric(n, side, 200.0, rng)
    base = dict(
        name=f"static{n}",
        node_count=n,
        arena_side_m=side,
        episode_length_s=40.0,
        mode="flooding",
        placement="fixed",
        positions=tuple((float(x), float(y)) for x, y in pos),
        mean_speed_min_mps=0.0,
        mean_speed_max_mps=0.0,
        speed_sigma_mps=0.0,
        full_range_m=200.0,
        max_range_m=200.0,
        flow_sources=(1,),
        flow_rate_pps=5.0,
        flow_start_s=5.0,
        flow_stop_s=35.0,
    )
    base.update(overrides)
    return validate(ScenarioConfig(**base)), adj


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
