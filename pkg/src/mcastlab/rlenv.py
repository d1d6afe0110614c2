"""Per-agent observation/action/reward surface over the forwarding simulator.

Each node is an agent. When a unique multicast packet arrives, the agent
samples a full vector of per-previous-hop forwarding decisions from the
policy and applies the component matching the packet's actual previous hop,
so the observation itself never depends on the pending packet. Reward is the
network-wide goodput rate accrued over the agent's inter-decision window,
mixed across agents with configurable weights (uniform team mean by default).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import topology
from .radio import NeighborTable

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObservationSpec:
    """Fixed observation/action geometry shared by every agent and step."""

    n_max: int = 32
    k_max: int = 24

    @property
    def width(self) -> int:
        # Own adjacency row and column, then own queue plus one-hop queues.
        return 2 * self.n_max + 1 + self.k_max


def observe(
    table: NeighborTable,
    own_queue: int,
    queue_capacity: int,
    spec: ObservationSpec,
) -> np.ndarray:
    """Fixed-width observation: own link-matrix row, column, and queue levels.

    Entries beyond the live neighborhood stay zero. Neighborhoods larger
    than the configured widths are truncated at the far end of the circular
    ordering (logged, as information is lost).
    """
    vec = np.zeros(spec.width, dtype=np.float64)
    ordering = table.ordering()
    if len(ordering) > spec.n_max:
        log.warning(
            "node %d neighborhood (%d) exceeds obs.n_max=%d; truncating",
            table.origin,
            len(ordering),
            spec.n_max,
        )
        ordering = ordering[: spec.n_max]
    one_hop = table.one_hop
    for idx, node in enumerate(ordering):
        if node in one_hop:
            vec[idx] = 1.0  # own row of the local link matrix
            vec[spec.n_max + idx] = 1.0  # own column (symmetric radio)
    qbase = 2 * spec.n_max
    cap = float(queue_capacity)
    vec[qbase] = min(own_queue / cap, 1.0)
    neighbors = table.one_hop_ordered()
    if len(neighbors) > spec.k_max:
        log.warning(
            "node %d has %d one-hop neighbors, tracking first %d",
            table.origin,
            len(neighbors),
            spec.k_max,
        )
        neighbors = neighbors[: spec.k_max]
    for j, y in enumerate(neighbors):
        vec[qbase + 1 + j] = min(table.queue_lengths.get(y, 0) / cap, 1.0)
    return vec


def action_mask(table: NeighborTable, spec: ObservationSpec) -> np.ndarray:
    """True for action components mapped to a live one-hop neighbor."""
    mask = np.zeros(spec.k_max, dtype=bool)
    live = min(len(table.one_hop), spec.k_max)
    mask[:live] = True
    return mask


def hop_index(table: NeighborTable, prev_hop: int, spec: ObservationSpec) -> int | None:
    """Action-vector slot for a packet's previous hop, or None if untracked."""
    neighbors = table.one_hop_ordered()
    try:
        idx = neighbors.index(prev_hop)
    except ValueError:
        return None
    return idx if idx < spec.k_max else None


def decide(action: np.ndarray, mask: np.ndarray, hop_idx: int | None) -> bool:
    """Apply one sampled action vector to a packet from the given hop slot.

    Unknown hops (races between mobility and packet delivery) drop.
    """
    if hop_idx is None:
        log.debug("packet from unknown previous hop dropped")
        return False
    if not mask[hop_idx]:
        return False
    return bool(action[hop_idx])


class RewardLedger:
    """First-copy delivery bits credited to the transmitting node.

    `cumulative` never resets and is the basis for team-reward windows and
    the metrics consistency check; the per-node unread sums reset on read
    through collect_reward().
    """

    def __init__(self, node_count: int, scale: float = 1.0, weights=None):
        self.node_count = node_count
        self.scale = scale
        if weights is None:
            self.weights = np.full(node_count, 1.0 / node_count)
        else:
            w = np.asarray(weights, dtype=np.float64)
            self.weights = w / w.sum()
        self.cumulative = np.zeros(node_count, dtype=np.float64)
        self._unread = np.zeros(node_count, dtype=np.float64)

    def credit(self, node: int, bits: int) -> None:
        self.cumulative[node - 1] += bits
        self._unread[node - 1] += bits

    def total_bits(self) -> float:
        return float(self.cumulative.sum())

    def collect_reward(self, node: int, window_s: float) -> float:
        """Scaled goodput rate attributed to `node` since its last read."""
        if window_s <= 0:
            raise ValueError("window must be positive")
        bits = self._unread[node - 1]
        self._unread[node - 1] = 0.0
        return self.scale * bits / window_s

    def team_reward(self, before: np.ndarray, after: np.ndarray, window_s: float) -> float:
        """Weighted mean of the per-node goodput rates over one window."""
        if window_s <= 0.0:
            return 0.0
        rates = (after - before) / window_s
        return self.scale * float(np.dot(self.weights, rates))

    def snapshot(self) -> np.ndarray:
        return self.cumulative.copy()


@dataclass
class AgentTrajectory:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.observations)


class RolloutRecorder:
    """Collects per-agent decision records and closes reward windows.

    Rewards accrued between one decision and the next are attributed to the
    earlier decision; the episode end closes every open window.
    """

    def __init__(self, node_count: int, ledger: RewardLedger):
        self.ledger = ledger
        self.trajectories = {node: AgentTrajectory() for node in range(1, node_count + 1)}
        self._pending: dict[int, tuple[float, np.ndarray]] = {}

    def _close_window(self, node: int, now: float) -> None:
        pending = self._pending.pop(node, None)
        if pending is None:
            return
        t0, before = pending
        traj = self.trajectories[node]
        traj.rewards.append(self.ledger.team_reward(before, self.ledger.cumulative, now - t0))

    def record_decision(self, node, t, obs, action, mask, log_prob, value) -> None:
        self._close_window(node, t)
        traj = self.trajectories[node]
        traj.observations.append(obs)
        traj.actions.append(action)
        traj.masks.append(mask)
        traj.log_probs.append(log_prob)
        traj.values.append(value)
        self._pending[node] = (t, self.ledger.snapshot())

    def finish_episode(self, end_time: float) -> None:
        for node in list(self._pending):
            self._close_window(node, end_time)

    def nonempty(self) -> list[tuple[int, AgentTrajectory]]:
        return [(node, tr) for node, tr in sorted(self.trajectories.items()) if len(tr)]


class ConstantPolicy:
    """Forward every tracked component with a fixed probability.

    probability 1.0 reproduces flooding behavior, 0.0 confines delivery to
    each source's one-hop neighborhood.
    """

    def __init__(self, probability: float):
        if not 0.0 <= probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")
        self.probability = probability

    def act(self, obs: np.ndarray, mask: np.ndarray, rng) -> tuple[np.ndarray, float, float]:
        m = mask.shape[0]
        draws = rng.random(m)
        if self.probability >= 1.0:
            action = np.ones(m)
        elif self.probability <= 0.0:
            action = np.zeros(m)
        else:
            action = (draws < self.probability).astype(np.float64)
        p = np.clip(self.probability, 1e-12, 1.0 - 1e-12)
        logp = float(
            np.where(action[mask] > 0.5, np.log(p), np.log1p(-p)).sum()
        )
        return action, logp, 0.0
