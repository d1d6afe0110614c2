"""Range-dependent broadcast radio model and HELLO-based neighborhood discovery.

Delivery is perfectly reliable inside the full range, degrades linearly to
zero at the maximum range, and is impossible beyond it. Per-node transmit
serialization at the link rate and the actual event scheduling live in the
engine; this module owns the probability/airtime math, the HELLO message
payloads, and the construction of one-hop/two-hop neighbor tables from
heard HELLOs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import topology


@dataclass(frozen=True)
class RadioModel:
    full_range_m: float = 200.0
    max_range_m: float = 250.0
    link_rate_bps: float = 1_000_000.0

    def __post_init__(self) -> None:
        if not 0.0 < self.full_range_m <= self.max_range_m:
            raise ValueError("require 0 < full_range <= max_range")
        if self.link_rate_bps <= 0.0:
            raise ValueError("link rate must be positive")

    def delivery_probability(self, distance_m: float) -> float:
        """1 inside full range, linear ramp to 0 at max range, 0 beyond."""
        if distance_m < 0.0:
            raise ValueError("distance must be non-negative")
        if distance_m <= self.full_range_m:
            return 1.0
        if distance_m >= self.max_range_m:
            return 0.0
        span = self.max_range_m - self.full_range_m
        return (self.max_range_m - distance_m) / span

    def airtime_s(self, size_bytes: int) -> float:
        """Over-the-air transmission time of one frame."""
        return size_bytes * 8 / self.link_rate_bps


def hello_gap(rng, lo_s: float, hi_s: float) -> float:
    """Draw the delay until the next HELLO emission."""
    return float(rng.uniform(lo_s, hi_s))


@dataclass(frozen=True)
class HelloMessage:
    """One-hop broadcast advertising the sender's neighbor list.

    The sender's current data-queue length and its current MPR choice
    piggyback on the same message; receivers use the former for the queue
    observation and the latter to maintain their selector sets.
    """

    sender: int
    neighbor_list: tuple[int, ...]
    queue_length: int
    mpr_set: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.sender in self.neighbor_list:
            raise ValueError("neighbor list must exclude the sender")


@dataclass
class HelloRecord:
    """What a node remembers about the last HELLO heard from one sender."""

    heard_at: float
    neighbor_list: tuple[int, ...]
    queue_length: int
    announces_me: bool


@dataclass
class NeighborTable:
    """Local two-hop view of one node: N1, N2, adjacency, reported queues."""

    origin: int
    n_total: int
    one_hop: set[int] = field(default_factory=set)
    two_hop: set[int] = field(default_factory=set)
    adjacency: dict[int, set[int]] = field(default_factory=dict)
    queue_lengths: dict[int, int] = field(default_factory=dict)
    _ordering: list[int] | None = field(default=None, repr=False)
    _one_hop_ordered: list[int] | None = field(default=None, repr=False)

    @property
    def n_i(self) -> int:
        return len(self.one_hop | self.two_hop) + 1

    def ordering(self) -> list[int]:
        """Local node set under the origin's circular permutation, origin first."""
        if self._ordering is None:
            members = self.one_hop | self.two_hop
            self._ordering = topology.local_ordering(self.origin, members, self.n_total)
        return self._ordering

    def one_hop_ordered(self) -> list[int]:
        if self._one_hop_ordered is None:
            self._one_hop_ordered = sorted(
                self.one_hop,
                key=lambda v: topology.psi_position(self.origin, v, self.n_total),
            )
        return self._one_hop_ordered

    def link_matrix(self) -> topology.LinkMatrix:
        return topology.matrix_from_adjacency(self.adjacency, self.ordering())

    def topology_signature(self) -> tuple:
        """Hashable fingerprint of (N1, N2, links); used to detect changes."""
        edges = set()
        for a, nbrs in self.adjacency.items():
            for b in nbrs:
                edges.add((a, b) if a < b else (b, a))
        return (frozenset(self.one_hop), frozenset(self.two_hop), frozenset(edges))


def build_table(
    origin: int,
    n_total: int,
    heard: dict[int, HelloRecord],
    now: float,
    expiry_s: float,
    own_queue_length: int = 0,
) -> NeighborTable:
    """Rebuild the origin's NeighborTable from HELLOs heard within the expiry window.

    One-hop neighbors are the senders heard recently; two-hop candidates are
    the union of their advertised neighbor lists minus the one-hop set and
    the origin itself. Links are recorded symmetrically (the radio model is
    distance-based and symmetric).
    """
    one_hop = {u for u, rec in heard.items() if now - rec.heard_at <= expiry_s}
    two_hop: set[int] = set()
    for u in one_hop:
        two_hop.update(heard[u].neighbor_list)
    two_hop -= one_hop
    two_hop.discard(origin)

    adjacency: dict[int, set[int]] = {origin: set(one_hop)}
    for y in one_hop:
        adjacency.setdefault(y, set()).add(origin)
    local = one_hop | two_hop
    for u in one_hop:
        for w in heard[u].neighbor_list:
            if w != u and w != origin and w in local:
                adjacency[u].add(w)
                adjacency.setdefault(w, set()).add(u)

    queue_lengths = {origin: own_queue_length}
    for u in one_hop:
        queue_lengths[u] = heard[u].queue_length

    return NeighborTable(
        origin=origin,
        n_total=n_total,
        one_hop=one_hop,
        two_hop=two_hop,
        adjacency=adjacency,
        queue_lengths=queue_lengths,
    )


def table_from_adjacency(
    origin: int,
    adjacency: dict[int, set[int]],
    n_total: int,
    queue_lengths: dict[int, int] | None = None,
) -> NeighborTable:
    """Ground-truth NeighborTable for `origin` from a global adjacency map.

    Test and oracle helper: gives the table a converged discovery process
    would produce on a static lossless topology.
    """
    one_hop = set(adjacency.get(origin, ()))
    two_hop: set[int] = set()
    for y in one_hop:
        two_hop.update(adjacency.get(y, ()))
    two_hop -= one_hop
    two_hop.discard(origin)
    local = {origin} | one_hop | two_hop
    local_adj: dict[int, set[int]] = {}
    for a in local:
        restricted = set(adjacency.get(a, ())) & local
        restricted.discard(a)
        if restricted:
            local_adj[a] = restricted
    # Keep only links with at least one endpoint known first-hand: origin's
    # own links plus links advertised by a one-hop neighbor.
    known_adj: dict[int, set[int]] = {}
    for a, nbrs in local_adj.items():
        for b in nbrs:
            if a == origin or b == origin or a in one_hop or b in one_hop:
                known_adj.setdefault(a, set()).add(b)
                known_adj.setdefault(b, set()).add(a)
    queues = {v: 0 for v in local}
    if queue_lengths:
        queues.update({v: queue_lengths[v] for v in local if v in queue_lengths})
    return NeighborTable(
        origin=origin,
        n_total=n_total,
        one_hop=one_hop,
        two_hop=two_hop,
        adjacency=known_adj,
        queue_lengths=queues,
    )
