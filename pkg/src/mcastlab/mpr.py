"""Greedy multipoint-relay selection, forwarding rules, and duplicate detection.

Selection is the classic two-phase greedy cover: two-hop nodes with a single
covering neighbor force that neighbor into the relay set, then the candidate
reaching the most still-uncovered two-hop nodes is added until everything is
covered. Ties break by the origin's circular node ordering. A brute-force
minimum-cover oracle is included for testing (the exact problem is NP-hard,
so it is guarded to small neighborhoods).
"""

from __future__ import annotations

import enum
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from itertools import combinations

from . import topology

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 20


class TooLarge(ValueError):
    """Neighborhood too large for exhaustive enumeration."""


class ForwardingMode(enum.Enum):
    FLOODING = "flooding"
    S_MPR = "s-mpr"
    NS_MPR = "ns-mpr"
    DEEP_MPR = "deep-mpr"

    @classmethod
    def from_str(cls, text: str) -> "ForwardingMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValueError(f"unknown forwarding mode {text!r}")


class Decision(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"


@dataclass
class MprState:
    """A node's chosen relays and the neighbors that chose it."""

    mpr_set: set[int] = field(default_factory=set)
    selectors: set[int] = field(default_factory=set)


class DuplicateCache:
    """Bounded seen-set of (source, sequence) pairs with FIFO + age eviction."""

    def __init__(self, capacity: int = 4096, age_limit_s: float = 30.0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.age_limit_s = age_limit_s
        self._seen: OrderedDict[tuple[int, int], float] = OrderedDict()

    def __len__(self) -> int:
        return len(self._seen)

    def contains(self, source: int, seq: int, now: float) -> bool:
        t = self._seen.get((source, seq))
        if t is None:
            return False
        if now - t > self.age_limit_s:
            del self._seen[(source, seq)]
            return False
        return True

    def insert(self, source: int, seq: int, now: float) -> None:
        key = (source, seq)
        if key in self._seen:
            self._seen.move_to_end(key)
        self._seen[key] = now
        while len(self._seen) > self.capacity:
            self._seen.popitem(last=False)

    def check_and_insert(self, source: int, seq: int, now: float) -> bool:
        """Return True if the pair was already cached, inserting it either way."""
        duplicate = self.contains(source, seq, now)
        self.insert(source, seq, now)
        return duplicate


def _psi_key(table):
    return lambda v: topology.psi_position(table.origin, v, table.n_total)


def select_mpr_detailed(table) -> tuple[set[int], set[int]]:
    """Greedy cover of the two-hop neighborhood; returns (mpr_set, uncoverable).

    Two-hop nodes with no covering one-hop neighbor (inconsistent tables,
    e.g. mid-discovery) are dropped from the coverage target and reported.
    """
    psi = _psi_key(table)
    n1 = sorted(table.one_hop, key=psi)
    cover = {z: topology.covering_neighbors(z, table) for z in table.two_hop}
    uncoverable = {z for z, ys in cover.items() if not ys}
    if uncoverable:
        log.debug(
            "node %d: two-hop nodes %s have no covering neighbor",
            table.origin,
            sorted(uncoverable),
        )
    uncovered = set(table.two_hop) - uncoverable
    reach = {y: topology.reach_set(y, table) for y in n1}

    mpr: set[int] = set()
    for z in sorted(uncovered, key=psi):
        if len(cover[z]) == 1:
            mpr.update(cover[z])
    for y in mpr:
        uncovered -= reach[y]

    while uncovered:
        best = None
        best_gain = 0
        for y in n1:
            if y in mpr:
                continue
            gain = len(reach[y] & uncovered)
            if gain > best_gain:
                best, best_gain = y, gain
        if best is None:
            break  # unreachable for consistent tables
        mpr.add(best)
        uncovered -= reach[best]
    return mpr, uncoverable


def select_mpr(table) -> set[int]:
    """Greedy MPR set covering every coverable two-hop neighbor."""
    mpr, _ = select_mpr_detailed(table)
    return mpr


def brute_force_min_mpr(table) -> set[int]:
    """Smallest one-hop subset covering all coverable two-hop nodes (test oracle).

    Candidate subsets are enumerated in circular-order lexicographic order by
    increasing size, so ties resolve deterministically.
    """
    if len(table.one_hop) > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"|N1| = {len(table.one_hop)} exceeds {BRUTE_FORCE_LIMIT}")
    psi = _psi_key(table)
    n1 = sorted(table.one_hop, key=psi)
    reach = {y: topology.reach_set(y, table) for y in n1}
    target = {z for z in table.two_hop if topology.covering_neighbors(z, table)}
    for size in range(len(n1) + 1):
        for combo in combinations(n1, size):
            covered: set[int] = set()
            for y in combo:
                covered |= reach[y]
            if target <= covered:
                return set(combo)
    return set(n1)  # unreachable: the full set always covers the target


def collect_selectors(mpr_sets: dict[int, set[int]]) -> dict[int, set[int]]:
    """Selector sets implied by everyone's announced MPR choice.

    Pure-graph form of the announcement round: K(i) contains u whenever u
    announced i in its MPR set. Inside the simulator the same information
    rides on HELLO messages instead.
    """
    selectors: dict[int, set[int]] = {v: set() for v in mpr_sets}
    for u, chosen in mpr_sets.items():
        for i in chosen:
            selectors.setdefault(i, set()).add(u)
    return selectors


def forward_decision(
    mode: ForwardingMode,
    packet,
    prev_hop: int,
    state: MprState,
    cache: DuplicateCache,
    now: float,
) -> Decision:
    """Classic forwarding rule for one received multicast packet.

    Duplicates always drop (and every first sighting is cached, whether or
    not it is relayed). Flooding relays every unique packet; S-MPR relays a
    unique packet only when the previous hop selected this node as MPR;
    NS-MPR relays every unique packet as long as anyone selected this node.
    """
    if cache.check_and_insert(packet.source, packet.seq, now):
        return Decision.DROP
    if packet.ttl <= 0:
        return Decision.DROP
    if mode is ForwardingMode.FLOODING:
        return Decision.FORWARD
    if mode is ForwardingMode.S_MPR:
        return Decision.FORWARD if prev_hop in state.selectors else Decision.DROP
    if mode is ForwardingMode.NS_MPR:
        return Decision.FORWARD if state.selectors else Decision.DROP
    raise ValueError(f"forward_decision does not handle mode {mode}")
