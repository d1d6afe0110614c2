"""Neighbor-set algebra and link-matrix ordering for two-hop relay selection.

Pure functions over neighbor tables: the circular node ordering used to
break selection ties, the "which one-hop neighbors cover a two-hop node"
query, and its dual "which two-hop nodes does a one-hop neighbor reach".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnknownNode(KeyError):
    """Queried node is not in the neighbor set the operation expects."""


def circular_permutation(i: int, n: int) -> list[int]:
    """Node ordering [i, i+1, ..., n, 1, ..., i-1] over dense ids 1..n."""
    if not 1 <= i <= n:
        raise ValueError(f"node id {i} outside 1..{n}")
    return list(range(i, n + 1)) + list(range(1, i))


def psi_position(origin: int, node: int, n: int) -> int:
    """Index of `node` in circular_permutation(origin, n); origin maps to 0."""
    return (node - origin) % n


def local_ordering(origin: int, members, n: int) -> list[int]:
    """circular_permutation(origin, n) restricted to `members` (origin first).

    Relative order from the global permutation is preserved, so the first
    entry is always `origin` when origin is a member.
    """
    keep = set(members)
    keep.add(origin)
    return sorted(keep, key=lambda v: psi_position(origin, v, n))


@dataclass
class LinkMatrix:
    """Binary adjacency with an explicit row/column node ordering.

    entries[a, b] == 1 iff a link between ordering[a] and ordering[b] is
    known. Diagonal is zero.
    """

    entries: np.ndarray
    ordering: list[int]

    def __post_init__(self) -> None:
        k = len(self.ordering)
        if self.entries.shape != (k, k):
            raise ValueError("entries shape does not match ordering length")

    def index_of(self, node: int) -> int:
        try:
            return self.ordering.index(node)
        except ValueError:
            raise UnknownNode(node) from None


def matrix_from_adjacency(adjacency: dict[int, set[int]], ordering: list[int]) -> LinkMatrix:
    """Materialize a LinkMatrix from an adjacency map under a given ordering."""
    k = len(ordering)
    idx = {v: j for j, v in enumerate(ordering)}
    entries = np.zeros((k, k), dtype=np.uint8)
    for a, nbrs in adjacency.items():
        if a not in idx:
            continue
        for b in nbrs:
            if b in idx and b != a:
                entries[idx[a], idx[b]] = 1
    return LinkMatrix(entries, list(ordering))


def covering_neighbors(z: int, table) -> set[int]:
    """One-hop neighbors of the table's origin with a known link to two-hop node z."""
    if z not in table.two_hop:
        raise UnknownNode(z)
    adj_z = table.adjacency.get(z, frozenset())
    return {y for y in table.one_hop if y in adj_z}


def reach_set(y: int, table) -> set[int]:
    """Two-hop nodes adjacent to one-hop neighbor y in the local link matrix."""
    if y not in table.one_hop:
        raise UnknownNode(y)
    return table.adjacency.get(y, set()) & table.two_hop
