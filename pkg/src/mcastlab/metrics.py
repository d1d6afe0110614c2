"""Goodput, throughput, overhead-ratio, and delivery-ratio accounting.

Conventions: a node is never a receiver of packets it originated, so
receptions of a packet at its own source count toward nothing. Goodput is
first-copy bits at the remaining nodes; throughput additionally counts
duplicate copies. HELLO traffic is excluded from both and reported in a
separate control-bits column.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

CSV_COLUMNS = (
    "time_s",
    "offered_bits",
    "goodput_bits",
    "throughput_bits",
    "tx_count",
    "dup_rx_count",
    "control_bits",
    "queue_drops",
)


class ZeroGoodput(ValueError):
    """Overhead ratio is undefined when nothing was delivered."""


@dataclass
class WindowRow:
    time_s: float
    offered_bits: int = 0
    goodput_bits: int = 0
    throughput_bits: int = 0
    tx_count: int = 0
    dup_rx_count: int = 0
    control_bits: int = 0
    queue_drops: int = 0


@dataclass
class EpisodeTrace:
    """Per-window metric rows plus episode identifiers and totals."""

    scenario_name: str
    seed: int
    mode: str
    duration_s: float
    window_s: float
    node_count: int
    rows: list[WindowRow] = field(default_factory=list)
    queue_drops_by_node: dict[int, int] = field(default_factory=dict)
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def receiver_count(self) -> int:
        # Every node except a packet's own source is a multicast receiver.
        return self.node_count - 1

    def _total(self, name: str) -> int:
        return sum(getattr(row, name) for row in self.rows)

    @property
    def offered_bits(self) -> int:
        return self._total("offered_bits")

    @property
    def goodput_bits(self) -> int:
        return self._total("goodput_bits")

    @property
    def throughput_bits(self) -> int:
        return self._total("throughput_bits")

    @property
    def tx_count(self) -> int:
        return self._total("tx_count")

    @property
    def dup_rx_count(self) -> int:
        return self._total("dup_rx_count")

    @property
    def control_bits(self) -> int:
        return self._total("control_bits")

    @property
    def queue_drops(self) -> int:
        return self._total("queue_drops")

    def goodput_bps(self) -> float:
        return self.goodput_bits / self.duration_s

    def throughput_bps(self) -> float:
        return self.throughput_bits / self.duration_s

    def overhead_ratio(self) -> float:
        """Throughput-to-goodput ratio (>= 1; duplicates inflate it)."""
        if self.goodput_bits == 0:
            raise ZeroGoodput("no first-copy deliveries in episode")
        return self.throughput_bits / self.goodput_bits

    def gp_over_thr(self) -> float:
        """Reciprocal goodput-to-throughput ratio, emitted alongside."""
        if self.throughput_bits == 0:
            raise ZeroGoodput("no receptions in episode")
        return self.goodput_bits / self.throughput_bits

    def delivery_ratio(self) -> float:
        """Delivered fraction of the deliverable goodput, in [0, 1]."""
        if self.offered_bits == 0:
            raise ValueError("delivery ratio undefined with no offered traffic")
        return self.goodput_bits / (self.offered_bits * self.receiver_count)

    def to_csv_text(self) -> str:
        out = io.StringIO()
        out.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.rows:
            out.write(
                f"{row.time_s!r},{row.offered_bits},{row.goodput_bits},"
                f"{row.throughput_bits},{row.tx_count},{row.dup_rx_count},"
                f"{row.control_bits},{row.queue_drops}\n"
            )
        return out.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv_text())


class MetricsAccumulator:
    """Event-driven accumulator the engine feeds during one episode."""

    def __init__(
        self,
        scenario_name: str,
        seed: int,
        mode: str,
        duration_s: float,
        window_s: float,
        node_count: int,
    ):
        if duration_s <= 0 or window_s <= 0:
            raise ValueError("duration and window must be positive")
        self.duration_s = duration_s
        self.window_s = window_s
        n_windows = max(1, math.ceil(duration_s / window_s - 1e-9))
        self.rows = [WindowRow(time_s=k * window_s) for k in range(n_windows)]
        self.queue_drops_by_node: dict[int, int] = {}
        self.extras: dict[str, float] = {}
        self._trace = EpisodeTrace(
            scenario_name=scenario_name,
            seed=seed,
            mode=mode,
            duration_s=duration_s,
            window_s=window_s,
            node_count=node_count,
            rows=self.rows,
            queue_drops_by_node=self.queue_drops_by_node,
            extras=self.extras,
        )

    def _row(self, t: float) -> WindowRow:
        idx = int(t / self.window_s)
        if idx >= len(self.rows):
            idx = len(self.rows) - 1
        return self.rows[idx]

    def on_offered(self, t: float, bits: int) -> None:
        self._row(t).offered_bits += bits

    def on_data_rx(self, t: float, bits: int, duplicate: bool) -> None:
        row = self._row(t)
        row.throughput_bits += bits
        if duplicate:
            row.dup_rx_count += 1
        else:
            row.goodput_bits += bits

    def on_data_tx(self, t: float) -> None:
        self._row(t).tx_count += 1

    def on_control_tx(self, t: float, bits: int) -> None:
        self._row(t).control_bits += bits

    def on_queue_drop(self, t: float, node: int) -> None:
        self._row(t).queue_drops += 1
        self.queue_drops_by_node[node] = self.queue_drops_by_node.get(node, 0) + 1

    def finalize(self) -> EpisodeTrace:
        return self._trace


def goodput(trace: EpisodeTrace) -> float:
    """Aggregate first-copy bits per second over the episode."""
    return trace.goodput_bps()


def overhead_ratio(trace: EpisodeTrace) -> float:
    return trace.overhead_ratio()


def delivery_ratio(trace: EpisodeTrace) -> float:
    return trace.delivery_ratio()


def write_summary_csv(path, rows: list[dict], columns: list[str]) -> None:
    """Write aggregate experiment rows with a fixed column order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                val = row.get(col, "")
                cells.append(repr(val) if isinstance(val, float) else str(val))
            fh.write(",".join(cells) + "\n")
