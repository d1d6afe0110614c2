"""Deterministic discrete-event simulator for multicast forwarding episodes.

One binary-heap event queue drives the whole episode; ties dispatch in
(kind rank, node id, insertion order). A single root seed splits into
per-subsystem random streams (mobility, radio loss, flows, policy sampling,
HELLO jitter) so ablations that change one subsystem leave the others'
draws untouched. Identical (scenario, seed) pairs replay bit-identically.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from . import rlenv
from .config import ScenarioConfig, validate
from .metrics import EpisodeTrace, MetricsAccumulator
from .mobility import MobilityState, place_initial, step as mobility_step
from .mpr import Decision, DuplicateCache, ForwardingMode, MprState, forward_decision, select_mpr
from .radio import HelloMessage, HelloRecord, RadioModel, build_table, hello_gap


class PastEvent(ValueError):
    """An event was scheduled before the current simulation time."""


class EventKind:
    """Event ranks; equal-time events dispatch in this order."""

    TX_START = 0
    RX_COMPLETE = 1
    HELLO_DUE = 2
    MOBILITY_TICK = 3
    FLOW_ARRIVAL = 4
    EPISODE_END = 5


KIND_NAMES = {
    EventKind.TX_START: "TxStart",
    EventKind.RX_COMPLETE: "RxComplete",
    EventKind.HELLO_DUE: "HelloDue",
    EventKind.MOBILITY_TICK: "MobilityTick",
    EventKind.FLOW_ARRIVAL: "FlowArrival",
    EventKind.EPISODE_END: "EpisodeEnd",
}


@dataclass
class Event:
    time: float
    kind: int
    node: int = 0
    payload: object = None


@dataclass
class Clock:
    now: float = 0.0
    episode_length: float = 100.0


class EventQueue:
    """Heap-ordered queue with deterministic tie-breaking."""

    def __init__(self) -> None:
        self._heap: list = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, kind: int, node: int = 0, payload=None, *, now: float = 0.0) -> None:
        if time < now:
            raise PastEvent(f"event at t={time} scheduled at now={now}")
        heappush(self._heap, (time, kind, node, self._seq, payload))
        self._seq += 1

    def pop_raw(self) -> tuple:
        return heappop(self._heap)

    def pop(self) -> Event:
        time, kind, node, _, payload = heappop(self._heap)
        return Event(time, kind, node, payload)

    def peek_time(self) -> float:
        return self._heap[0][0]


@dataclass(frozen=True)
class Packet:
    """Multicast datagram identified by (source, seq); ttl counts remaining relays."""

    source: int
    seq: int
    size_bytes: int
    ttl: int


@dataclass
class RandomStreams:
    mobility: np.random.Generator
    radio: np.random.Generator
    flows: np.random.Generator
    policy: np.random.Generator
    hello: np.random.Generator


_STREAM_NAMES = ("mobility", "radio", "flows", "policy", "hello")


def derive_streams(seed: int, overrides: dict[str, int | None] | None = None) -> RandomStreams:
    """Split one root seed into independent per-subsystem generators."""
    children = np.random.SeedSequence(seed).spawn(len(_STREAM_NAMES))
    gens = {}
    for name, child in zip(_STREAM_NAMES, children):
        override = (overrides or {}).get(name)
        if override is not None:
            child = np.random.SeedSequence(override)
        gens[name] = np.random.Generator(np.random.PCG64(child))
    return RandomStreams(**gens)


class _NodeRuntime:
    __slots__ = (
        "nid",
        "mob",
        "data_queue",
        "ctrl_queue",
        "tx_scheduled",
        "busy_until",
        "heard",
        "table",
        "mpr_state",
        "dup_cache",
        "metrics_seen",
        "seq_counter",
        "next_expiry",
        "topo_sig",
    )

    def __init__(self, nid: int, mob: MobilityState, scenario: ScenarioConfig):
        self.nid = nid
        self.mob = mob
        self.data_queue: deque[Packet] = deque()
        self.ctrl_queue: deque[HelloMessage] = deque()
        self.tx_scheduled = False
        self.busy_until = 0.0
        self.heard: dict[int, HelloRecord] = {}
        self.table = build_table(nid, scenario.node_count, {}, 0.0, scenario.expiry_s)
        self.mpr_state = MprState()
        self.dup_cache = DuplicateCache(scenario.dup_cache_capacity, scenario.dup_cache_age_s)
        self.metrics_seen: set[tuple[int, int]] = set()
        self.seq_counter = 0
        self.next_expiry = math.inf
        self.topo_sig = self.table.topology_signature()


class Simulator:
    """One episode of one scenario; single-threaded, isolated, replayable."""

    def __init__(
        self,
        scenario: ScenarioConfig,
        seed: int | None = None,
        policy=None,
        record_rollout: bool = False,
        collect_event_log: bool = False,
    ):
        scenario = validate(scenario)
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.mode = scenario.forwarding_mode
        if self.mode is ForwardingMode.DEEP_MPR and policy is None:
            raise ValueError("deep-mpr mode needs a forwarding policy")
        self.policy = policy
        self.radio = RadioModel(scenario.full_range_m, scenario.max_range_m, scenario.link_rate_bps)
        self.streams = derive_streams(
            self.seed,
            {
                "mobility": scenario.seed_mobility,
                "radio": scenario.seed_radio,
                "flows": scenario.seed_flows,
                "policy": scenario.seed_policy,
                "hello": scenario.seed_hello,
            },
        )
        self.clock = Clock(0.0, scenario.episode_length_s)
        self.events = EventQueue()
        self.metrics = MetricsAccumulator(
            scenario.name,
            self.seed,
            scenario.mode,
            scenario.episode_length_s,
            scenario.metrics_window_s,
            scenario.node_count,
        )
        self.ledger = rlenv.RewardLedger(
            scenario.node_count, scenario.reward_scale, scenario.reward_weights
        )
        self.obs_spec = rlenv.ObservationSpec(scenario.obs_n_max, scenario.obs_k_max)
        self.recorder = (
            rlenv.RolloutRecorder(scenario.node_count, self.ledger) if record_rollout else None
        )
        self.event_log: list[tuple] | None = [] if collect_event_log else None
        self._ended = False
        self._offered_packets = 0
        self._unknown_hop_drops = 0
        self._decisions = 0
        self._distinct_tx: set[tuple[int, int]] = set()
        self._airtime_hello = self.radio.airtime_s(scenario.hello_frame_bytes)
        self._airtime_data = self.radio.airtime_s(scenario.packet_bytes)

        self.nodes = {
            nid: _NodeRuntime(nid, mob, scenario)
            for nid, mob in enumerate(self._initial_states(), start=1)
        }
        self._schedule_initial_events()

    # -- setup ---------------------------------------------------------

    def _initial_states(self) -> list[MobilityState]:
        sc = self.scenario
        rng = self.streams.mobility
        if sc.placement == "fixed":
            states = []
            for x, y in sc.positions:
                direction = rng.uniform(0.0, 2.0 * math.pi)
                mean_speed = float(rng.uniform(sc.mean_speed_min_mps, sc.mean_speed_max_mps))
                states.append(
                    MobilityState(
                        x=x,
                        y=y,
                        speed=mean_speed,
                        direction=direction,
                        mean_speed=mean_speed,
                        mean_direction=direction,
                        alpha=sc.mobility_alpha,
                        speed_sigma=sc.speed_sigma_mps,
                        direction_sigma=sc.direction_sigma_rad,
                    )
                )
            return states
        return place_initial(
            sc.node_count,
            sc.arena_side_m,
            rng,
            (sc.mean_speed_min_mps, sc.mean_speed_max_mps),
            sc.mobility_alpha,
            sc.speed_sigma_mps,
            sc.direction_sigma_rad,
        )

    def _schedule_initial_events(self) -> None:
        sc = self.scenario
        push = self.events.push
        push(sc.mobility_tick_s, EventKind.MOBILITY_TICK)
        for nid in range(1, sc.node_count + 1):
            first = float(self.streams.hello.uniform(0.0, sc.hello_interval_max_s))
            push(first, EventKind.HELLO_DUE, nid)
        if sc.flow_source_mode == "per-source":
            for src in sorted(sc.flow_sources):
                t = sc.flow_start_s + self._arrival_gap(sc.flow_rate_pps)
                if t <= sc.flow_stop:
                    push(t, EventKind.FLOW_ARRIVAL, src, src)
        else:
            rate = sc.flow_rate_pps * len(sc.flow_sources)
            t = sc.flow_start_s + self._arrival_gap(rate)
            if t <= sc.flow_stop:
                push(t, EventKind.FLOW_ARRIVAL, 0, None)
        push(sc.episode_length_s, EventKind.EPISODE_END)

    def _arrival_gap(self, rate_pps: float) -> float:
        if self.scenario.flow_arrival == "deterministic":
            return 1.0 / rate_pps
        return float(self.streams.flows.exponential(1.0 / rate_pps))

    # -- public surface ------------------------------------------------

    def schedule(self, event: Event) -> None:
        """Enqueue an event; PastEvent if it targets a time before now."""
        self.events.push(event.time, event.kind, event.node, event.payload, now=self.clock.now)

    def run_until(self, t: float) -> None:
        self._loop(until=t)

    def run(self) -> EpisodeTrace:
        self._loop(until=None)
        return self._finalize()

    def trajectories(self):
        if self.recorder is None:
            raise ValueError("simulator was not recording rollouts")
        return self.recorder.nonempty()

    # -- event loop ----------------------------------------------------

    def _loop(self, until: float | None) -> None:
        events = self.events
        clock = self.clock
        while not self._ended and len(events):
            if until is not None and events.peek_time() > until:
                clock.now = until
                return
            time, kind, node, _, payload = events.pop_raw()
            clock.now = time
            if kind == EventKind.TX_START:
                self._on_tx_start(node)
            elif kind == EventKind.RX_COMPLETE:
                self._on_rx_complete(node, payload)
            elif kind == EventKind.HELLO_DUE:
                self._on_hello_due(node)
            elif kind == EventKind.MOBILITY_TICK:
                self._on_mobility_tick()
            elif kind == EventKind.FLOW_ARRIVAL:
                self._on_flow_arrival(payload)
            else:  # EPISODE_END
                self._ended = True
                clock.now = self.clock.episode_length

    def _finalize(self) -> EpisodeTrace:
        end = self.clock.episode_length
        if self.recorder is not None:
            self.recorder.finish_episode(end)
        trace = self.metrics.finalize()
        trace.extras["offered_packets"] = self._offered_packets
        trace.extras["distinct_packets_tx"] = len(self._distinct_tx)
        trace.extras["unknown_hop_drops"] = self._unknown_hop_drops
        trace.extras["decisions"] = self._decisions
        trace.extras["reward_bits"] = self.ledger.total_bits()
        return trace

    # -- transmission path ---------------------------------------------

    def _try_schedule_tx(self, nr: _NodeRuntime) -> None:
        if nr.tx_scheduled:
            return
        nr.tx_scheduled = True
        t = nr.busy_until if nr.busy_until > self.clock.now else self.clock.now
        self.events.push(t, EventKind.TX_START, nr.nid)

    def _enqueue_data(self, nr: _NodeRuntime, packet: Packet) -> None:
        if len(nr.data_queue) >= self.scenario.queue_capacity:
            self.metrics.on_queue_drop(self.clock.now, nr.nid)
            return
        nr.data_queue.append(packet)
        self._try_schedule_tx(nr)

    def _on_tx_start(self, node: int) -> None:
        nr = self.nodes[node]
        now = self.clock.now
        if nr.ctrl_queue:
            payload = nr.ctrl_queue.popleft()
            is_hello = True
            airtime = self._airtime_hello
            self.metrics.on_control_tx(now, self.scenario.hello_frame_bytes * 8)
        elif nr.data_queue:
            payload = nr.data_queue.popleft()
            is_hello = False
            airtime = self._airtime_data
            self.metrics.on_data_tx(now)
            self._distinct_tx.add((payload.source, payload.seq))
        else:
            nr.tx_scheduled = False
            return
        nr.busy_until = now + airtime
        if self.event_log is not None and not is_hello:
            self.event_log.append(("tx", now, node, payload.source, payload.seq))
        self._broadcast(nr, payload, is_hello, now + airtime)
        if nr.ctrl_queue or nr.data_queue:
            self.events.push(nr.busy_until, EventKind.TX_START, node)
        else:
            nr.tx_scheduled = False

    def _broadcast(self, nr: _NodeRuntime, payload, is_hello: bool, arrival: float) -> None:
        x0 = nr.mob.x
        y0 = nr.mob.y
        full_sq = self.radio.full_range_m * self.radio.full_range_m
        max_sq = self.radio.max_range_m * self.radio.max_range_m
        span = self.radio.max_range_m - self.radio.full_range_m
        rng = self.streams.radio
        push = self.events.push
        sender = nr.nid
        for j in range(1, self.scenario.node_count + 1):
            if j == sender:
                continue
            mob = self.nodes[j].mob
            dx = mob.x - x0
            dy = mob.y - y0
            d_sq = dx * dx + dy * dy
            if d_sq > max_sq:
                continue
            if d_sq <= full_sq:
                p = 1.0
            else:
                p = (self.radio.max_range_m - math.sqrt(d_sq)) / span
            if rng.random() < p:
                push(arrival, EventKind.RX_COMPLETE, j, (sender, is_hello, payload))

    # -- reception path --------------------------------------------------

    def _on_rx_complete(self, node: int, frame: tuple) -> None:
        sender, is_hello, payload = frame
        if is_hello:
            self._on_hello_rx(node, sender, payload)
        else:
            self._on_data_rx(node, sender, payload)

    def _on_data_rx(self, node: int, sender: int, pkt: Packet) -> None:
        nr = self.nodes[node]
        now = self.clock.now
        bits = pkt.size_bytes * 8
        key = (pkt.source, pkt.seq)
        if pkt.source != node:
            duplicate = key in nr.metrics_seen
            self.metrics.on_data_rx(now, bits, duplicate)
            if not duplicate:
                nr.metrics_seen.add(key)
                self.ledger.credit(sender, bits)
            if self.event_log is not None:
                self.event_log.append(("rx", now, node, sender, pkt.source, pkt.seq, duplicate))
        if self.mode is not ForwardingMode.DEEP_MPR:
            decision = forward_decision(self.mode, pkt, sender, nr.mpr_state, nr.dup_cache, now)
            if decision is Decision.FORWARD:
                self._enqueue_data(nr, Packet(pkt.source, pkt.seq, pkt.size_bytes, pkt.ttl - 1))
            return
        # deep-mpr: consult the stochastic policy once per unique packet
        if nr.dup_cache.check_and_insert(pkt.source, pkt.seq, now):
            return
        if pkt.ttl <= 0:
            return
        hop_idx = rlenv.hop_index(nr.table, sender, self.obs_spec)
        if hop_idx is None:
            self._unknown_hop_drops += 1
            return
        obs = rlenv.observe(
            nr.table, len(nr.data_queue), self.scenario.queue_capacity, self.obs_spec
        )
        mask = rlenv.action_mask(nr.table, self.obs_spec)
        action, log_prob, value = self.policy.act(obs, mask, self.streams.policy)
        self._decisions += 1
        if self.recorder is not None:
            self.recorder.record_decision(node, now, obs, action, mask, log_prob, value)
        if rlenv.decide(action, mask, hop_idx):
            self._enqueue_data(nr, Packet(pkt.source, pkt.seq, pkt.size_bytes, pkt.ttl - 1))

    # -- discovery --------------------------------------------------------

    def _on_hello_due(self, node: int) -> None:
        nr = self.nodes[node]
        sc = self.scenario
        msg = HelloMessage(
            sender=node,
            neighbor_list=tuple(nr.table.one_hop_ordered()),
            queue_length=len(nr.data_queue),
            mpr_set=tuple(sorted(nr.mpr_state.mpr_set)),
        )
        nr.ctrl_queue.append(msg)
        self._try_schedule_tx(nr)
        gap = hello_gap(self.streams.hello, sc.hello_interval_min_s, sc.hello_interval_max_s)
        self.events.push(self.clock.now + gap, EventKind.HELLO_DUE, node)

    def _on_hello_rx(self, node: int, sender: int, msg: HelloMessage) -> None:
        nr = self.nodes[node]
        nr.heard[sender] = HelloRecord(
            heard_at=self.clock.now,
            neighbor_list=msg.neighbor_list,
            queue_length=msg.queue_length,
            announces_me=node in msg.mpr_set,
        )
        self._refresh_tables(nr)

    def _refresh_tables(self, nr: _NodeRuntime) -> None:
        now = self.clock.now
        expiry = self.scenario.expiry_s
        stale = [u for u, rec in nr.heard.items() if now - rec.heard_at > expiry]
        for u in stale:
            del nr.heard[u]
        table = build_table(
            nr.nid, self.scenario.node_count, nr.heard, now, expiry, len(nr.data_queue)
        )
        nr.table = table
        nr.mpr_state.selectors = {u for u in table.one_hop if nr.heard[u].announces_me}
        sig = table.topology_signature()
        if sig != nr.topo_sig:
            nr.topo_sig = sig
            nr.mpr_state.mpr_set = select_mpr(table)
        if nr.heard:
            nr.next_expiry = min(rec.heard_at for rec in nr.heard.values()) + expiry
        else:
            nr.next_expiry = math.inf

    # -- mobility ---------------------------------------------------------

    def _on_mobility_tick(self) -> None:
        sc = self.scenario
        now = self.clock.now
        n = sc.node_count
        noise = self.streams.mobility.standard_normal((n, 2))
        for idx in range(n):
            nr = self.nodes[idx + 1]
            nr.mob = mobility_step(
                nr.mob, sc.mobility_tick_s, (noise[idx, 0], noise[idx, 1]), sc.arena_side_m
            )
        for nr in self.nodes.values():
            if now >= nr.next_expiry:
                self._refresh_tables(nr)
        self.events.push(now + sc.mobility_tick_s, EventKind.MOBILITY_TICK)

    # -- traffic ----------------------------------------------------------

    def _on_flow_arrival(self, src) -> None:
        sc = self.scenario
        now = self.clock.now
        if sc.flow_max_packets and self._offered_packets >= sc.flow_max_packets:
            return
        if src is None:
            sources = sc.flow_sources
            origin = sources[int(self.streams.flows.integers(0, len(sources)))]
            rate = sc.flow_rate_pps * len(sources)
        else:
            origin = src
            rate = sc.flow_rate_pps
        nr = self.nodes[origin]
        packet = Packet(origin, nr.seq_counter, sc.packet_bytes, sc.flow_ttl)
        nr.seq_counter += 1
        self._offered_packets += 1
        self.metrics.on_offered(now, sc.packet_bits)
        nr.metrics_seen.add((packet.source, packet.seq))
        nr.dup_cache.insert(packet.source, packet.seq, now)
        self._enqueue_data(nr, packet)
        next_t = now + self._arrival_gap(rate)
        if next_t <= sc.flow_stop:
            self.events.push(next_t, EventKind.FLOW_ARRIVAL, 0 if src is None else src, src)


def run_episode(scenario: ScenarioConfig, seed: int, policy=None) -> EpisodeTrace:
    """Run one full episode; identical (scenario, seed) pairs give identical traces."""
    return Simulator(scenario, seed, policy=policy).run()
