"""Scenario configuration: flat dotted key-value text, validation, round-trip.

Config files are diff-friendly `section.key = value` lines; `#` starts a
comment. Every key has a default, so an empty file is a valid scenario.
Validation reports all offending fields at once with their dotted paths.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Any

from .mpr import ForwardingMode

MODES = tuple(m.value for m in ForwardingMode)
ARRIVALS = ("poisson", "deterministic")
SOURCE_MODES = ("per-source", "uniform")
PLACEMENTS = ("uniform", "fixed")


class ConfigError(Exception):
    """One or more invalid config fields, each with its dotted path."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("config", errors)]
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {reason}" for path, reason in self.errors))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    node_count: int = 15
    arena_side_m: float = 550.0
    episode_length_s: float = 100.0
    metrics_window_s: float = 1.0
    mode: str = "flooding"
    checkpoint: str | None = None
    seed: int = 1
    placement: str = "uniform"
    positions: tuple[tuple[float, float], ...] | None = None

    mobility_alpha: float = 0.75
    speed_sigma_mps: float = 0.5
    direction_sigma_rad: float = 0.4
    mobility_tick_s: float = 0.1
    mean_speed_min_mps: float = 1.0
    mean_speed_max_mps: float = 1.0

    full_range_m: float = 200.0
    max_range_m: float = 250.0
    link_rate_bps: float = 1_000_000.0

    hello_interval_min_s: float = 0.25
    hello_interval_max_s: float = 0.75
    hello_frame_bytes: int = 64
    neighbor_expiry_s: float | None = None

    flow_sources: tuple[int, ...] = (1,)
    flow_rate_pps: float = 2.0
    packet_bytes: int = 256
    flow_ttl: int = 255
    flow_arrival: str = "poisson"
    flow_source_mode: str = "per-source"
    flow_start_s: float = 5.0
    flow_stop_s: float | None = None
    flow_max_packets: int = 0

    queue_capacity: int = 64
    dup_cache_age_s: float = 30.0
    dup_cache_capacity: int = 4096

    obs_n_max: int = 32
    obs_k_max: int = 24
    reward_scale: float = 1.0
    reward_weights: tuple[float, ...] | None = None

    seed_mobility: int | None = None
    seed_radio: int | None = None
    seed_flows: int | None = None
    seed_policy: int | None = None
    seed_hello: int | None = None

    @property
    def forwarding_mode(self) -> ForwardingMode:
        return ForwardingMode.from_str(self.mode)

    @property
    def expiry_s(self) -> float:
        if self.neighbor_expiry_s is not None:
            return self.neighbor_expiry_s
        return 3.0 * self.hello_interval_max_s

    @property
    def flow_stop(self) -> float:
        return self.episode_length_s if self.flow_stop_s is None else self.flow_stop_s

    @property
    def packet_bits(self) -> int:
        return self.packet_bytes * 8

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        return replace(self, **kwargs)


def _fmt_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(f"{x!r}:{y!r}" for x, y in value)
        return ",".join(_fmt_value(v) for v in value)
    return str(value)


def _parse_int(text: str) -> int:
    return int(text, 0)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_str(text: str) -> str:
    return text


def _parse_opt(parser):
    def inner(text: str):
        return None if text.lower() in ("none", "") else parser(text)

    return inner


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_weights(text: str):
    if text.lower() in ("uniform", "none", ""):
        return None
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_positions(text: str):
    if text.lower() in ("none", ""):
        return None
    pairs = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        x, y = chunk.split(":")
        pairs.append((float(x), float(y)))
    return tuple(pairs)


# (dotted key, dataclass attribute, parser)
SCHEMA = [
    ("scenario.name", "name", _parse_str),
    ("scenario.node_count", "node_count", _parse_int),
    ("scenario.arena_side_m", "arena_side_m", _parse_float),
    ("scenario.episode_length_s", "episode_length_s", _parse_float),
    ("scenario.metrics_window_s", "metrics_window_s", _parse_float),
    ("scenario.mode", "mode", _parse_str),
    ("scenario.checkpoint", "checkpoint", _parse_opt(_parse_str)),
    ("scenario.seed", "seed", _parse_int),
    ("scenario.placement", "placement", _parse_str),
    ("scenario.positions", "positions", _parse_positions),
    ("mobility.alpha", "mobility_alpha", _parse_float),
    ("mobility.speed_sigma_mps", "speed_sigma_mps", _parse_float),
    ("mobility.direction_sigma_rad", "direction_sigma_rad", _parse_float),
    ("mobility.tick_s", "mobility_tick_s", _parse_float),
    ("mobility.mean_speed_min_mps", "mean_speed_min_mps", _parse_float),
    ("mobility.mean_speed_max_mps", "mean_speed_max_mps", _parse_float),
    ("radio.full_range_m", "full_range_m", _parse_float),
    ("radio.max_range_m", "max_range_m", _parse_float),
    ("radio.link_rate_bps", "link_rate_bps", _parse_float),
    ("hello.interval_min_s", "hello_interval_min_s", _parse_float),
    ("hello.interval_max_s", "hello_interval_max_s", _parse_float),
    ("hello.frame_bytes", "hello_frame_bytes", _parse_int),
    ("hello.expiry_s", "neighbor_expiry_s", _parse_opt(_parse_float)),
    ("flows.sources", "flow_sources", _parse_ints),
    ("flows.rate_pps", "flow_rate_pps", _parse_float),
    ("flows.packet_bytes", "packet_bytes", _parse_int),
    ("flows.ttl", "flow_ttl", _parse_int),
    ("flows.arrival", "flow_arrival", _parse_str),
    ("flows.source_mode", "flow_source_mode", _parse_str),
    ("flows.start_s", "flow_start_s", _parse_float),
    ("flows.stop_s", "flow_stop_s", _parse_opt(_parse_float)),
    ("flows.max_packets", "flow_max_packets", _parse_int),
    ("queue.capacity_pkts", "queue_capacity", _parse_int),
    ("dup_cache.age_s", "dup_cache_age_s", _parse_float),
    ("dup_cache.capacity", "dup_cache_capacity", _parse_int),
    ("obs.n_max", "obs_n_max", _parse_int),
    ("obs.k_max", "obs_k_max", _parse_int),
    ("reward.scale", "reward_scale", _parse_float),
    ("reward.weights", "reward_weights", _parse_weights),
    ("seeds.mobility", "seed_mobility", _parse_opt(_parse_int)),
    ("seeds.radio", "seed_radio", _parse_opt(_parse_int)),
    ("seeds.flows", "seed_flows", _parse_opt(_parse_int)),
    ("seeds.policy", "seed_policy", _parse_opt(_parse_int)),
    ("seeds.hello", "seed_hello", _parse_opt(_parse_int)),
]

_KEY_TO_ATTR = {key: attr for key, attr, _ in SCHEMA}
_ATTR_TO_KEY = {attr: key for key, attr, _ in SCHEMA}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines into a raw string map."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError([(f"line {lineno}", f"expected 'key = value', got {line!r}")])
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def apply_overrides(raw: dict[str, str], pairs) -> dict[str, str]:
    """Apply `key=value` override strings on top of a raw map."""
    out = dict(raw)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError([("override", f"expected key=value, got {pair!r}")])
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _cross_checks(cfg: ScenarioConfig, errors: list) -> None:
    def bad(key: str, reason: str) -> None:
        errors.append((key, reason))

    if cfg.node_count < 1:
        bad("scenario.node_count", "must be >= 1")
    if cfg.arena_side_m <= 0:
        bad("scenario.arena_side_m", "must be positive")
    if cfg.episode_length_s <= 0:
        bad("scenario.episode_length_s", "must be positive")
    if cfg.metrics_window_s <= 0:
        bad("scenario.metrics_window_s", "must be positive")
    if cfg.mode not in MODES:
        bad("scenario.mode", f"must be one of {MODES}")
    if cfg.mode == "deep-mpr" and not cfg.checkpoint:
        bad("scenario.checkpoint", "required when scenario.mode = deep-mpr")
    if cfg.placement not in PLACEMENTS:
        bad("scenario.placement", f"must be one of {PLACEMENTS}")
    if cfg.placement == "fixed":
        if cfg.positions is None or len(cfg.positions) != cfg.node_count:
            bad("scenario.positions", f"fixed placement needs {cfg.node_count} x:y pairs")
        else:
            for idx, (x, y) in enumerate(cfg.positions):
                if not (0 <= x <= cfg.arena_side_m and 0 <= y <= cfg.arena_side_m):
                    bad("scenario.positions", f"pair {idx + 1} outside the arena")
                    break

    if not 0.0 <= cfg.mobility_alpha <= 1.0:
        bad("mobility.alpha", "must be in [0, 1]")
    if cfg.speed_sigma_mps < 0:
        bad("mobility.speed_sigma_mps", "must be >= 0")
    if cfg.direction_sigma_rad < 0:
        bad("mobility.direction_sigma_rad", "must be >= 0")
    if cfg.mobility_tick_s <= 0:
        bad("mobility.tick_s", "must be positive")
    if cfg.mean_speed_min_mps < 0 or cfg.mean_speed_max_mps < cfg.mean_speed_min_mps:
        bad("mobility.mean_speed_min_mps", "need 0 <= min <= max")

    if not 0 < cfg.full_range_m <= cfg.max_range_m:
        bad("radio.full_range_m", "need 0 < full_range <= max_range")
    if cfg.link_rate_bps <= 0:
        bad("radio.link_rate_bps", "must be positive")

    if not 0 < cfg.hello_interval_min_s <= cfg.hello_interval_max_s:
        bad("hello.interval_min_s", "need 0 < min <= max")
    if cfg.hello_frame_bytes < 1:
        bad("hello.frame_bytes", "must be >= 1")
    if cfg.neighbor_expiry_s is not None and cfg.neighbor_expiry_s <= 0:
        bad("hello.expiry_s", "must be positive")

    if not cfg.flow_sources:
        bad("flows.sources", "need at least one source node")
    else:
        if len(set(cfg.flow_sources)) != len(cfg.flow_sources):
            bad("flows.sources", "duplicate source ids")
        for src in cfg.flow_sources:
            if not 1 <= src <= cfg.node_count:
                bad("flows.sources", f"source {src} outside 1..{cfg.node_count}")
                break
    if cfg.flow_rate_pps <= 0:
        bad("flows.rate_pps", "must be positive")
    if cfg.packet_bytes < 1:
        bad("flows.packet_bytes", "must be >= 1")
    if cfg.flow_ttl < 1:
        bad("flows.ttl", "must be >= 1")
    if cfg.flow_arrival not in ARRIVALS:
        bad("flows.arrival", f"must be one of {ARRIVALS}")
    if cfg.flow_source_mode not in SOURCE_MODES:
        bad("flows.source_mode", f"must be one of {SOURCE_MODES}")
    if cfg.flow_start_s < 0 or cfg.flow_start_s >= cfg.episode_length_s:
        bad("flows.start_s", "must be in [0, episode_length)")
    if cfg.flow_stop_s is not None and not cfg.flow_start_s < cfg.flow_stop_s <= cfg.episode_length_s:
        bad("flows.stop_s", "must be in (start_s, episode_length]")
    if cfg.flow_max_packets < 0:
        bad("flows.max_packets", "must be >= 0 (0 = unlimited)")

    if cfg.queue_capacity < 1:
        bad("queue.capacity_pkts", "must be >= 1")
    if cfg.dup_cache_age_s <= 0:
        bad("dup_cache.age_s", "must be positive")
    if cfg.dup_cache_capacity < 1:
        bad("dup_cache.capacity", "must be >= 1")

    if cfg.obs_n_max < 2:
        bad("obs.n_max", "must be >= 2")
    if cfg.obs_k_max < 1:
        bad("obs.k_max", "must be >= 1")
    if cfg.reward_scale <= 0:
        bad("reward.scale", "must be positive")
    if cfg.reward_weights is not None:
        if len(cfg.reward_weights) != cfg.node_count:
            bad("reward.weights", f"need {cfg.node_count} weights or 'uniform'")
        elif min(cfg.reward_weights) < 0 or sum(cfg.reward_weights) <= 0:
            bad("reward.weights", "weights must be >= 0 with positive sum")


def validate(source: str | dict | ScenarioConfig) -> ScenarioConfig:
    """Build a fully-defaulted ScenarioConfig or raise ConfigError with all faults."""
    if isinstance(source, ScenarioConfig):
        cfg = source
        errors: list = []
    else:
        raw = parse_kv_text(source) if isinstance(source, str) else dict(source)
        errors = []
        kwargs = {}
        for key, value in raw.items():
            if key not in _KEY_TO_ATTR:
                errors.append((key, "unknown key"))
        for key, attr, parser in SCHEMA:
            if key not in raw:
                continue
            try:
                kwargs[attr] = parser(raw[key])
            except (ValueError, TypeError) as exc:
                errors.append((key, f"cannot parse {raw[key]!r}: {exc}"))
        if errors:
            raise ConfigError(errors)
        cfg = ScenarioConfig(**kwargs)
    _cross_checks(cfg, errors)
    if errors:
        raise ConfigError(errors)
    # Resolve the expiry default so the round-tripped text pins it explicitly.
    if cfg.neighbor_expiry_s is None:
        cfg = replace(cfg, neighbor_expiry_s=cfg.expiry_s)
    return cfg


def to_text(cfg: ScenarioConfig) -> str:
    """Serialize every field under its canonical dotted key."""
    lines = []
    for key, attr, _ in SCHEMA:
        lines.append(f"{key} = {_fmt_value(getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def from_file(path, overrides=()) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = parse_kv_text(fh.read())
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate(raw)


def field_names() -> list[str]:
    return [f.name for f in fields(ScenarioConfig)]
