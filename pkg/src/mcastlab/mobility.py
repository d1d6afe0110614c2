"""Gauss-Markov node mobility with mirrored boundaries on a square arena.

The update is the first-order autoregressive form: speed and direction each
keep a fraction alpha of their previous value, revert toward a per-node mean,
and pick up scaled white noise. Positions that leave the arena are folded
back in and the heading is reflected about the violated axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi


@dataclass
class MobilityState:
    x: float
    y: float
    speed: float
    direction: float
    mean_speed: float
    mean_direction: float
    alpha: float = 0.75
    speed_sigma: float = 0.5
    direction_sigma: float = 0.4


def _mirror(x: float, y: float, direction: float, side: float) -> tuple[float, float, float]:
    # Fold until inside; a single long step may cross more than one border.
    while True:
        if x < 0.0:
            x = -x
            direction = math.pi - direction
        elif x > side:
            x = 2.0 * side - x
            direction = math.pi - direction
        elif y < 0.0:
            y = -y
            direction = -direction
        elif y > side:
            y = 2.0 * side - y
            direction = -direction
        else:
            return x, y, direction % TWO_PI


def step(state: MobilityState, dt: float, noise: tuple[float, float], side: float) -> MobilityState:
    """Advance one mobility tick.

    `noise` supplies the two standard-normal draws so the caller owns the
    random stream. Negative speeds produced by the noise term clamp to 0.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    a = state.alpha
    if not 0.0 <= a <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    drift = math.sqrt(max(0.0, 1.0 - a * a))
    speed = a * state.speed + (1.0 - a) * state.mean_speed + drift * state.speed_sigma * noise[0]
    if speed < 0.0:
        speed = 0.0
    direction = (
        a * state.direction
        + (1.0 - a) * state.mean_direction
        + drift * state.direction_sigma * noise[1]
    )
    x = state.x + speed * dt * math.cos(direction)
    y = state.y + speed * dt * math.sin(direction)
    x, y, direction = _mirror(x, y, direction, side)
    return replace(state, x=x, y=y, speed=speed, direction=direction)


def place_initial(
    n: int,
    side: float,
    rng,
    mean_speed_range: tuple[float, float] = (1.0, 1.0),
    alpha: float = 0.75,
    speed_sigma: float = 0.5,
    direction_sigma: float = 0.4,
) -> list[MobilityState]:
    """Uniform initial placement; per-node mean speed drawn once from the range.

    Initial direction is uniform over [0, 2*pi) and doubles as the node's
    mean direction; initial speed equals the node's mean speed. Draw order
    per node is fixed (x, y, direction, mean speed) for reproducibility.
    """
    if n < 1:
        raise ValueError("need at least one node")
    if side <= 0.0:
        raise ValueError("arena side must be positive")
    lo, hi = mean_speed_range
    states = []
    for _ in range(n):
        x = rng.uniform(0.0, side)
        y = rng.uniform(0.0, side)
        direction = rng.uniform(0.0, TWO_PI)
        mean_speed = float(rng.uniform(lo, hi))
        states.append(
            MobilityState(
                x=x,
                y=y,
                speed=mean_speed,
                direction=direction,
                mean_speed=mean_speed,
                mean_direction=direction,
                alpha=alpha,
                speed_sigma=speed_sigma,
                direction_sigma=direction_sigma,
            )
        )
    return states
