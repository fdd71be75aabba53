"""Kinematic bicycle model, Stanley steering and rectangle collision."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .geometry import Route, wrap_angle

LENGTH = 4.8
WIDTH = 1.9
WHEELBASE = 2.9
LR = WHEELBASE / 2
LF = WHEELBASE / 2
MAX_ACCEL = 4.0
MAX_STEER = 0.6
STANLEY_GAIN = 2.5
STANLEY_SOFTENING = 0.1

BEHAVIORS = ("ego", "yield", "ignore", "accelerate")


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    behavior: str = "ego"
    route: Route | None = None
    target_speed: float = 0.0
    vid: int = 0
    length: float = LENGTH
    width: float = WIDTH
    # progress bookkeeping, refreshed by the environment after each move
    s: float = 0.0
    segment: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {self.behavior!r}")
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        self.heading = wrap_angle(self.heading)

    def track(self) -> None:
        """Refresh route progress from the current pose."""
        if self.route is not None:
            self.s, _, _, self.segment = self.route.project(self.x, self.y, self.segment)


def clip(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def bicycle_step(v: VehicleState, accel: float, steer: float, dt: float) -> VehicleState:
    """One Euler step of the kinematic bicycle model about the rear-axle split."""
    accel = clip(accel, -MAX_ACCEL, MAX_ACCEL)
    steer = clip(steer, -MAX_STEER, MAX_STEER)
    beta = math.atan(0.5 * math.tan(steer))
    th = v.heading + beta
    x = v.x + v.speed * math.cos(th) * dt
    y = v.y + v.speed * math.sin(th) * dt
    heading = wrap_angle(v.heading + v.speed / LR * math.sin(beta) * dt)
    speed = max(0.0, v.speed + accel * dt)
    return replace(v, x=x, y=y, heading=heading, speed=speed)


def _as_route(path) -> Route:
    if isinstance(path, Route):
        return path
    if path is None or len(path) < 2:
        raise ValueError("path needs at least two points")
    return Route(path)


def stanley_steer(v: VehicleState, path, gain: float = STANLEY_GAIN) -> float:
    """Heading error plus the cross-track term, measured at the front axle.

    A vehicle left of its path gets a negative (rightward) command.
    """
    route = _as_route(path)
    fx = v.x + LF * math.cos(v.heading)
    fy = v.y + LF * math.sin(v.heading)
    hint = v.segment if route is v.route else None
    _, lateral, path_heading, _ = route.project(fx, fy, hint)
    heading_err = wrap_angle(path_heading - v.heading)
    steer = heading_err - math.atan(gain * lateral / (v.speed + STANLEY_SOFTENING))
    return clip(steer, -MAX_STEER, MAX_STEER)


def corners(v: VehicleState):
    c, s = math.cos(v.heading), math.sin(v.heading)
    hl, hw = v.length / 2, v.width / 2
    return [(v.x + c * dx - s * dy, v.y + s * dx + c * dy)
            for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]


def overlap(a: VehicleState, b: VehicleState) -> bool:
    """Separating-axis test for two oriented rectangles."""
    reach = math.hypot(a.length, a.width) / 2 + math.hypot(b.length, b.width) / 2
    dx, dy = b.x - a.x, b.y - a.y
    if dx * dx + dy * dy > reach * reach:
        return False
    ca, cb = corners(a), corners(b)
    for h in (a.heading, b.heading):
        for ax, ay in ((math.cos(h), math.sin(h)), (-math.sin(h), math.cos(h))):
            pa = [px * ax + py * ay for px, py in ca]
            pb = [px * ax + py * ay for px, py in cb]
            if max(pa) < min(pb) or max(pb) < min(pa):
                return False
    return True
