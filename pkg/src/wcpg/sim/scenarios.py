"""Scenario configs and the two road layouts (unprotected left turn, highway merge)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .geometry import Route, arc, join, lateral_blend, smoothstep5, straight

LANE_WIDTH = 3.7
SUCCESS_RADIUS = 2.0
CONFLICT_RADIUS = 2.8  # ego waypoint this close to an agent lane marks the conflict point


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "left_turn"
    scale: float = 240.0
    ego_init_speed_range: tuple = (5.0, 20.0)
    agent_speed_range: tuple = (10.0, 20.0)
    spawn_rate: float = 0.01
    behavior_mix: tuple = (0.0, 0.8, 0.2)  # yield, ignore, accelerate
    max_steps: int = 300
    dt: float = 0.1
    extra_agents: int = 0
    max_agents: int = 10
    initial_agents: int = 3
    entry_clearance: float = 12.0

    def __post_init__(self):
        if self.scenario not in ("left_turn", "merge"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for name in ("ego_init_speed_range", "agent_speed_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be a nonempty range of speeds")
            object.__setattr__(self, name, (float(lo), float(hi)))
        mix = tuple(float(p) for p in self.behavior_mix)
        if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
            raise ValueError("behavior_mix must be three probabilities summing to 1")
        object.__setattr__(self, "behavior_mix", mix)
        if not 0.0 <= self.spawn_rate <= 1.0:
            raise ValueError("spawn_rate must be a probability")
        if self.max_steps < 1 or self.dt <= 0:
            raise ValueError("max_steps and dt must be positive")
        if self.extra_agents < 0 or self.max_agents < 0 or self.initial_agents < 0:
            raise ValueError("agent counts must be non-negative")

    @classmethod
    def left_turn(cls, **kw) -> "ScenarioConfig":
        return cls(**kw)

    @classmethod
    def merge(cls, **kw) -> "ScenarioConfig":
        base = dict(scenario="merge", scale=180.0, agent_speed_range=(5.0, 15.0),
                    behavior_mix=(0.2, 0.4, 0.4))
        base.update(kw)
        return cls(**base)

    @classmethod
    def for_scenario(cls, name: str, **kw) -> "ScenarioConfig":
        if name == "left_turn":
            return cls.left_turn(**kw)
        if name == "merge":
            return cls.merge(**kw)
        raise ValueError(f"unknown scenario {name!r}")

    def extrapolated(self, velocity_offset: float = 0.0, spawn_rate: float | None = None,
                     extra_agents: int = 0) -> "ScenarioConfig":
        """Harder traffic: faster agents, more spawning and extra pre-placed agents."""
        lo, hi = self.agent_speed_range
        return replace(self, agent_speed_range=(lo, hi + velocity_offset),
                       spawn_rate=self.spawn_rate if spawn_rate is None else spawn_rate,
                       extra_agents=extra_agents)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls.for_scenario(d.pop("scenario", "left_turn"), **d)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


@dataclass
class BirthLane:
    route: Route
    name: str
    # where pre-populated agents may be placed, as arc-length bounds
    populate_range: tuple = (0.0, 0.0)
    # a parallel lane agents may shift into (merge courtesy lane changes)
    side_lane: "Route | None" = None
    side_offset: float = 0.0


@dataclass
class Layout:
    name: str
    ego_route: Route
    goal_s: float
    birth_lanes: list
    success_reward: tuple  # (scale, offset) of scale * exp(-steps / 50) + offset
    conflicts: dict = field(default_factory=dict)  # lane name -> (agent s, ego s)

    @property
    def goal_point(self):
        return self.ego_route.point_at(self.goal_s)


def _first_approach(route: Route, other: Route, radius: float):
    for k, (x, y) in enumerate(route.points):
        s_other, lat, _, _ = other.project(x, y)
        if abs(lat) < radius and 0.0 <= s_other <= other.length:
            return float(route.cum[k])
    return None


def conflict_point(ego_route: Route, lane: Route, radius: float = CONFLICT_RADIUS):
    """Where each path first comes within ``radius`` of the other, as (lane s, ego s)."""
    s_ego = _first_approach(ego_route, lane, radius)
    if s_ego is None:
        return None
    return _first_approach(lane, ego_route, radius), s_ego


def _with_conflicts(layout: Layout) -> Layout:
    for lane in layout.birth_lanes:
        c = conflict_point(layout.ego_route, lane.route)
        if c is not None:
            layout.conflicts[lane.name] = c
    return layout


@lru_cache(maxsize=None)
def left_turn_layout(scale: float = 240.0) -> Layout:
    """Two crossing two-lane roads; ego comes from the south and turns left."""
    half = scale / 2
    w = LANE_WIDTH / 2
    r = 2 * LANE_WIDTH  # turn radius of the ego path
    ego_pts = join(
        straight((w, -60.0), (w, -r + w)),
        arc((-r + w, -r + w), r, 0.0, math.pi / 2),
        straight((-r + w, w), (-40.0, w)),
    )
    ego = Route(ego_pts)
    goal_s, _, _, _ = ego.project(-30.0, w)
    oncoming = Route(straight((-w, half), (-w, -half)))
    lanes = [BirthLane(oncoming, "oncoming", populate_range=(5.0, half - 10.0))]
    return _with_conflicts(Layout("left_turn", ego, goal_s, lanes, (50.0, 10.0)))


@lru_cache(maxsize=None)
def merge_layout(scale: float = 180.0) -> Layout:
    """Two-lane main road heading east; the ego joins from a 15 degree ramp."""
    half = scale / 2
    ramp_angle = math.radians(15.0)
    gore = 60.0
    ramp_start = (-gore - 30.0 * math.cos(ramp_angle), -LANE_WIDTH - 30.0 * math.sin(ramp_angle))
    xs = np.linspace(-gore, 0.0, 61)
    blend = np.column_stack([xs, -LANE_WIDTH + LANE_WIDTH * smoothstep5((xs + gore) / gore)])
    ego = Route(join(straight(ramp_start, (-gore, -LANE_WIDTH)), blend, straight((0.0, 0.0), (60.0, 0.0))))
    goal_s, _, _, _ = ego.project(40.0, 0.0)
    right = Route(straight((-half, 0.0), (half, 0.0)))
    left = Route(straight((-half, LANE_WIDTH), (half, LANE_WIDTH)))
    lanes = [
        BirthLane(right, "right", populate_range=(0.0, half + 20.0), side_lane=left, side_offset=LANE_WIDTH),
        BirthLane(left, "left", populate_range=(0.0, half + 20.0)),
    ]
    return _with_conflicts(Layout("merge", ego, goal_s, lanes, (75.0, 5.0)))


def layout_for(config: ScenarioConfig) -> Layout:
    if config.scenario == "left_turn":
        return left_turn_layout(config.scale)
    return merge_layout(config.scale)


def lane_change_route(x: float, y: float, heading: float, speed: float, offset: float,
                      end_x: float, duration: float = 3.0) -> Route:
    """Quintic lateral shift over ``duration`` seconds, then straight to ``end_x``."""
    length = max(speed * duration, 10.0)
    pts = lateral_blend((x, y), heading, length, offset)
    tail_y = pts[-1, 1]
    if end_x > pts[-1, 0] + 1.0:
        pts = join(pts, straight(pts[-1], (end_x, tail_y)))
    return Route(pts)
