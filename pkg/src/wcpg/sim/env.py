"""The driving environment: reset, step, observation encoding and traces."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .agents import agent_policy, maybe_change_lane, new_agent, spawn_tick
from .geometry import wrap_angle
from .scenarios import SUCCESS_RADIUS, Layout, ScenarioConfig, layout_for
from .vehicle import MAX_ACCEL, VehicleState, bicycle_step, overlap, stanley_steer

OBS_DIM = 16
N_OBSERVED = 3
PAD_X = 200.0
COLLISION_REWARD = -50.0
STATUSES = ("running", "collision", "success", "timeout")
MIN_PLACEMENT_GAP = 15.0


@dataclass
class WorldState:
    ego: VehicleState
    agents: list
    layout: Layout
    config: ScenarioConfig
    rng: np.random.Generator
    step_count: int = 0
    status: str = "running"
    next_id: int = 1
    lanes: dict = field(default_factory=dict)

    def set_status(self, status: str) -> None:
        if status not in STATUSES:
            raise ValueError(status)
        if self.status != "running" and status != self.status:
            raise ValueError("a finished episode cannot change its outcome")
        self.status = status


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def success_reward(layout: Layout, steps: int) -> float:
    scale, offset = layout.success_reward
    return scale * math.exp(-steps / 50.0) + offset


def reset(config: ScenarioConfig, seed: int) -> WorldState:
    """Fresh world: ego at the route start with a random speed, plus pre-placed traffic."""
    rng = np.random.default_rng(seed)
    layout = layout_for(config)
    route = layout.ego_route
    speed = float(rng.uniform(*config.ego_init_speed_range))
    x, y = route.point_at(0.0)
    ego = VehicleState(x, y, route.heading_at(0.0), speed, "ego", route, 0.0, 0)
    ego.track()
    world = WorldState(ego, [], layout, config, rng, lanes={l.name: l for l in layout.birth_lanes})
    n = config.initial_agents + config.extra_agents
    lanes = layout.birth_lanes
    for k in range(n):
        lane = lanes[k % len(lanes)]
        lo, hi = lane.populate_range
        for _ in range(20):
            s = float(rng.uniform(lo, hi))
            px, py = lane.route.point_at(s)
            if all(math.hypot(v.x - px, v.y - py) >= MIN_PLACEMENT_GAP for v in (*world.agents, ego)):
                world.agents.append(new_agent(world, lane, s, config, rng))
                break
    return world


def observe(world: WorldState) -> np.ndarray:
    """Ego block followed by the three nearest agents in the ego frame."""
    ego = world.ego
    route = world.layout.ego_route
    s, lateral, path_heading, _ = route.project(ego.x, ego.y, ego.segment)
    obs = np.zeros(OBS_DIM)
    obs[0] = ego.speed
    obs[1] = wrap_angle(ego.heading - path_heading)
    obs[2] = lateral
    obs[3] = world.layout.goal_s - s
    c, sn = math.cos(ego.heading), math.sin(ego.heading)
    near = sorted(world.agents, key=lambda a: (math.hypot(a.x - ego.x, a.y - ego.y), a.vid))
    for k in range(N_OBSERVED):
        base = 4 + 4 * k
        if k < len(near):
            a = near[k]
            dx, dy = a.x - ego.x, a.y - ego.y
            obs[base:base + 4] = (dx * c + dy * sn, -dx * sn + dy * c,
                                  wrap_angle(a.heading - ego.heading), a.speed)
        else:
            obs[base] = PAD_X
    return obs


def env_step(world: WorldState, ego_accel: float) -> StepOutcome:
    """Advance every vehicle by one tick and score the result."""
    if world.status != "running":
        raise ValueError("episode already finished; call reset")
    cfg = world.config
    dt = cfg.dt
    for agent in world.agents:
        maybe_change_lane(agent, world)
    commands = [(agent_policy(a, world), stanley_steer(a, a.route)) for a in world.agents]
    ego_cmd = (min(max(float(ego_accel), -MAX_ACCEL), MAX_ACCEL), stanley_steer(world.ego, world.ego.route))

    world.ego = bicycle_step(world.ego, *ego_cmd, dt)
    world.ego.track()
    moved = []
    for agent, (acc, steer) in zip(world.agents, commands):
        nxt = bicycle_step(agent, acc, steer, dt)
        nxt.track()
        if nxt.s < nxt.route.length - 1.0:
            moved.append(nxt)
    world.agents = moved
    world.step_count += 1
    spawn_tick(world, cfg, world.rng)

    reward = 0.0
    if any(overlap(world.ego, a) for a in world.agents):
        world.set_status("collision")
        reward = COLLISION_REWARD
    elif world.ego.s >= world.layout.goal_s - SUCCESS_RADIUS:
        world.set_status("success")
        reward = success_reward(world.layout, world.step_count)
    elif world.step_count >= cfg.max_steps:
        world.set_status("timeout")
    obs = observe(world)
    gaps = [math.hypot(a.x - world.ego.x, a.y - world.ego.y) for a in world.agents]
    info = {"cause": world.status, "step": world.step_count,
            "nearest": min(gaps) if gaps else float("inf"), "n_agents": len(world.agents)}
    return StepOutcome(obs, reward, world.status != "running", info)


class DrivingEnv:
    """Stateful wrapper with a gym-like ``reset``/``step`` pair."""

    obs_dim = OBS_DIM

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.world: WorldState | None = None

    def reset(self, seed: int) -> np.ndarray:
        self.world = reset(self.config, seed)
        return observe(self.world)

    def step(self, accel: float) -> StepOutcome:
        if self.world is None:
            raise ValueError("call reset before step")
        return env_step(self.world, accel)


TRACE_FIELDS = ("t", "x", "y", "heading", "speed", "action", "reward", "status",
                "d1", "d2", "d3", "critic_mean", "critic_std")


def trace_row(world: WorldState, action: float, reward: float,
              critic_mean: float | None = None, critic_std: float | None = None) -> dict:
    ego = world.ego
    d = sorted(math.hypot(a.x - ego.x, a.y - ego.y) for a in world.agents)[:3]
    d += [float("nan")] * (3 - len(d))
    return {"t": round(world.step_count * world.config.dt, 10), "x": ego.x, "y": ego.y,
            "heading": ego.heading, "speed": ego.speed, "action": action, "reward": reward,
            "status": world.status, "d1": d[0], "d2": d[1], "d3": d[2],
            "critic_mean": "" if critic_mean is None else critic_mean,
            "critic_std": "" if critic_std is None else critic_std}


def write_trace_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
