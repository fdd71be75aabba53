"""Rule-based traffic: car following, behavior overrides near the ego, spawning."""
from __future__ import annotations

import math

from .geometry import wrap_angle
from .scenarios import lane_change_route
from .vehicle import LENGTH, MAX_ACCEL, VehicleState

# car-following (intelligent driver model) constants
IDM_ACCEL = 2.0
IDM_DECEL = 3.0
IDM_MIN_GAP = 2.0
IDM_TIME_GAP = 1.5
IDM_EXPONENT = 4

TRIGGER_DISTANCE = 30.0
ARRIVAL_WINDOW = 4.0  # seconds between arrival times that count as a conflict
LEADER_RANGE = 80.0
ACCELERATE_FACTOR = 1.25
AGENT_BEHAVIORS = ("yield", "ignore", "accelerate")


def idm_accel(speed: float, target_speed: float, gap: float | None = None,
              leader_speed: float | None = None) -> float:
    """Intelligent driver model acceleration, clipped to the actuator range."""
    v0 = max(target_speed, 0.1)
    a = IDM_ACCEL * (1.0 - (speed / v0) ** IDM_EXPONENT)
    if gap is not None:
        dv = speed - (leader_speed or 0.0)
        desired = IDM_MIN_GAP + max(0.0, speed * IDM_TIME_GAP + speed * dv / (2 * math.sqrt(IDM_ACCEL * IDM_DECEL)))
        a -= IDM_ACCEL * (desired / max(gap, 0.1)) ** 2
    return min(max(a, -MAX_ACCEL), MAX_ACCEL)


def _frame(a: VehicleState, b: VehicleState):
    """Position of ``b`` in ``a``'s body frame and the heading difference."""
    c, s = math.cos(a.heading), math.sin(a.heading)
    dx, dy = b.x - a.x, b.y - a.y
    return dx * c + dy * s, -dx * s + dy * c, wrap_angle(b.heading - a.heading)


def find_leader(agent: VehicleState, world):
    """Closest vehicle ahead in the same lane, as ``(bumper gap, speed)``.

    The ego only counts once it is aligned with and inside the lane, so an
    ego crossing an agent's path does not make that agent brake.
    """
    best = None
    for other in world.agents:
        if other is agent:
            continue
        lon, lat, dh = _frame(agent, other)
        if 0.0 < lon < LEADER_RANGE and abs(lat) < 2.0 and abs(dh) < math.pi / 3:
            if best is None or lon < best[0]:
                best = (lon, other.speed)
    ego = world.ego
    lon, lat, dh = _frame(agent, ego)
    if 0.0 < lon < LEADER_RANGE and abs(lat) < 1.5 and abs(dh) < 0.35:
        if best is None or lon < best[0]:
            best = (lon, ego.speed)
    if best is None:
        return None
    return best[0] - LENGTH, best[1]


def conflict_state(agent: VehicleState, world):
    """Distances to the shared conflict point, or None if there is no live conflict."""
    c = world.layout.conflicts.get(agent.extra.get("lane"))
    if c is None:
        return None
    ego = world.ego
    d_agent = c[0] - agent.s
    d_ego = c[1] - ego.s
    if d_agent < -LENGTH or d_ego < -LENGTH:
        return None
    if math.hypot(agent.x - ego.x, agent.y - ego.y) > TRIGGER_DISTANCE:
        return None
    t_agent = max(d_agent, 0.0) / max(agent.speed, 0.5)
    t_ego = max(d_ego, 0.0) / max(ego.speed, 0.5)
    if abs(t_agent - t_ego) > ARRIVAL_WINDOW:
        return None
    return d_agent, d_ego


def agent_policy(agent: VehicleState, world) -> float:
    """Acceleration command for a non-ego vehicle."""
    if agent.behavior == "ego":
        raise ValueError("agent_policy is for traffic agents only")
    leader = find_leader(agent, world)
    base = idm_accel(agent.speed, agent.target_speed, *(leader or (None, None)))
    if agent.behavior == "ignore":
        return base
    conflict = conflict_state(agent, world)
    if conflict is None:
        return base
    if agent.behavior == "yield":
        d_agent = conflict[0]
        if d_agent <= 0.0:
            return base  # already in the conflict zone, clear it
        stop = idm_accel(agent.speed, agent.target_speed, d_agent - LENGTH / 2, 0.0)
        return min(base, stop)
    # accelerate
    boost = MAX_ACCEL if agent.speed < ACCELERATE_FACTOR * agent.target_speed else 0.0
    if leader is not None:
        boost = min(boost, idm_accel(agent.speed, ACCELERATE_FACTOR * agent.target_speed, *leader))
    return boost


def side_lane_clear(agent: VehicleState, world, lane, margin: float = 15.0) -> bool:
    for other in world.agents:
        if other is agent:
            continue
        s, lat, _, _ = lane.route.project(other.x, other.y)
        if abs(lat) < 2.0 and abs(s - agent.s) < margin:
            return False
    return True


def maybe_change_lane(agent: VehicleState, world) -> bool:
    """Courtesy lane change of a yielding agent, when a free side lane exists."""
    if agent.behavior != "yield" or agent.extra.get("changing"):
        return False
    lane = world.lanes.get(agent.extra.get("lane"))
    if lane is None or lane.side_lane is None or conflict_state(agent, world) is None:
        return False
    if not side_lane_clear(agent, world, lane):
        return False
    agent.route = lane_change_route(agent.x, agent.y, agent.heading, agent.speed,
                                    lane.side_offset, lane.side_lane.points[-1, 0])
    agent.segment = 0
    agent.track()
    agent.extra = dict(agent.extra, lane=None, changing=True)
    return True


def spawn_tick(world, config, rng) -> list:
    """Give every birth lane one spawn draw; return the new agents."""
    if world.status != "running":
        raise ValueError("cannot spawn into a finished episode")
    cap = config.max_agents + config.extra_agents
    born = []
    for lane in world.layout.birth_lanes:
        u = rng.random()
        if u >= config.spawn_rate or len(world.agents) >= cap:
            continue
        x0, y0 = lane.route.points[0]
        blocked = any(math.hypot(v.x - x0, v.y - y0) < config.entry_clearance
                      for v in (*world.agents, world.ego))
        if blocked:
            continue
        agent = new_agent(world, lane, 0.0, config, rng)
        world.agents.append(agent)
        born.append(agent)
    return born


def new_agent(world, lane, s: float, config, rng) -> VehicleState:
    behavior = AGENT_BEHAVIORS[int(rng.choice(3, p=config.behavior_mix))]
    target = float(rng.uniform(*config.agent_speed_range))
    x, y = lane.route.point_at(s)
    agent = VehicleState(x, y, lane.route.heading_at(s), target, behavior, lane.route, target,
                         world.next_id, extra={"lane": lane.name})
    world.next_id += 1
    agent.segment = lane.route.segment_at(s)
    agent.track()
    return agent
