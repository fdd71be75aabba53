"""2-D multi-agent driving scenarios."""
from .env import (COLLISION_REWARD, OBS_DIM, DrivingEnv, StepOutcome, WorldState, env_step,
                  observe, reset, success_reward, trace_row, write_trace_csv)
from .geometry import Route, wrap_angle
from .scenarios import ScenarioConfig, layout_for, left_turn_layout, merge_layout
from .vehicle import VehicleState, bicycle_step, overlap, stanley_steer

__all__ = [
    "COLLISION_REWARD", "OBS_DIM", "DrivingEnv", "StepOutcome", "WorldState", "env_step",
    "observe", "reset", "success_reward", "trace_row", "write_trace_csv", "Route", "wrap_angle",
    "ScenarioConfig", "layout_for", "left_turn_layout", "merge_layout", "VehicleState",
    "bicycle_step", "overlap", "stanley_steer",
]
