"""Fast-slow lane selection: a two-lane toy MDP with a brute-force CVaR solver.

The vehicle starts in the right (slow) lane.  At every step it collects a
Gaussian reward for the lane it is in, then switches lanes with probability
``p_change``.  Because the optimal scalar policy can be found by sweeping a
grid of ``p_change`` values, this gives a ground truth for CVaR-optimal
behavior as a function of alpha.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tabular import TabularMdp

RIGHT, LEFT = 0, 1


@dataclass(frozen=True)
class LaneMdp:
    horizon: int = 4
    left_mean: float = 2.0
    left_var: float = 4.0
    right_mean: float = 1.0
    right_var: float = 1.0
    start_lane: int = RIGHT

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.left_var <= 0 or self.right_var <= 0:
            raise ValueError("lane reward variances must be positive")

    def lane_moments(self) -> tuple[np.ndarray, np.ndarray]:
        means = np.array([self.right_mean, self.left_mean])
        stds = np.sqrt([self.right_var, self.left_var])
        return means, stds


@dataclass(frozen=True)
class LanePolicy:
    p_change: float

    def __post_init__(self):
        if not 0.0 <= self.p_change <= 1.0:
            raise ValueError("p_change must be in [0, 1]")


def draw_noise(mdp: LaneMdp, n_trials: int, rng: np.random.Generator):
    """Uniforms for lane switching and standard normals for rewards."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    return rng.random((n_trials, mdp.horizon)), rng.standard_normal((n_trials, mdp.horizon))


def rollout_with_noise(mdp: LaneMdp, policy: LanePolicy | float, noise) -> np.ndarray:
    p = policy.p_change if isinstance(policy, LanePolicy) else float(policy)
    uniforms, normals = noise
    means, stds = mdp.lane_moments()
    lane = np.full(uniforms.shape[0], mdp.start_lane)
    total = np.zeros(uniforms.shape[0])
    for t in range(mdp.horizon):
        total += means[lane] + stds[lane] * normals[:, t]
        lane = np.where(uniforms[:, t] < p, 1 - lane, lane)
    return total


def rollout(mdp: LaneMdp, policy: LanePolicy | float, n_trials: int,
            rng: np.random.Generator) -> np.ndarray:
    """Episode returns of ``n_trials`` independent simulations."""
    return rollout_with_noise(mdp, policy, draw_noise(mdp, n_trials, rng))


def empirical_cvar(returns, alpha: float) -> float:
    """Mean of the lowest ``ceil(alpha * n)`` returns."""
    r = np.sort(np.asarray(returns, dtype=np.float64).reshape(-1))
    if r.size == 0:
        raise ValueError("empty return sample")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if alpha == 1.0:
        return float(np.mean(r))
    k = max(1, int(np.ceil(alpha * r.size - 1e-9)))
    return float(np.mean(r[:k]))


def policy_grid(points: int = 32) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def grid_search_optimal(mdp: LaneMdp, alpha: float, grid=32, n_trials: int = 1000,
                        rng: np.random.Generator | None = None, noise=None) -> tuple[float, float]:
    """Best ``p_change`` on the grid by empirical CVaR, with common random numbers.

    Ties go to the smaller ``p_change``.
    """
    grid = policy_grid(grid) if np.isscalar(grid) else np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty policy grid")
    if noise is None:
        noise = draw_noise(mdp, n_trials, rng if rng is not None else np.random.default_rng(0))
    values = np.array([empirical_cvar(rollout_with_noise(mdp, p, noise), alpha) for p in grid])
    best = int(np.argmax(values))
    return float(grid[best]), float(values[best])


def alpha_sweep(mdp: LaneMdp, alphas, grid=32, n_trials: int = 1000, seed: int = 0):
    """``(alpha, best_p_change, cvar)`` rows; one noise draw shared by every alpha."""
    noise = draw_noise(mdp, n_trials, np.random.default_rng(seed))
    return [(float(a), *grid_search_optimal(mdp, float(a), grid, noise=noise)) for a in alphas]


def crossover_alpha(rows) -> float | None:
    """First alpha at which the optimal policy leaves ``p_change < 0.5``."""
    for alpha, p, _ in rows:
        if p >= 0.5:
            return alpha
    return None


def median_filter3(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 3:
        return v.copy()
    padded = np.concatenate([v[:1], v, v[-1:]])
    return np.median(np.stack([padded[:-2], padded[1:-1], padded[2:]]), axis=0)


# ---------------------------------------------------------------------------
# the same problem as an enumerated MDP and as a step-wise environment

STAY, CHANGE = 0, 1


def lane_state_index(t: int, lane: int) -> int:
    return 2 * t + lane


def tabular_mdp(mdp: LaneMdp = LaneMdp()) -> TabularMdp:
    """States ``(t, lane)``; actions stay / change; termination after the horizon."""
    S = 2 * mdp.horizon
    P = np.zeros((S, 2, S))
    means, stds = mdp.lane_moments()
    r_mean = np.zeros((S, 2))
    r_var = np.zeros((S, 2))
    for t in range(mdp.horizon):
        for lane in (RIGHT, LEFT):
            s = lane_state_index(t, lane)
            r_mean[s] = means[lane]
            r_var[s] = stds[lane] ** 2
            if t + 1 < mdp.horizon:
                P[s, STAY, lane_state_index(t + 1, lane)] = 1.0
                P[s, CHANGE, lane_state_index(t + 1, 1 - lane)] = 1.0
    return TabularMdp(P, r_mean, r_var)


def encode_lane_state(t: int, lane: int, horizon: int = 4, dim: int = 16) -> np.ndarray:
    """One-hot time step and lane, zero padded to the network input width."""
    obs = np.zeros(dim)
    obs[t] = 1.0
    obs[horizon + lane] = 1.0
    return obs


def action_value(action_index: int) -> float:
    """Continuous critic input for a discrete lane action."""
    return 1.0 if action_index == CHANGE else -1.0


class FastSlowLanesEnv:
    """Step-wise version of the lane MDP with 16-dim observations.

    Actions are scalars; a positive action changes lane.
    """

    def __init__(self, mdp: LaneMdp = LaneMdp(), dim: int = 16):
        self.mdp = mdp
        self.dim = dim
        self.t = 0
        self.lane = mdp.start_lane
        self.rng = np.random.default_rng(0)

    def reset(self, seed: int | None = None, lane: int | None = None, t: int = 0) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = t
        self.lane = self.mdp.start_lane if lane is None else lane
        return encode_lane_state(self.t, self.lane, self.mdp.horizon, self.dim)

    def step(self, action: float):
        means, stds = self.mdp.lane_moments()
        reward = float(means[self.lane] + stds[self.lane] * self.rng.standard_normal())
        if action > 0:
            self.lane = 1 - self.lane
        self.t += 1
        done = self.t >= self.mdp.horizon
        obs = encode_lane_state(min(self.t, self.mdp.horizon - 1), self.lane, self.mdp.horizon, self.dim)
        return obs, reward, done, {}
