"""Exact mean/variance policy evaluation on small enumerated MDPs.

This is the network-free reference for the distributional Bellman machinery.
Rewards are Gaussian per (state, action) and independent of everything else;
transition rows may sum to less than one, the missing mass being termination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .risk import GaussianReturn


@dataclass
class TabularMdp:
    transitions: np.ndarray  # (S, A, S), sub-stochastic rows
    reward_mean: np.ndarray  # (S, A)
    reward_var: np.ndarray  # (S, A)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.reward_mean = np.asarray(self.reward_mean, dtype=np.float64)
        self.reward_var = np.asarray(self.reward_var, dtype=np.float64)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.reward_mean.shape != (s, a) or self.reward_var.shape != (s, a):
            raise ValueError("inconsistent MDP array shapes")
        if np.any(self.transitions < 0) or np.any(self.transitions.sum(axis=2) > 1 + 1e-12):
            raise ValueError("transition rows must be sub-stochastic")
        if np.any(self.reward_var < 0):
            raise ValueError("reward variances must be non-negative")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def _policy_matrix(mdp: TabularMdp, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.ndim == 1:  # deterministic: action index per state
        onehot = np.zeros((mdp.n_states, mdp.n_actions))
        onehot[np.arange(mdp.n_states), policy.astype(int)] = 1.0
        policy = onehot
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError("policy must be (S,) action indices or (S, A) probabilities")
    return policy


def policy_evaluate_tabular(mdp: TabularMdp, policy, gamma: float) -> GaussianReturn:
    """Exact Q and return variance for every (state, action) pair.

    Solves the mean Bellman equation and the second-moment recursion
    ``M = E[r^2] + 2 gamma E[r] P Q' + gamma^2 P M'`` by linear solves, then
    ``variance = M - Q^2``.  This is the variance recursion written in terms
    of the second moment.
    """
    if mdp.n_states * mdp.n_actions > 100:
        raise ValueError("tabular evaluation is limited to 100 state-action pairs")
    pi = _policy_matrix(mdp, policy)
    S, A = mdp.n_states, mdp.n_actions
    # (S*A, S*A): probability of moving from (s, a) to (s', a')
    p_sa = np.einsum("xay,yb->xayb", mdp.transitions, pi).reshape(S * A, S * A)
    eye = np.eye(S * A)
    radius = np.max(np.abs(np.linalg.eigvals(p_sa))) if S * A else 0.0
    if gamma * radius >= 1.0 - 1e-12:
        raise ValueError("policy evaluation diverges: the MDP is not episodic under this policy")
    m = mdp.reward_mean.reshape(-1)
    v = mdp.reward_var.reshape(-1)
    q = np.linalg.solve(eye - gamma * p_sa, m)
    second = np.linalg.solve(eye - gamma * gamma * p_sa, m * m + v + 2.0 * gamma * m * (p_sa @ q))
    var = np.maximum(second - q * q, 0.0)
    return GaussianReturn(q.reshape(S, A), var.reshape(S, A))


def sample_returns(mdp: TabularMdp, policy, gamma: float, state: int, action: int,
                   n: int, rng: np.random.Generator, max_steps: int = 10_000) -> np.ndarray:
    """Monte-Carlo discounted returns from (state, action), for cross-checks."""
    pi = _policy_matrix(mdp, policy)
    S = mdp.n_states
    out = np.empty(n)
    for i in range(n):
        s, a, total, disc = state, action, 0.0, 1.0
        for _ in range(max_steps):
            total += disc * rng.normal(mdp.reward_mean[s, a], np.sqrt(mdp.reward_var[s, a]))
            row = mdp.transitions[s, a]
            u = rng.random()
            cum = np.cumsum(row)
            nxt = int(np.searchsorted(cum, u, side="right"))
            if nxt >= S:
                break
            s = nxt
            a = int(rng.choice(mdp.n_actions, p=pi[s]))
            disc *= gamma
        out[i] = total
    return out
