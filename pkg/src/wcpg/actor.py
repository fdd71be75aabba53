"""Risk-conditioned deterministic policy and its CVaR policy gradient."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .critic import STATE_DIM, CriticNet, column, critic_action_grads, predict, predict_raw
from .nn import LayerSpec, MlpParams
from .risk import cvar_coefficient, cvar_gaussian, cvar_partials

MAX_ACCEL = 4.0
ACTOR_INPUTS = {"I": STATE_DIM, "I_alpha": 1}
SQRT2 = float(np.sqrt(2.0))


def actor_specs(state_dim: int = STATE_DIM, sigma: float = SQRT2):
    return (
        LayerSpec("h1", ("I",), state_dim, 32, "relu", sigma),
        LayerSpec("h2", ("I_alpha",), 1, 16, "relu", sigma),
        LayerSpec("h3", ("h1", "h2"), 48, 32, "relu", sigma),
        LayerSpec("out", ("h3",), 32, 1, "tanh", sigma),
    )


@dataclass
class ActorNet:
    params: MlpParams
    action_scale: float = MAX_ACCEL

    @classmethod
    def create(cls, seed: int, state_dim: int = STATE_DIM, sigma: float = SQRT2,
               action_scale: float = MAX_ACCEL) -> "ActorNet":
        inputs = dict(ACTOR_INPUTS, I=state_dim)
        return cls(nn.init_params(inputs, actor_specs(state_dim, sigma), seed), action_scale)

    def copy(self) -> "ActorNet":
        return ActorNet(self.params.copy(), self.action_scale)


def _inputs(states, alphas):
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    return {"I": states, "I_alpha": column(alphas, states.shape[0])}


def act_batch(net: ActorNet, states, alphas) -> np.ndarray:
    out, _ = nn.forward(net.params, _inputs(states, alphas))
    return net.action_scale * out[:, 0]


def act(net: ActorNet, state, alpha) -> float:
    """Acceleration in m/s^2 for a single (normalized) state."""
    return float(act_batch(net, np.asarray(state).reshape(1, -1), alpha)[0])


def explore(action: float, noise_sigma: float, rng: np.random.Generator,
            bound: float = MAX_ACCEL) -> float:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if noise_sigma == 0:
        return float(np.clip(action, -bound, bound))
    return float(np.clip(action + rng.normal(0.0, noise_sigma), -bound, bound))


def policy(net: ActorNet):
    """Adapter with the ``(states, alphas) -> actions`` signature used for targets."""
    return lambda states, alphas: act_batch(net, states, alphas)


def cvar_objective(actor: ActorNet, critic: CriticNet, states, alphas, kind: str = "ratio") -> float:
    """Batch-mean CVaR of the critic's distribution at the actor's own actions."""
    a = act_batch(actor, states, alphas)
    return float(np.mean(cvar_gaussian(predict(critic, states, a, alphas), alphas, kind)))


def _action_to_params(actor: ActorNet, states, alphas, d_action, tape=None):
    if tape is None:
        _, tape = nn.forward(actor.params, _inputs(states, alphas))
    g_out = (actor.action_scale * np.asarray(d_action)).reshape(-1, 1)
    grads, _ = nn.backward(actor.params, tape, g_out)
    return grads


def actor_update(actor: ActorNet, critic: CriticNet, states, alphas,
                 kind: str = "ratio") -> tuple[float, MlpParams]:
    """Ascent gradient of the batch-mean CVaR objective w.r.t. actor parameters.

    Returns ``(objective, grads)``.  The critic is held fixed; the trainer
    negates the gradient before handing it to a minimizer.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    n = states.shape[0]
    out, actor_tape = nn.forward(actor.params, _inputs(states, alphas))
    a = actor.action_scale * out[:, 0]
    fwd = predict_raw(critic, states, a, alphas)
    objective = float(np.mean(cvar_gaussian(fwd[0], alphas, kind)))
    d_mean, d_var = cvar_partials(fwd[0], alphas, kind)
    d_action = critic_action_grads(critic, states, a, alphas, d_mean / n, d_var / n, forward=fwd)
    return objective, _action_to_params(actor, states, alphas, d_action, actor_tape)


def actor_update_terms(actor: ActorNet, critic: CriticNet, states, alphas,
                       kind: str = "ratio") -> tuple[MlpParams, MlpParams]:
    """The mean-path and spread-path parts of :func:`actor_update`, separately."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    alphas = np.asarray(alphas, dtype=np.float64).reshape(-1)
    n = states.shape[0]
    a = act_batch(actor, states, alphas)
    z = predict(critic, states, a, alphas)
    zeros = np.zeros(n)
    d_q = critic_action_grads(critic, states, a, alphas, np.ones(n) / n, zeros)
    # d sqrt(var)/da = (d var/da) / (2 sqrt(var))
    d_v = critic_action_grads(critic, states, a, alphas, zeros, 1.0 / (2.0 * np.sqrt(z.variance)) / n)
    c = cvar_coefficient(alphas, kind)
    mean_term = _action_to_params(actor, states, alphas, d_q)
    spread_term = _action_to_params(actor, states, alphas, -c * d_v)
    return mean_term, spread_term
