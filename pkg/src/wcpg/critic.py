"""Distributional critic: (state, action, alpha) -> Gaussian over future return."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn
from .nn import LayerSpec, MlpParams
from .risk import VARIANCE_FLOOR, GaussianReturn, w2_gaussian

STATE_DIM = 16
CRITIC_INPUTS = {"I": STATE_DIM, "I_act": 1, "I_alpha": 1}


def critic_specs(state_dim: int = STATE_DIM, hidden: int = 64, sigma: float = 0.01):
    return (
        LayerSpec("h1", ("I",), state_dim, hidden, "relu", sigma),
        LayerSpec("h2", ("I_alpha",), 1, hidden, "relu", sigma),
        LayerSpec("h3", ("h1", "h2", "I_act"), 2 * hidden + 1, hidden, "relu", sigma),
        LayerSpec("h4", ("h3",), hidden, hidden, "relu", sigma),
        # column 0 is the mean (linear), column 1 goes through softplus
        LayerSpec("out", ("h4",), hidden, 2, "linear", sigma),
    )


@dataclass
class CriticNet:
    params: MlpParams
    variance_floor: float = VARIANCE_FLOOR

    @classmethod
    def create(cls, seed: int, state_dim: int = STATE_DIM, hidden: int = 64,
               sigma: float = 0.01) -> "CriticNet":
        inputs = dict(CRITIC_INPUTS, I=state_dim)
        return cls(nn.init_params(inputs, critic_specs(state_dim, hidden, sigma), seed))

    def copy(self) -> "CriticNet":
        return CriticNet(self.params.copy(), self.variance_floor)


def column(x, n: int) -> np.ndarray:
    """``x`` as an ``(n, 1)`` float column, broadcasting scalars."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    return x if x.shape[0] == n else np.broadcast_to(x, (n, 1))


def _inputs(states, actions, alphas) -> dict[str, np.ndarray]:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    return {"I": states, "I_act": column(actions, n), "I_alpha": column(alphas, n)}


def predict_raw(net: CriticNet, states, actions, alphas):
    """Forward pass returning the distribution, the raw head output and the tape."""
    raw, tape = nn.forward(net.params, _inputs(states, actions, alphas))
    mean = raw[:, 0]
    variance = nn.softplus(raw[:, 1]) + net.variance_floor
    return GaussianReturn(mean, variance), raw, tape


def predict(net: CriticNet, states, actions, alphas) -> GaussianReturn:
    """Predicted return distribution for each row of ``states``."""
    z, _, _ = predict_raw(net, states, actions, alphas)
    return z


def head_grad(raw: np.ndarray, d_mean, d_variance) -> np.ndarray:
    """Chain (dL/dmean, dL/dvariance) through the softplus variance head."""
    g = np.empty_like(raw)
    g[:, 0] = d_mean
    g[:, 1] = np.asarray(d_variance) * nn.sigmoid(raw[:, 1])
    return g


def make_target(target_net, target_policy: Callable, batch, gamma: float,
                floor: float = VARIANCE_FLOOR) -> GaussianReturn:
    """Single-sample distributional Bellman target ``r + gamma * Z(s', pi(s'))``.

    ``target_net`` is a :class:`CriticNet` or any callable
    ``(states, actions, alphas) -> GaussianReturn``.  ``batch`` needs
    ``reward``, ``next_state`` (already normalized), ``done`` and ``alpha``
    arrays.  Terminal rows get ``N(r, floor)``.
    """
    if isinstance(target_net, CriticNet):
        net = target_net
        target_net = lambda s, a, al: predict(net, s, a, al)  # noqa: E731
    reward = np.asarray(batch.reward, dtype=np.float64).reshape(-1)
    done = np.asarray(batch.done, dtype=bool).reshape(-1)
    alpha = np.asarray(batch.alpha, dtype=np.float64).reshape(-1)
    mean = reward.copy()
    var = np.full_like(reward, floor)
    live = ~done
    if gamma > 0 and np.any(live):
        s_next = np.atleast_2d(np.asarray(batch.next_state, dtype=np.float64))[live]
        a_next = np.asarray(target_policy(s_next, alpha[live]), dtype=np.float64).reshape(-1)
        z_next = target_net(s_next, a_next, alpha[live])
        mean[live] += gamma * z_next.mean
        var[live] = np.maximum(gamma * gamma * z_next.variance, floor)
    return GaussianReturn(mean, var)


def project_target(sample: GaussianReturn, reference: GaussianReturn,
                   floor: float = VARIANCE_FLOOR, sigma_max: float | None = None,
                   linearize_variance=None) -> GaussianReturn:
    """Turn single-sample targets into regression targets for the W2 loss.

    ``reference`` is the target network's prediction at ``(s, a)``.  The
    variance of the Bellman target around it is estimated per sample as
    ``(mu_t - Q_ref)^2 + var_t``, whose expectation is the variance recursion
    when ``Q_ref`` is the expected target.  Its square root is taken to first
    order around ``sigma_0`` so that averaging over samples does not shrink
    it: regressing ``sigma`` onto ``(V + sigma_0^2) / (2 sigma_0)`` with
    ``sigma_0 = sigma`` has its fixed point at ``sigma^2 = E[V]``.
    ``linearize_variance`` gives ``sigma_0^2``; it defaults to the reference
    variance, and the trainers pass the live critic's own prediction.
    """
    mean = np.asarray(sample.mean, dtype=np.float64)
    lin = reference.variance if linearize_variance is None else linearize_variance
    lin_var = np.maximum(np.asarray(lin, dtype=np.float64), floor)
    lin_sigma = np.sqrt(lin_var)
    v = (mean - np.asarray(reference.mean, dtype=np.float64)) ** 2 + np.asarray(sample.variance)
    sigma = (v + lin_var) / (2.0 * lin_sigma)
    if sigma_max is not None:
        sigma = np.minimum(sigma, sigma_max)
    return GaussianReturn(mean, np.maximum(sigma * sigma, floor))


def critic_loss_and_grads(net: CriticNet, states, actions, alphas,
                          target: GaussianReturn, forward=None) -> tuple[float, MlpParams]:
    """Batch-mean squared 2-Wasserstein loss against constant targets.

    ``forward`` may carry the ``predict_raw`` result for the same inputs.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    z, raw, tape = forward if forward is not None else predict_raw(net, states, actions, alphas)
    t_mean = np.asarray(target.mean, dtype=np.float64).reshape(-1)
    t_sigma = np.sqrt(np.asarray(target.variance, dtype=np.float64)).reshape(-1)
    loss = float(np.mean(w2_gaussian(z, GaussianReturn(t_mean, t_sigma ** 2))))
    sigma = np.sqrt(z.variance)
    d_mean = 2.0 * (z.mean - t_mean) / n
    d_sigma = 2.0 * (sigma - t_sigma) / n
    grads, _ = nn.backward(net.params, tape, head_grad(raw, d_mean, d_sigma / (2.0 * sigma)))
    return loss, grads


def critic_action_grads(net: CriticNet, states, actions, alphas, d_mean, d_variance, forward=None):
    """Gradient of ``sum(d_mean * Q + d_variance * var)`` w.r.t. the action input."""
    _, raw, tape = forward if forward is not None else predict_raw(net, states, actions, alphas)
    _, input_grads = nn.backward(net.params, tape, head_grad(raw, d_mean, d_variance))
    return input_grads["I_act"].reshape(-1)


def soft_update(target_net: CriticNet, live_net: CriticNet, tau: float) -> CriticNet:
    return CriticNet(nn.soft_update(target_net.params, live_net.params, tau), target_net.variance_floor)
