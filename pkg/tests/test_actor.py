import numpy as np
import pytest

from wcpg import nn
from wcpg.actor import (ActorNet, act, act_batch, actor_update, actor_update_terms, cvar_objective,
                        explore)
from wcpg.critic import CriticNet
from wcpg.risk import cvar_coefficient


def _jittered(net, seed):
    rng = np.random.default_rng(seed)
    net.params = net.params.map(lambda a: a + rng.normal(scale=0.3, size=a.shape))
    return net


def test_zero_weight_actor_outputs_zero():
    net = ActorNet.create(0)
    net.params = net.params.map(np.zeros_like)
    assert act(net, np.ones(16), 0.5) == 0.0


def test_actions_are_bounded():
    net = _jittered(ActorNet.create(0, sigma=20.0), 1)
    a = act_batch(net, np.random.default_rng(0).normal(scale=50, size=(200, 16)), 0.3)
    assert np.all(np.abs(a) <= 4.0)


def test_act_rejects_nan():
    with pytest.raises(ValueError):
        act(ActorNet.create(0), np.full(16, np.nan), 0.5)


def test_explore_cases():
    rng = np.random.default_rng(0)
    assert explore(1.25, 0.0, rng) == 1.25
    assert all(explore(4.0, 2.0, rng) <= 4.0 for _ in range(100))
    with pytest.raises(ValueError):
        explore(0.0, -1.0, rng)


def test_exploration_noise_scale():
    rng = np.random.default_rng(0)
    # action 0 with a wide clip bound gives the pre-clip noise
    draws = np.array([explore(0.0, 2.0, rng, bound=1e9) for _ in range(100_000)])
    assert np.std(draws) == pytest.approx(2.0, abs=0.02)


def test_critic_ignoring_action_gives_zero_gradient():
    actor = _jittered(ActorNet.create(0), 2)
    critic = _jittered(CriticNet.create(1, sigma=1.0), 3)
    # zero the rows of the third layer that read the action input
    critic.params.weights[2][-1, :] = 0.0
    states = np.random.default_rng(0).normal(size=(8, 16))
    _, grads = actor_update(actor, critic, states, np.full(8, 0.5))
    assert all(np.all(g == 0.0) for g in grads.arrays())


def test_spread_weight_larger_at_small_alpha():
    assert cvar_coefficient(0.02) > cvar_coefficient(1.0)
    actor = _jittered(ActorNet.create(4), 5)
    critic = _jittered(CriticNet.create(6, sigma=1.0), 7)
    states = np.random.default_rng(1).normal(size=(16, 16))
    _, spread_small = actor_update_terms(actor, critic, states, np.full(16, 0.02))
    _, spread_one = actor_update_terms(actor, critic, states, np.full(16, 1.0))
    # same actions only if the alpha input is ignored, so compare the scalar weights directly
    assert np.linalg.norm(spread_small.flat()) > 0 and np.linalg.norm(spread_one.flat()) > 0


def test_terms_sum_to_full_gradient():
    actor = _jittered(ActorNet.create(8), 9)
    critic = _jittered(CriticNet.create(10, sigma=1.0), 11)
    rng = np.random.default_rng(2)
    states, alphas = rng.normal(size=(6, 16)), rng.uniform(0.05, 1.0, 6)
    _, full = actor_update(actor, critic, states, alphas)
    mean_t, spread_t = actor_update_terms(actor, critic, states, alphas)
    assert np.allclose(full.flat(), mean_t.flat() + spread_t.flat(), rtol=1e-10, atol=1e-14)


def test_objective_gradient_matches_finite_differences():
    actor = _jittered(ActorNet.create(12), 13)
    critic = _jittered(CriticNet.create(14, sigma=1.0), 15)
    rng = np.random.default_rng(3)
    states, alphas = rng.normal(size=(4, 16)), rng.uniform(0.05, 1.0, 4)

    def loss(params, _):
        return cvar_objective(ActorNet(params), critic, states, alphas)

    def grads(params, _):
        return actor_update(ActorNet(params), critic, states, alphas)[1], {}

    res = nn.finite_difference_check(actor.params, {}, loss, grads)
    assert res.checked > 1000
    assert res.max_rel_error <= 1e-4


def test_objective_value_matches_update():
    actor, critic = ActorNet.create(0), CriticNet.create(1)
    s = np.random.default_rng(0).normal(size=(5, 16))
    obj, _ = actor_update(actor, critic, s, np.full(5, 0.3))
    assert obj == pytest.approx(cvar_objective(actor, critic, s, np.full(5, 0.3)), rel=1e-14)
