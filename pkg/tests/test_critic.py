from types import SimpleNamespace

import numpy as np
import pytest

from wcpg import nn
from wcpg.critic import (CriticNet, critic_action_grads, critic_loss_and_grads, make_target,
                         predict, predict_raw, project_target, soft_update)
from wcpg.risk import VARIANCE_FLOOR, GaussianReturn
from wcpg.tabular import TabularMdp, policy_evaluate_tabular

from toy_mdps import deterministic_mdps, iterate_targets


def _batch(n, rng, done=None, reward=None):
    return SimpleNamespace(
        state=rng.normal(size=(n, 16)), action=rng.uniform(-4, 4, n),
        reward=rng.normal(size=n) if reward is None else np.asarray(reward, dtype=float),
        next_state=rng.normal(size=(n, 16)),
        done=np.zeros(n, bool) if done is None else np.asarray(done),
        alpha=rng.uniform(0.01, 1, n))


def test_fresh_critic_at_zero_input():
    z = predict(CriticNet.create(0), np.zeros(16), 0.0, 0.5)
    assert abs(z.mean[0]) < 1e-12
    assert z.variance[0] == pytest.approx(np.log(2.0) + VARIANCE_FLOOR, abs=1e-12)


def test_predict_is_deterministic_and_rejects_nan():
    net = CriticNet.create(1)
    s = np.random.default_rng(0).normal(size=(3, 16))
    a, b = predict(net, s, 1.0, 0.3), predict(net, s, 1.0, 0.3)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.variance, b.variance)
    with pytest.raises(ValueError):
        predict(net, np.full(16, np.nan), 0.0, 0.5)


def test_variance_is_positive_far_from_origin():
    net = CriticNet.create(2, sigma=5.0)
    z = predict(net, np.random.default_rng(1).normal(scale=100, size=(50, 16)), 4.0, 0.1)
    assert np.all(z.variance >= VARIANCE_FLOOR)


def test_terminal_target():
    rng = np.random.default_rng(0)
    b = _batch(1, rng, done=[True], reward=[-50.0])
    t = make_target(CriticNet.create(0), lambda s, a: np.zeros(len(s)), b, 0.99)
    assert t.mean[0] == -50.0 and t.variance[0] == VARIANCE_FLOOR


def test_myopic_target():
    rng = np.random.default_rng(0)
    b = _batch(4, rng)
    t = make_target(CriticNet.create(0), lambda s, a: np.zeros(len(s)), b, 0.0)
    assert np.array_equal(t.mean, b.reward)
    assert np.all(t.variance == VARIANCE_FLOOR)


def test_target_bootstraps_from_next_state():
    rng = np.random.default_rng(0)
    b = _batch(5, rng)
    fixed = lambda s, a, al: GaussianReturn(np.full(len(s), 2.0), np.full(len(s), 3.0))  # noqa: E731
    t = make_target(fixed, lambda s, a: np.zeros(len(s)), b, 0.5)
    assert np.allclose(t.mean, b.reward + 1.0)
    assert np.allclose(t.variance, 0.75)


# -- iterated targets against exact tabular values ---------------------------

@pytest.mark.parametrize("case", range(3))
def test_iterated_targets_match_tabular(case):
    table, exact = iterate_targets(*deterministic_mdps()[case])
    assert np.max(np.abs(table.mean - exact.mean)) <= 1e-10
    assert np.max(np.abs(table.variance - exact.variance)) <= 1e-10


def test_two_step_chain_matches_monte_carlo():
    P, R, pi, gamma = deterministic_mdps()[0]
    exact = policy_evaluate_tabular(TabularMdp(P, R, np.zeros_like(R)), pi, gamma)
    assert exact.mean[0, 0] == pytest.approx(1.5 + 0.9 * -2.0, abs=1e-14)
    assert exact.variance[0, 0] == pytest.approx(0.0, abs=1e-14)


# -- target projection ---------------------------------------------------------

def test_projection_fixed_point_is_expected_variance():
    rng = np.random.default_rng(0)
    mu, spread = 3.0, 2.0
    samples = mu + spread * rng.standard_normal(200_000)
    sample = GaussianReturn(samples, np.full(samples.size, 0.5))
    ref = GaussianReturn(np.full(samples.size, mu), np.full(samples.size, 1.0))
    expected_var = spread ** 2 + 0.5
    live = np.full(samples.size, expected_var)
    t = project_target(sample, ref, linearize_variance=live)
    # regressing sigma onto the projected targets lands on sqrt(E[V])
    assert np.mean(np.sqrt(t.variance)) == pytest.approx(np.sqrt(expected_var), rel=1e-2)
    assert np.array_equal(t.mean, samples)


def test_projection_caps_sigma():
    t = project_target(GaussianReturn(np.array([100.0]), np.array([1.0])),
                       GaussianReturn(np.array([0.0]), np.array([1.0])), sigma_max=3.0)
    assert t.variance[0] == pytest.approx(9.0)


# -- loss and gradients ---------------------------------------------------------

def test_loss_is_zero_at_target():
    rng = np.random.default_rng(0)
    net = CriticNet.create(3, sigma=1.0)
    b = _batch(6, rng)
    z = predict(net, b.state, b.action, b.alpha)
    loss, grads = critic_loss_and_grads(net, b.state, b.action, b.alpha, z)
    assert loss == pytest.approx(0.0, abs=1e-24)
    assert max(np.max(np.abs(g)) for g in grads.arrays()) < 1e-12


def test_single_item_loss_nine():
    net = CriticNet.create(0)
    net.params.weights[-1][:] = 0.0
    net.params.biases[-1][:] = [0.0, np.log(np.expm1(1.0 - VARIANCE_FLOOR))]
    z = predict(net, np.zeros(16), 0.0, 0.5)
    assert z.mean[0] == 0.0 and z.variance[0] == pytest.approx(1.0, abs=1e-14)
    loss, _ = critic_loss_and_grads(net, np.zeros((1, 16)), 0.0, 0.5, GaussianReturn(np.array([3.0]), np.array([1.0])))
    assert loss == pytest.approx(9.0, abs=1e-12)


def test_empty_batch_rejected():
    with pytest.raises(ValueError):
        critic_loss_and_grads(CriticNet.create(0), np.zeros((0, 16)), np.zeros(0), np.zeros(0),
                              GaussianReturn(np.zeros(0), np.ones(0)))


def test_loss_grads_match_finite_differences():
    rng = np.random.default_rng(4)
    net = CriticNet.create(5, sigma=1.0)
    b = _batch(5, rng)
    target = GaussianReturn(rng.normal(size=5), rng.uniform(0.5, 2.0, 5))

    def loss(params, _inputs):
        return critic_loss_and_grads(CriticNet(params), b.state, b.action, b.alpha, target)[0]

    def grads(params, _inputs):
        return critic_loss_and_grads(CriticNet(params), b.state, b.action, b.alpha, target)[1], {}

    res = nn.finite_difference_check(net.params, {}, loss, grads, max_coords=600, rng=rng)
    assert res.checked > 300
    assert res.max_rel_error <= 1e-4


def test_action_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    net = CriticNet.create(7, sigma=1.0)
    s, a, al = rng.normal(size=(4, 16)), rng.uniform(-3, 3, 4), rng.uniform(0.1, 1, 4)
    dm, dv = rng.normal(size=4), rng.normal(size=4)
    g = critic_action_grads(net, s, a, al, dm, dv)
    h = 1e-6
    for i in range(4):
        up, down = a.copy(), a.copy()
        up[i] += h
        down[i] -= h
        f = lambda act: float(np.sum(dm * predict(net, s, act, al).mean + dv * predict(net, s, act, al).variance))  # noqa: E731
        assert g[i] == pytest.approx((f(up) - f(down)) / (2 * h), rel=1e-5, abs=1e-9)


def test_soft_update_on_nets():
    live, target = CriticNet.create(1), CriticNet.create(2)
    assert np.array_equal(soft_update(target, live, 1.0).params.flat(), live.params.flat())
    assert np.array_equal(soft_update(live, live.copy(), 0.001).params.flat(), live.params.flat())


def test_predict_raw_exposes_head():
    z, raw, tape = predict_raw(CriticNet.create(0), np.zeros((2, 16)), 0.0, 0.5)
    assert raw.shape == (2, 2) and tape.batch == 2 and z.mean.shape == (2,)
