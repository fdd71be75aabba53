import numpy as np
import pytest

from wcpg import nn
from wcpg.actor import ACTOR_INPUTS, actor_specs
from wcpg.nn import LayerSpec


def _three_layer(seed=0):
    specs = (LayerSpec("a", ("x",), 5, 7, "tanh"),
             LayerSpec("b", ("a",), 7, 6, "softplus"),
             LayerSpec("out", ("b",), 6, 2, "linear"))
    return nn.init_params({"x": 5}, specs, seed)


def _mse_loss(params, inputs):
    out, _ = nn.forward(params, inputs)
    return 0.5 * float(np.sum(out ** 2))


def _mse_grads(params, inputs):
    out, tape = nn.forward(params, inputs)
    return nn.backward(params, tape, out)


def test_actor_parameter_count():
    params = nn.init_params(ACTOR_INPUTS, actor_specs(), seed=0)
    assert params.num_params == 16 * 32 + 32 + 1 * 16 + 16 + 48 * 32 + 32 + 32 * 1 + 1 == 2177


def test_init_is_seed_deterministic():
    a, b = _three_layer(3), _three_layer(3)
    for x, y in zip(a.arrays(), b.arrays()):
        assert np.array_equal(x, y)
    c = _three_layer(4)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_scale_is_orthogonal_times_sigma():
    specs = (LayerSpec("out", ("x",), 8, 8, "linear", init_sigma=2.0),)
    w = nn.init_params({"x": 8}, specs, 0).weights[0]
    assert np.allclose(w.T @ w, (2.0 / np.sqrt(8)) ** 2 * np.eye(8))


@pytest.mark.parametrize("bad", [
    lambda: LayerSpec("out", ("x",), 3, 0),
    lambda: LayerSpec("out", ("x",), 3, 2, "swish"),
    lambda: nn.init_params({"x": 3}, (LayerSpec("out", ("x",), 4, 2),), 0),
    lambda: nn.init_params({"x": 3}, (LayerSpec("out", ("y",), 3, 2),), 0),
    lambda: nn.init_params({"x": 3}, (), 0),
])
def test_bad_graphs_rejected(bad):
    with pytest.raises(ValueError):
        bad()


def test_softplus_at_zero():
    assert nn.softplus(0.0) == pytest.approx(np.log(2.0), abs=1e-12)
    assert float(nn.softplus(0.0)) == pytest.approx(0.693147, abs=5e-7)


def test_softplus_is_stable():
    assert nn.softplus(800.0) == 800.0
    assert 0.0 < nn.softplus(-700.0) < 1e-300


def test_zero_relu_stack_gives_zero():
    params = nn.init_params({"x": 4}, (LayerSpec("a", ("x",), 4, 3, "relu"),
                                       LayerSpec("out", ("a",), 3, 2, "relu")), 0)
    params = params.map(np.zeros_like)
    out, _ = nn.forward(params, {"x": np.random.default_rng(0).normal(size=(5, 4))})
    assert np.all(out == 0.0)


def test_identity_layer():
    params = nn.init_params({"x": 3}, (LayerSpec("out", ("x",), 3, 3),), 0)
    params.weights[0] = np.eye(3)
    x = np.arange(6.0).reshape(2, 3)
    out, _ = nn.forward(params, {"x": x})
    assert np.array_equal(out, x)


def test_forward_rejects_nan_and_bad_shapes():
    params = _three_layer()
    with pytest.raises(ValueError):
        nn.forward(params, {"x": np.array([[0.0, np.nan, 0.0, 0.0, 0.0]])})
    with pytest.raises(ValueError):
        nn.forward(params, {"x": np.zeros((2, 4))})
    with pytest.raises(ValueError):
        nn.forward(params, {})


def test_forward_is_pure():
    params = _three_layer()
    x = np.random.default_rng(1).normal(size=(4, 5))
    a, _ = nn.forward(params, {"x": x})
    b, _ = nn.forward(params, {"x": x})
    assert np.array_equal(a, b)


def test_backward_zero_output_grad():
    params = _three_layer()
    _, tape = nn.forward(params, {"x": np.ones((3, 5))})
    grads, inp = nn.backward(params, tape, np.zeros((3, 2)))
    assert all(np.all(g == 0) for g in grads.arrays())
    assert np.all(inp["x"] == 0)


def test_backward_shape_mismatch():
    params = _three_layer()
    _, tape = nn.forward(params, {"x": np.ones((3, 5))})
    with pytest.raises(ValueError):
        nn.backward(params, tape, np.zeros((3, 3)))


def test_backward_matches_finite_differences():
    params = _three_layer(seed=5)
    x = np.random.default_rng(2).normal(size=(4, 5))
    res = nn.finite_difference_check(params, {"x": x}, _mse_loss, _mse_grads)
    assert res.checked == params.num_params + x.size
    assert res.max_rel_error <= 1e-5


def test_gradcheck_quadratic_on_linear_net():
    params = nn.init_params({"x": 3}, (LayerSpec("out", ("x",), 3, 2),), 0)
    x = np.random.default_rng(0).normal(size=(6, 3))
    res = nn.finite_difference_check(params, {"x": x}, _mse_loss, _mse_grads)
    assert res.max_rel_error <= 1e-8


def test_gradcheck_constant_loss_is_zero():
    params = _three_layer()
    x = np.ones((2, 5))
    res = nn.finite_difference_check(params, {"x": x}, lambda p, i: 3.0,
                                     lambda p, i: (p.zeros_like(), {"x": np.zeros_like(x)}))
    assert res.max_rel_error == 0.0


def test_gradcheck_catches_corrupted_backward():
    params = _three_layer()
    x = np.random.default_rng(3).normal(size=(4, 5))

    def corrupted(p, i):
        grads, inp = _mse_grads(p, i)
        grads.weights[1] = grads.weights[1] * 1.1
        return grads, inp

    assert nn.finite_difference_check(params, {"x": x}, _mse_loss, corrupted).max_rel_error > 1e-2


def test_gradcheck_skips_relu_kinks():
    params = nn.init_params({"x": 1}, (LayerSpec("out", ("x",), 1, 1, "relu"),), 0)
    params.weights[0][:] = 1.0
    x = np.array([[0.0]])  # exactly on the kink
    res = nn.finite_difference_check(params, {"x": x}, _mse_loss, _mse_grads)
    assert res.skipped_kinks > 0


def test_adam_zero_gradient():
    params = _three_layer()
    state = nn.AdamState.for_params(params)
    new, state2 = nn.adam_step(params, params.zeros_like(), state)
    assert state2.step_count == 1
    for a, b in zip(params.arrays(), new.arrays()):
        assert np.array_equal(a, b)


def test_adam_first_step_magnitude_is_learning_rate():
    params = nn.init_params({"x": 1}, (LayerSpec("out", ("x",), 1, 1),), 0)
    grads = params.map(lambda a: np.full_like(a, 0.37))
    new, _ = nn.adam_step(params, grads, nn.AdamState.for_params(params, learning_rate=1e-3))
    step = params.flat() - new.flat()
    assert np.allclose(step, 1e-3, rtol=1e-6)


def test_adam_descends_constant_gradient():
    params = nn.init_params({"x": 1}, (LayerSpec("out", ("x",), 1, 1),), 0)
    start = params.flat().copy()
    grads = params.map(lambda a: np.full_like(a, -2.0))
    state = nn.AdamState.for_params(params, learning_rate=0.01)
    for _ in range(50):
        params, state = nn.adam_step(params, grads, state)
    assert np.all(params.flat() > start)


def test_soft_update():
    live = _three_layer(1)
    target = _three_layer(2)
    assert np.array_equal(nn.soft_update(target, live, 1.0).flat(), live.flat())
    assert np.array_equal(nn.soft_update(live, live.copy(), 0.001).flat(), live.flat())
    one = nn.init_params({"x": 1}, (LayerSpec("out", ("x",), 1, 1),), 0)
    a = one.map(np.zeros_like)
    b = one.map(np.ones_like)
    assert np.allclose(nn.soft_update(a, b, 0.5).flat(), 0.5)
    with pytest.raises(ValueError):
        nn.soft_update(target, nn.init_params({"x": 1}, (LayerSpec("out", ("x",), 1, 1),), 0), 0.5)


def test_flat_round_trip():
    p = _three_layer()
    q = p.with_flat(p.flat() * 2)
    assert np.allclose(q.flat(), 2 * p.flat())
    with pytest.raises(ValueError):
        p.with_flat(np.zeros(3))
