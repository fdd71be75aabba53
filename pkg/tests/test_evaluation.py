import numpy as np
import pytest

from wcpg import nn
from wcpg.evaluation import (EVAL_ALPHAS, GRADCHECK_CASES, LEFT_TURN_ROWS, EvalRecord, SweepSpec,
                             alpha_sweep, evaluate, extrapolation_sweep, format_rate, gradcheck_all,
                             sem_percent, summarize, uncertainty_trace)
from wcpg.sim import ScenarioConfig
from wcpg.trainer import TrainConfig, train


@pytest.fixture(scope="module")
def ckpt():
    cfg = TrainConfig(episodes=2, batch=8, max_steps=60)
    learner, _ = train(cfg, scenario_config=ScenarioConfig.left_turn(max_steps=60))
    return learner.checkpoint({"scenario_config": ScenarioConfig.left_turn().to_dict()})


@pytest.mark.parametrize("count,text", [(0, "0.0 ±0.0"), (1, "1.0 ±1.0"), (2, "2.0 ±1.4"),
                                        (15, "15.0 ±3.6"), (26, "26.0 ±4.4")])
def test_sem_rendering(count, text):
    assert format_rate(count, 100) == text


def test_sem_formula():
    assert sem_percent(0.15, 100) == pytest.approx(100 * np.sqrt(0.15 * 0.85 / 100))
    with pytest.raises(ValueError):
        sem_percent(0.5, 0)


def test_summary_rates_add_up():
    recs = [EvalRecord(i, 0.1, c, 10, 0.0, 1.0, 1.0)
            for i, c in enumerate(["collision"] * 15 + ["success"] * 80 + ["timeout"] * 5)]
    s = summarize(recs)
    assert (s["collision"], s["success"], s["timeout"]) == (15.0, 80.0, 5.0)
    assert s["collision_sem"] == pytest.approx(3.5707, abs=1e-4)
    with pytest.raises(ValueError):
        summarize([])


def test_evaluate_is_deterministic(ckpt):
    cfg = ScenarioConfig.left_turn()
    a, sa = evaluate(ckpt, cfg, 0.3, 4, seed=1)
    b, sb = evaluate(ckpt, cfg, 0.3, 4, seed=1)
    assert a == b and sa == sb
    assert len(a) == 4 and all(r.cause in ("collision", "success", "timeout") for r in a)


def test_evaluate_rejects_other_scenario(ckpt):
    with pytest.raises(ValueError):
        evaluate(ckpt, ScenarioConfig.merge(), 0.3, 1, 0)


def test_sweep_spec():
    spec = SweepSpec.for_scenario("left_turn")
    assert spec.rows()[2] == (10.0, 0.05, 0) and len(spec.rows()) == len(LEFT_TURN_ROWS)
    assert spec.alphas == EVAL_ALPHAS
    with pytest.raises(ValueError):
        SweepSpec((0.0,), (0.01,), (0,), alphas=())


def test_extrapolation_sweep_cells(ckpt):
    spec = SweepSpec.from_rows([(0.0, 0.01), (10.0, 0.05)], alphas=(0.1, 1.0), trials_per_cell=2)
    rows = extrapolation_sweep(ckpt, ScenarioConfig.left_turn(), spec, 0)
    assert [(r["velocity_offset"], r["alpha"]) for r in rows] == [(0.0, 0.1), (0.0, 1.0), (10.0, 0.1), (10.0, 1.0)]


def test_alpha_sweep(ckpt):
    rows = alpha_sweep(ckpt, ScenarioConfig.left_turn(), [0.5], 3, 0)
    assert len(rows) == 1 and rows[0]["return_p1"] <= rows[0]["return_p99"]
    with pytest.raises(ValueError):
        alpha_sweep(ckpt, ScenarioConfig.left_turn(), [], 3, 0)


def test_uncertainty_trace(ckpt):
    rows = uncertainty_trace(ckpt, ScenarioConfig.left_turn(), 0.1, 0)
    assert 0 < len(rows) <= 75
    assert all(r["critic_sigma"] > 0 for r in rows)
    assert rows[-1]["terminal"] == 1 and all(r["terminal"] == 0 for r in rows[:-1])


def test_gradcheck_report_single_point():
    report = gradcheck_all(points=1)
    assert len(report) >= 4
    assert {r["component"] for r in report} == set(GRADCHECK_CASES)
    assert all(r["passed"] for r in report), report


def test_gradcheck_detects_corruption():
    def corrupted(rng, seed, batch):
        params, inputs, loss, grad = GRADCHECK_CASES["critic"](rng, seed, batch)

        def bad(p, x):
            g, gi = grad(p, x)
            g.weights[3] = g.weights[3] * 1.05
            return g, gi

        return params, inputs, loss, bad

    report = gradcheck_all(points=1, cases={"corrupted_critic": corrupted})
    assert not report[0]["passed"]


def test_gradcheck_components_use_full_coverage():
    report = gradcheck_all(points=1, cases={"actor": GRADCHECK_CASES["actor"]})
    params = GRADCHECK_CASES["actor"](np.random.default_rng(0), 0, 4)[0]
    assert report[0]["checked"] + report[0]["skipped_kinks"] == params.num_params + 4 * 17
    assert isinstance(params, nn.MlpParams)
