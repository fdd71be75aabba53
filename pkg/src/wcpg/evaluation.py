"""Deterministic evaluation, sweeps, uncertainty traces and the gradient check suite."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .actor import ActorNet, act, actor_update, cvar_objective
from .checkpoint import Checkpoint
from .critic import CriticNet, critic_loss_and_grads, head_grad, predict, predict_raw
from .risk import GaussianReturn, w2_gaussian
from .sim import DrivingEnv, ScenarioConfig
from .trainer import episode_seed

EVAL_ALPHAS = (0.02, 0.1, 0.3, 0.6, 1.0)
# (velocity offset m/s, spawn rate, extra agents); first row is the training setting
LEFT_TURN_ROWS = ((0.0, 0.01, 0), (5.0, 0.05, 0), (10.0, 0.05, 0), (15.0, 0.05, 0),
                  (0.0, 0.02, 0), (0.0, 0.08, 0), (10.0, 0.08, 0))
MERGE_ROWS = ((0.0, 0.01, 0), (5.0, 0.01, 0), (10.0, 0.01, 0), (15.0, 0.01, 0),
              (0.0, 0.02, 0), (0.0, 0.03, 0), (10.0, 0.03, 0))
EVAL_STREAM = 1
CAUSES = ("collision", "success", "timeout")


@dataclass(frozen=True)
class EvalRecord:
    seed: int
    alpha: float
    cause: str
    steps: int
    episode_return: float
    mean_sigma: float
    max_sigma: float


def sem_percent(p_hat: float, n: int) -> float:
    """Binomial standard error of a rate, in percentage points."""
    if n < 1:
        raise ValueError("need at least one trial")
    return 100.0 * math.sqrt(p_hat * (1.0 - p_hat) / n)


def format_rate(count: int, n: int) -> str:
    """``"15.0 ±3.6"`` style rendering of ``count`` events out of ``n``."""
    return f"{100.0 * count / n:.1f} ±{sem_percent(count / n, n):.1f}"


def _check_scenario(ckpt: Checkpoint, config: ScenarioConfig) -> None:
    trained = ckpt.meta.get("scenario_config", {}).get("scenario")
    if trained is not None and trained != config.scenario:
        raise ValueError(f"checkpoint was trained on {trained!r}, not {config.scenario!r}")


def run_episode(ckpt: Checkpoint, config: ScenarioConfig, alpha: float, env_seed: int,
                action_repeat: int = 4, trace: bool = False):
    """One noise-free episode with a frozen normalizer; returns ``(record, trace_rows)``."""
    env = DrivingEnv(config)
    obs = env.reset(env_seed)
    total, steps, done = 0.0, 0, False
    sigmas, rows = [], []
    cause = "running"
    k = 0
    while not done:
        s_norm = ckpt.normalizer.normalize(obs)
        action = act(ckpt.actor, s_norm, alpha)
        z = predict(ckpt.critic, s_norm, action, alpha)
        sigma = float(np.sqrt(z.variance[0]))
        sigmas.append(sigma)
        reward_macro = 0.0
        for _ in range(action_repeat):
            out = env.step(action)
            total += out.reward
            reward_macro += out.reward
            steps += 1
            done = out.done
            if done:
                cause = out.info["cause"]
                break
            obs = out.observation
        if trace:
            ego = env.world.ego
            rows.append({"step": k, "t": round(steps * config.dt, 10), "x": ego.x, "y": ego.y,
                         "heading": ego.heading, "speed": ego.speed, "action": action,
                         "reward": reward_macro, "critic_mean": float(z.mean[0]),
                         "critic_sigma": sigma, "terminal": int(done),
                         "cause": cause if done else ""})
        k += 1
    record = EvalRecord(int(env_seed), float(alpha), cause, steps, total,
                        float(np.mean(sigmas)), float(np.max(sigmas)))
    return record, rows


def summarize(records, alpha: float | None = None) -> dict:
    n = len(records)
    if n == 0:
        raise ValueError("no records to summarize")
    counts = {c: sum(r.cause == c for r in records) for c in CAUSES}
    out = {"alpha": alpha if alpha is not None else records[0].alpha, "trials": n}
    for c in ("collision", "success"):
        out[c] = 100.0 * counts[c] / n
        out[c + "_sem"] = sem_percent(counts[c] / n, n)
    # computed as the remainder so the three rates add up to exactly 100
    out["timeout"] = 100.0 - out["collision"] - out["success"]
    out["timeout_sem"] = sem_percent(counts["timeout"] / n, n)
    out["mean_steps"] = float(np.mean([r.steps for r in records]))
    out["mean_return"] = float(np.mean([r.episode_return for r in records]))
    out["mean_sigma"] = float(np.mean([r.mean_sigma for r in records]))
    return out


def evaluate(ckpt: Checkpoint, config: ScenarioConfig, alpha: float, n_trials: int, seed: int):
    """``n_trials`` deterministic episodes; returns ``(records sorted by seed, summary)``."""
    _check_scenario(ckpt, config)
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    records = [run_episode(ckpt, config, alpha, episode_seed(seed, i, EVAL_STREAM))[0]
               for i in range(n_trials)]
    records.sort(key=lambda r: r.seed)
    return records, summarize(records, alpha)


@dataclass(frozen=True)
class SweepSpec:
    velocity_offsets: tuple
    spawn_rates: tuple
    extra_agents: tuple
    alphas: tuple = EVAL_ALPHAS
    trials_per_cell: int = 100

    def __post_init__(self):
        if not (self.velocity_offsets and self.spawn_rates and self.alphas):
            raise ValueError("sweep lists must be nonempty")
        if not len(self.velocity_offsets) == len(self.spawn_rates) == len(self.extra_agents):
            raise ValueError("velocity_offsets, spawn_rates and extra_agents are parallel lists")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be positive")

    @classmethod
    def from_rows(cls, rows, alphas=EVAL_ALPHAS, trials_per_cell: int = 100) -> "SweepSpec":
        rows = list(rows)
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows),
                   tuple(r[2] if len(r) > 2 else 0 for r in rows), tuple(alphas), trials_per_cell)

    @classmethod
    def for_scenario(cls, scenario: str, **kw) -> "SweepSpec":
        return cls.from_rows(LEFT_TURN_ROWS if scenario == "left_turn" else MERGE_ROWS, **kw)

    def rows(self):
        return list(zip(self.velocity_offsets, self.spawn_rates, self.extra_agents))


def extrapolation_sweep(ckpt: Checkpoint, base: ScenarioConfig, spec: SweepSpec, seed: int) -> list[dict]:
    """One :func:`evaluate` per (traffic row, alpha) cell; seeds shared across cells."""
    out = []
    for vel, spawn, extra in spec.rows():
        cfg = base.extrapolated(vel, spawn, extra)
        for alpha in spec.alphas:
            _, s = evaluate(ckpt, cfg, alpha, spec.trials_per_cell, seed)
            out.append({"velocity_offset": vel, "spawn_rate": spawn, "extra_agents": extra, **s})
    return out


def alpha_sweep(ckpt: Checkpoint, config: ScenarioConfig, alphas, n_trials: int, seed: int) -> list[dict]:
    """Return percentiles, mean steps and mean critic sigma for each alpha."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be nonempty")
    rows = []
    for alpha in alphas:
        records, s = evaluate(ckpt, config, alpha, n_trials, seed)
        returns = np.array([r.episode_return for r in records])
        rows.append({"alpha": alpha, "return_p1": float(np.percentile(returns, 1)),
                     "return_p99": float(np.percentile(returns, 99)),
                     "return_mean": s["mean_return"], "mean_steps": s["mean_steps"],
                     "mean_sigma": s["mean_sigma"], "collision": s["collision"],
                     "success": s["success"], "timeout": s["timeout"]})
    return rows


def uncertainty_trace(ckpt: Checkpoint, config: ScenarioConfig, alpha: float, seed: int) -> list[dict]:
    """Per-macro-step pose, action and critic mean/sigma for one evaluation episode."""
    _check_scenario(ckpt, config)
    _, rows = run_episode(ckpt, config, alpha, episode_seed(seed, 0, EVAL_STREAM), trace=True)
    return rows


def records_as_rows(records) -> list[dict]:
    return [asdict(r) for r in records]


# ---------------------------------------------------------------------------
# gradient check suite

GRADCHECK_TOLERANCE = 1e-4


def _jitter(params: nn.MlpParams, rng: np.random.Generator, scale: float = 0.5) -> nn.MlpParams:
    """Move away from the initial point so biases and weights are all non-trivial."""
    out = params.copy()
    for spec, w, b in zip(out.specs, out.weights, out.biases):
        w += rng.normal(0.0, scale / math.sqrt(spec.input_width), w.shape)
        b += rng.normal(0.0, 0.1, b.shape)
    return out


def _actor_case(rng, seed, batch):
    actor = ActorNet.create(seed)
    actor.params = _jitter(actor.params, rng)
    inputs = {"I": rng.normal(size=(batch, 16)), "I_alpha": rng.uniform(0.01, 1.0, (batch, 1))}
    w_out = rng.normal(size=(batch, 1))

    def loss(p, x):
        out, _ = nn.forward(p, x)
        return float(np.sum(out * w_out))

    def grad(p, x):
        _, tape = nn.forward(p, x)
        return nn.backward(p, tape, w_out)

    return actor.params, inputs, loss, grad


def _critic_inputs(rng, batch):
    return {"I": rng.normal(size=(batch, 16)), "I_act": rng.uniform(-4, 4, (batch, 1)),
            "I_alpha": rng.uniform(0.01, 1.0, (batch, 1))}


def _critic_case(rng, seed, batch):
    critic = CriticNet.create(seed)
    critic.params = _jitter(critic.params, rng)
    inputs = _critic_inputs(rng, batch)
    c_mean, c_var = rng.normal(size=batch), rng.normal(size=batch)

    def loss(p, x):
        z, _, _ = predict_raw(CriticNet(p), x["I"], x["I_act"], x["I_alpha"])
        return float(np.sum(c_mean * z.mean + c_var * z.variance))

    def grad(p, x):
        _, raw, tape = predict_raw(CriticNet(p), x["I"], x["I_act"], x["I_alpha"])
        return nn.backward(p, tape, head_grad(raw, c_mean, c_var))

    return critic.params, inputs, loss, grad


def _w2_case(rng, seed, batch):
    critic = CriticNet.create(seed)
    critic.params = _jitter(critic.params, rng)
    inputs = _critic_inputs(rng, batch)
    target = GaussianReturn(rng.normal(size=batch), rng.uniform(0.1, 4.0, batch))

    def loss(p, x):
        net = CriticNet(p)
        z = predict(net, x["I"], x["I_act"], x["I_alpha"])
        return float(np.mean(w2_gaussian(z, target)))

    def grad(p, x):
        _, g = critic_loss_and_grads(CriticNet(p), x["I"], x["I_act"], x["I_alpha"], target)
        return g, {}

    return critic.params, inputs, loss, grad


def _cvar_case(rng, seed, batch):
    actor = ActorNet.create(seed)
    actor.params = _jitter(actor.params, rng)
    critic = CriticNet.create(seed + 1)
    critic.params = _jitter(critic.params, rng)
    inputs = {"I": rng.normal(size=(batch, 16)), "I_alpha": rng.uniform(0.01, 1.0, (batch, 1))}

    def loss(p, x):
        return cvar_objective(ActorNet(p, actor.action_scale), critic, x["I"], x["I_alpha"].reshape(-1))

    def grad(p, x):
        _, g = actor_update(ActorNet(p, actor.action_scale), critic, x["I"], x["I_alpha"].reshape(-1))
        return g, {}

    return actor.params, inputs, loss, grad


GRADCHECK_CASES = {"actor": _actor_case, "critic": _critic_case,
                   "w2_loss": _w2_case, "cvar_objective": _cvar_case}


def gradcheck_all(points: int = 10, seed: int = 0, batch: int = 4, h: float = 1e-5,
                  tolerance: float = GRADCHECK_TOLERANCE, cases=None) -> list[dict]:
    """Worst finite-difference relative error per component over random parameter points."""
    report = []
    for case_index, (name, make) in enumerate((cases or GRADCHECK_CASES).items()):
        worst, checked, skipped = 0.0, 0, 0
        for k in range(points):
            rng = np.random.default_rng([seed, case_index, k])
            params, inputs, loss, grad = make(rng, seed * 1000 + k, batch)
            res = nn.finite_difference_check(params, inputs, loss, grad, h=h)
            worst = max(worst, res.max_rel_error)
            checked += res.checked
            skipped += res.skipped_kinks
        report.append({"component": name, "points": points, "max_rel_error": worst,
                       "checked": checked, "skipped_kinks": skipped, "passed": worst <= tolerance})
    return report
