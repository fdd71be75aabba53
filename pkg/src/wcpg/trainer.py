"""Risk-conditioned actor-critic training loop with action repeat and replay."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .actor import ActorNet, act, actor_update, explore, policy
from .checkpoint import Checkpoint, save_checkpoint
from .critic import (CriticNet, critic_loss_and_grads, make_target, predict, predict_raw,
                     project_target)
from .replay import ReplayBuffer, RunningNormalizer, Transition
from .risk import ALPHA_MAX, ALPHA_MIN, VARIANCE_FLOOR


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 5000
    max_steps: int = 300
    gamma: float = 0.99
    batch: int = 512
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    tau: float = 0.001
    noise_sigma: float = 2.0
    action_repeat: int = 4
    alpha_range: tuple = (ALPHA_MIN, ALPHA_MAX)
    seed: int = 0
    eval_every: int = 0
    eval_trials: int = 20
    checkpoint_dir: str | None = None
    scenario: str = "left_turn"
    replay_capacity: int = 1_000_000
    normalizer_clip: float | None = 5.0
    # off by default: one update round per held action rather than per env step
    update_every_env_step: bool = False
    target_sigma_max: float | None = None
    cvar_kind: str = "ratio"

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        for name in ("max_steps", "batch", "action_repeat", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr_actor", "lr_critic", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.gamma <= 1 or self.noise_sigma < 0:
            raise ValueError("gamma must be in (0, 1] and noise_sigma non-negative")
        lo, hi = self.alpha_range
        if not 0 < lo <= hi <= 1:
            raise ValueError("alpha_range must lie within (0, 1]")
        object.__setattr__(self, "alpha_range", (float(lo), float(hi)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha_range"] = list(self.alpha_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "alpha_range" in d:
            d["alpha_range"] = tuple(d["alpha_range"])
        return cls(**d)


LOG_FIELDS = ("episode", "alpha", "return", "steps", "cause", "mean_sigma",
              "critic_loss", "actor_objective", "updates")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    evals: list = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(dict(row))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=LOG_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r[k]) for k in LOG_FIELDS})


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


@dataclass
class Learner:
    """Networks, optimizer state and the normalizer, updated in place by the loop."""

    actor: ActorNet
    critic: CriticNet
    actor_target: ActorNet
    critic_target: CriticNet
    actor_opt: nn.AdamState
    critic_opt: nn.AdamState
    normalizer: RunningNormalizer
    updates: int = 0

    @classmethod
    def create(cls, config: TrainConfig, state_dim: int = 16) -> "Learner":
        ss = np.random.SeedSequence([config.seed, 7])
        a_seed, c_seed = (int(x) for x in ss.generate_state(2))
        actor = ActorNet.create(a_seed, state_dim)
        critic = CriticNet.create(c_seed, state_dim)
        return cls(actor, critic, actor.copy(), critic.copy(),
                   nn.AdamState.for_params(actor.params, config.lr_actor),
                   nn.AdamState.for_params(critic.params, config.lr_critic),
                   RunningNormalizer(state_dim, clip=config.normalizer_clip))

    def checkpoint(self, meta: dict | None = None) -> Checkpoint:
        return Checkpoint(self.actor, self.actor_target, self.critic, self.critic_target,
                          self.normalizer.copy(), dict(meta or {}))


def update_step(learner: Learner, buffer: ReplayBuffer, config: TrainConfig,
                rng: np.random.Generator) -> tuple[float, float]:
    """One critic step, one actor step and one soft update of both targets."""
    batch = buffer.sample(config.batch, rng).normalized(learner.normalizer)
    discount = config.gamma ** config.action_repeat
    sample = make_target(learner.critic_target, policy(learner.actor_target), batch, discount)
    reference = predict(learner.critic_target, batch.state, batch.action, batch.alpha)
    live = predict_raw(learner.critic, batch.state, batch.action, batch.alpha)
    target = project_target(sample, reference, VARIANCE_FLOOR, config.target_sigma_max, live[0].variance)
    loss, grads = critic_loss_and_grads(learner.critic, batch.state, batch.action, batch.alpha, target,
                                        forward=live)
    if not math.isfinite(loss):
        raise FloatingPointError(f"critic loss became {loss} at update {learner.updates}")
    learner.critic.params, learner.critic_opt = nn.adam_step(learner.critic.params, grads, learner.critic_opt)

    objective, ascent = actor_update(learner.actor, learner.critic, batch.state, batch.alpha, config.cvar_kind)
    if not math.isfinite(objective):
        raise FloatingPointError(f"actor objective became {objective} at update {learner.updates}")
    descent = ascent.map(np.negative)
    learner.actor.params, learner.actor_opt = nn.adam_step(learner.actor.params, descent, learner.actor_opt)

    learner.actor_target.params = nn.soft_update(learner.actor_target.params, learner.actor.params, config.tau)
    learner.critic_target.params = nn.soft_update(learner.critic_target.params, learner.critic.params, config.tau)
    learner.updates += 1
    return loss, objective


def _unpack(outcome):
    """Accept either a StepOutcome-like object or an ``(obs, r, done, info)`` tuple."""
    if isinstance(outcome, tuple):
        return outcome
    return outcome.observation, outcome.reward, outcome.done, outcome.info


def run_episode(env, learner: Learner, buffer: ReplayBuffer, config: TrainConfig,
                rng: np.random.Generator, env_seed: int, alpha: float | None = None,
                learn: bool = True) -> dict:
    """Roll out one episode with exploration, storing macro-transitions and learning."""
    if alpha is None:
        alpha = float(rng.uniform(*config.alpha_range))
    obs = np.asarray(env.reset(env_seed), dtype=np.float64)
    learner.normalizer.update(obs)
    total, steps, done, info = 0.0, 0, False, {}
    sigmas, losses, objectives = [], [], []
    rounds = config.action_repeat if config.update_every_env_step else 1
    while not done and steps < config.max_steps:
        s_norm = learner.normalizer.normalize(obs)
        action = explore(act(learner.actor, s_norm, alpha), config.noise_sigma, rng)
        sigmas.append(float(predict(learner.critic, s_norm, action, alpha).std[0]))
        r_macro, disc = 0.0, 1.0
        for _ in range(config.action_repeat):
            nxt, r, done, info = _unpack(env.step(action))
            r_macro += disc * r
            disc *= config.gamma
            total += r
            steps += 1
            if done or steps >= config.max_steps:
                break
        nxt = np.asarray(nxt, dtype=np.float64)
        buffer.push(Transition(obs, action, r_macro, nxt, done, alpha))
        learner.normalizer.update(nxt)
        obs = nxt
        if learn and len(buffer) >= config.batch:
            for _ in range(rounds):
                loss, objective = update_step(learner, buffer, config, rng)
                losses.append(loss)
                objectives.append(objective)
    return {
        "alpha": alpha, "return": total, "steps": steps,
        "cause": info.get("cause", "done" if done else "timeout") if isinstance(info, dict) else "done",
        "mean_sigma": float(np.mean(sigmas)) if sigmas else 0.0,
        "critic_loss": float(np.mean(losses)) if losses else float("nan"),
        "actor_objective": float(np.mean(objectives)) if objectives else float("nan"),
        "updates": learner.updates,
    }


def episode_seed(seed: int, episode: int, stream: int = 0) -> int:
    """Environment seed for one episode; training and evaluation use disjoint streams."""
    return int(np.random.SeedSequence([seed, stream, episode]).generate_state(1)[0])


def make_env(config: TrainConfig, scenario_config=None):
    from .sim import DrivingEnv, ScenarioConfig

    cfg = scenario_config or ScenarioConfig.for_scenario(config.scenario, max_steps=config.max_steps)
    return DrivingEnv(cfg)


def train(config: TrainConfig, env=None, scenario_config=None, progress=None):
    """Run ``config.episodes`` episodes; returns ``(learner, log)``.

    A checkpoint is written to ``config.checkpoint_dir`` when one is set, even
    for zero episodes.
    """
    env = env if env is not None else make_env(config, scenario_config)
    state_dim = getattr(env, "obs_dim", getattr(env, "dim", 16))
    learner = Learner.create(config, state_dim)
    buffer = ReplayBuffer(min(config.replay_capacity, config.episodes * config.max_steps + 1), state_dim)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 11]))
    log = TrainLog()
    # the output location is not part of what was trained
    meta = {"train_config": {k: v for k, v in config.to_dict().items() if k != "checkpoint_dir"}}
    env_cfg = getattr(env, "config", None)
    if env_cfg is not None and hasattr(env_cfg, "to_dict"):
        meta["scenario_config"] = env_cfg.to_dict()
    for ep in range(config.episodes):
        row = run_episode(env, learner, buffer, config, rng, episode_seed(config.seed, ep, 0))
        row["episode"] = ep
        log.append(row)
        if progress is not None:
            progress(row)
        if config.eval_every and (ep + 1) % config.eval_every == 0 and env_cfg is not None:
            from .evaluation import EVAL_ALPHAS, evaluate

            for alpha in EVAL_ALPHAS:
                _, summary = evaluate(learner.checkpoint(meta), env_cfg, alpha, config.eval_trials, config.seed)
                log.evals.append({"episode": ep + 1, **summary})
    meta["episodes_done"] = config.episodes
    if config.checkpoint_dir:
        save_checkpoint(learner.checkpoint(meta), Path(config.checkpoint_dir))
    return learner, log


# ---------------------------------------------------------------------------
# policy evaluation on the lane MDP, used to check the critic against exact values

def train_critic_fixed_policy(env, target_policy, n_episodes: int = 40000, rounds: int = 5,
                              updates_per_round: int = 12000, batch: int = 128, lr: float = 3e-3,
                              gamma: float = 1.0, alpha: float = 0.5, seed: int = 0,
                              lr_decay_to: float = 0.01, critic_sigma: float = 0.01):
    """Fit a critic to ``target_policy`` from uniformly random behavior data.

    ``target_policy`` maps ``(states, alphas)`` to scalar actions.  The data is
    collected up front.  Each round regresses the live critic onto targets
    built from a frozen copy (the same target construction and loss as the
    main loop) with a linearly decaying learning rate, then refreshes the copy.
    For an episodic MDP with horizon H, H + 1 rounds propagate exact values.
    """
    rng = np.random.default_rng(seed)
    dim = getattr(env, "dim", 16)
    buffer = ReplayBuffer(n_episodes * 8, dim)
    for ep in range(n_episodes):
        obs = env.reset(seed=int(rng.integers(2**31)))
        done = False
        while not done:
            a = float(rng.choice([-1.0, 1.0]))
            nxt, r, done, _ = _unpack(env.step(a))
            buffer.push(Transition(obs, a, r, nxt, done, alpha))
            obs = nxt
    critic = CriticNet.create(int(rng.integers(2**31)), dim, sigma=critic_sigma)
    frozen = critic.copy()
    for _ in range(rounds):
        opt = nn.AdamState.for_params(critic.params, lr)
        tail_start = updates_per_round // 2
        averaged, n_avg = None, 0
        for k in range(updates_per_round):
            opt.learning_rate = lr * (1.0 - (1.0 - lr_decay_to) * k / max(updates_per_round - 1, 1))
            b = buffer.sample(batch, rng)
            sample = make_target(frozen, target_policy, b, gamma)
            reference = predict(frozen, b.state, b.action, b.alpha)
            live = predict_raw(critic, b.state, b.action, b.alpha)
            t = project_target(sample, reference, linearize_variance=live[0].variance)
            _, grads = critic_loss_and_grads(critic, b.state, b.action, b.alpha, t, forward=live)
            critic.params, opt = nn.adam_step(critic.params, grads, opt)
            if k >= tail_start:
                # uniform average of the tail iterates damps the SGD noise
                n_avg += 1
                flat = critic.params.flat()
                averaged = flat if averaged is None else averaged + (flat - averaged) / n_avg
        critic = CriticNet(critic.params.with_flat(averaged), critic.variance_floor)
        frozen = critic.copy()
    return critic
