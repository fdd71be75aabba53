"""Experience replay and the streaming input normalizer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .risk import ALPHA_MAX, ALPHA_MIN


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray
    done: bool
    alpha: float


@dataclass
class TransitionBatch:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return len(self.reward)

    def normalized(self, norm: "RunningNormalizer") -> "TransitionBatch":
        return TransitionBatch(norm.normalize(self.state), self.action, self.reward,
                               norm.normalize(self.next_state), self.done, self.alpha)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of raw (unnormalized) transitions."""

    def __init__(self, capacity: int = 1_000_000, state_dim: int = 16):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.state_dim = state_dim
        self._state = np.zeros((capacity, state_dim))
        self._next_state = np.zeros((capacity, state_dim))
        self._action = np.zeros(capacity)
        self._reward = np.zeros(capacity)
        self._done = np.zeros(capacity, dtype=bool)
        self._alpha = np.zeros(capacity)
        self.insertions = 0

    def __len__(self):
        return min(self.insertions, self.capacity)

    def push(self, t: Transition) -> None:
        state = np.asarray(t.state, dtype=np.float64).reshape(-1)
        next_state = np.asarray(t.next_state, dtype=np.float64).reshape(-1)
        if state.size != self.state_dim or next_state.size != self.state_dim:
            raise ValueError(f"states must have {self.state_dim} entries")
        scalars = np.array([t.action, t.reward, t.alpha], dtype=np.float64)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(next_state))
                and np.all(np.isfinite(scalars))):
            raise ValueError("transition contains non-finite values")
        if not ALPHA_MIN <= t.alpha <= ALPHA_MAX:
            raise ValueError(f"alpha {t.alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        i = self.insertions % self.capacity
        self._state[i] = state
        self._next_state[i] = next_state
        self._action[i], self._reward[i], self._alpha[i] = scalars
        self._done[i] = bool(t.done)
        self.insertions += 1

    def _oldest_first(self) -> np.ndarray:
        n = len(self)
        start = self.insertions % self.capacity if self.insertions > self.capacity else 0
        return (start + np.arange(n)) % self.capacity

    def transition(self, k: int) -> Transition:
        """The k-th oldest stored transition."""
        i = self._oldest_first()[k]
        return Transition(self._state[i].copy(), float(self._action[i]), float(self._reward[i]),
                          self._next_state[i].copy(), bool(self._done[i]), float(self._alpha[i]))

    def _gather(self, idx: np.ndarray) -> TransitionBatch:
        return TransitionBatch(self._state[idx], self._action[idx], self._reward[idx],
                               self._next_state[idx], self._done[idx], self._alpha[idx])

    def sample(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform sample with replacement."""
        size = len(self)
        if n < 1 or size < n:
            raise ValueError(f"cannot sample {n} from a buffer of {size}")
        return self._gather(rng.integers(0, size, size=n))


class RunningNormalizer:
    """Per-dimension streaming mean/variance (Welford, with Chan's batch merge)."""

    def __init__(self, dim: int = 16, epsilon: float = 1e-8, clip: float | None = None):
        self.dim = dim
        self.epsilon = epsilon
        self.clip = clip
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / self.count if self.count else np.ones(self.dim)

    def update(self, x) -> None:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected width {self.dim}, got {x.shape[1]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("normalizer update with non-finite values")
        for row in x:
            self.count += 1
            delta = row - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (row - self.mean)

    def merge(self, count: int, mean, m2) -> None:
        if count == 0:
            return
        total = self.count + count
        delta = np.asarray(mean) - self.mean
        self.mean = self.mean + delta * (count / total)
        self.m2 = self.m2 + np.asarray(m2) + delta * delta * (self.count * count / total)
        self.count = total

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.count == 0:
            return x.copy()
        out = (x - self.mean) / np.sqrt(self.variance + self.epsilon)
        if self.clip is not None:
            out = np.clip(out, -self.clip, self.clip)
        return out

    def state_dict(self) -> dict:
        return {"count": self.count, "mean": self.mean.copy(), "m2": self.m2.copy(),
                "epsilon": self.epsilon, "clip": self.clip}

    @classmethod
    def from_state(cls, state: dict) -> "RunningNormalizer":
        norm = cls(len(state["mean"]), state["epsilon"], state["clip"])
        norm.count = int(state["count"])
        norm.mean = np.array(state["mean"], dtype=np.float64)
        norm.m2 = np.array(state["m2"], dtype=np.float64)
        return norm

    def copy(self) -> "RunningNormalizer":
        return RunningNormalizer.from_state(self.state_dict())
