"""Small dense-network engine with exact reverse-mode gradients.

Networks are described as a list of :class:`LayerSpec` entries wired by name.
Each layer consumes the concatenation of one or more named sources (network
inputs or earlier layers); the last layer is the network output.  Everything
runs in float64 on batch-major arrays of shape ``(batch, width)``.
"""
from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh", "softplus")
SOFTPLUS_CUTOFF = 30.0

# Collects relu sign patterns while a finite-difference check is running.
_kink_log: contextvars.ContextVar[list | None] = contextvars.ContextVar("kink_log", default=None)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    sources: tuple[str, ...]
    input_width: int
    output_width: int
    activation: str = "linear"
    init_sigma: float = 1.0

    def __post_init__(self):
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError(f"layer {self.name!r}: widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"layer {self.name!r}: unknown activation {self.activation!r}")
        if not self.init_sigma > 0:
            raise ValueError(f"layer {self.name!r}: init_sigma must be positive")
        if not self.sources:
            raise ValueError(f"layer {self.name!r}: needs at least one source")


@dataclass
class MlpParams:
    """Weights and biases for a named-input layer graph.

    Also used for gradients and Adam moments, which share the same shapes.
    """

    inputs: dict[str, int]
    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in declaration order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    @property
    def output_width(self) -> int:
        return self.specs[-1].output_width

    def copy(self) -> "MlpParams":
        return MlpParams(dict(self.inputs), self.specs,
                         [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams(dict(self.inputs), self.specs,
                         [np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "MlpParams":
        return MlpParams(dict(self.inputs), self.specs,
                         [fn(w) for w in self.weights], [fn(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vector: np.ndarray) -> "MlpParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != self.num_params:
            raise ValueError(f"expected {self.num_params} values, got {vector.size}")
        out = self.zeros_like()
        offset = 0
        for a in out.arrays():
            a[...] = vector[offset:offset + a.size].reshape(a.shape)
            offset += a.size
        return out

    def same_architecture(self, other: "MlpParams") -> bool:
        return self.inputs == other.inputs and self.specs == other.specs


def _check_graph(inputs: Mapping[str, int], specs: tuple[LayerSpec, ...]) -> None:
    widths = dict(inputs)
    for spec in specs:
        if spec.name in widths:
            raise ValueError(f"duplicate node name {spec.name!r}")
        missing = [s for s in spec.sources if s not in widths]
        if missing:
            raise ValueError(f"layer {spec.name!r} reads undefined sources {missing}")
        fan_in = sum(widths[s] for s in spec.sources)
        if fan_in != spec.input_width:
            raise ValueError(
                f"layer {spec.name!r}: sources give width {fan_in}, spec says {spec.input_width}")
        widths[spec.name] = spec.output_width


def orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if fan_in >= fan_out else q.T


def init_params(inputs: Mapping[str, int], specs, seed: int) -> MlpParams:
    """Orthogonal weights scaled by ``init_sigma / sqrt(fan_in)``, zero biases."""
    specs = tuple(specs)
    if not specs:
        raise ValueError("network needs at least one layer")
    for name, width in inputs.items():
        if width < 1:
            raise ValueError(f"input {name!r} must have width >= 1")
    _check_graph(inputs, specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        w = orthogonal(rng, spec.input_width, spec.output_width)
        weights.append(w * (spec.init_sigma / np.sqrt(spec.input_width)))
        biases.append(np.zeros(spec.output_width))
    return MlpParams(dict(inputs), specs, weights, biases)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > SOFTPLUS_CUTOFF, x, np.log1p(np.exp(np.minimum(x, SOFTPLUS_CUTOFF))))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return softplus(z)


def _activation_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray | float:
    if kind == "linear":
        return 1.0
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return sigmoid(z)


@dataclass
class Tape:
    """Forward-pass record needed by :func:`backward`."""

    batch: int
    layer_inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)


def _as_batch(name: str, x, width: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, width)
    if x.ndim != 2 or x.shape[1] != width:
        raise ValueError(f"input {name!r}: expected shape (batch, {width}), got {x.shape}")
    # a single reduction is a cheap screen; re-check element-wise only if it trips
    if not np.isfinite(x.sum()) and not np.all(np.isfinite(x)):
        raise ValueError(f"input {name!r} contains NaN or Inf")
    return x


def forward(params: MlpParams, inputs: Mapping[str, np.ndarray]) -> tuple[np.ndarray, Tape]:
    nodes: dict[str, np.ndarray] = {}
    batch = None
    for name, width in params.inputs.items():
        if name not in inputs:
            raise ValueError(f"missing input {name!r}")
        x = _as_batch(name, inputs[name], width)
        if batch is None:
            batch = x.shape[0]
        elif x.shape[0] != batch:
            raise ValueError("inputs disagree on batch size")
        nodes[name] = x
    tape = Tape(batch=batch)
    kinks = _kink_log.get()
    for spec, w, b in zip(params.specs, params.weights, params.biases):
        srcs = [nodes[s] for s in spec.sources]
        x = srcs[0] if len(srcs) == 1 else np.concatenate(srcs, axis=1)
        z = x @ w + b
        a = _activate(spec.activation, z)
        if kinks is not None and spec.activation == "relu":
            kinks.append(np.packbits(z > 0).tobytes())
        tape.layer_inputs.append(x)
        tape.preacts.append(z)
        tape.outputs.append(a)
        nodes[spec.name] = a
    return tape.outputs[-1], tape


def backward(params: MlpParams, tape: Tape, output_grad) -> tuple[MlpParams, dict[str, np.ndarray]]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. every parameter and input."""
    g_out = np.asarray(output_grad, dtype=np.float64)
    expected = (tape.batch, params.output_width)
    if g_out.shape != expected:
        if g_out.size == tape.batch * params.output_width:
            g_out = g_out.reshape(expected)
        else:
            raise ValueError(f"output_grad shape {g_out.shape} does not match {expected}")
    if len(tape.preacts) != len(params.specs):
        raise ValueError("tape does not belong to this network")
    node_grads: dict[str, np.ndarray] = {params.specs[-1].name: g_out}
    grads = params.zeros_like()
    widths = dict(params.inputs)
    for spec in params.specs:
        widths[spec.name] = spec.output_width
    for i in range(len(params.specs) - 1, -1, -1):
        spec = params.specs[i]
        g = node_grads.pop(spec.name, None)
        if g is None:
            continue
        dz = g * _activation_grad(spec.activation, tape.preacts[i], tape.outputs[i])
        grads.weights[i] = tape.layer_inputs[i].T @ dz
        grads.biases[i] = dz.sum(axis=0)
        dx = dz @ params.weights[i].T
        offset = 0
        for src in spec.sources:
            part = dx[:, offset:offset + widths[src]]
            offset += widths[src]
            if src in node_grads:
                node_grads[src] = node_grads[src] + part
            else:
                node_grads[src] = part
    input_grads = {name: node_grads.get(name, np.zeros((tape.batch, w)))
                   for name, w in params.inputs.items()}
    return grads, input_grads


@dataclass
class AdamState:
    first_moment: MlpParams
    second_moment: MlpParams
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float = 1e-4, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0, learning_rate, **kw)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam descent step; returns new params and state."""
    if not (params.same_architecture(grads) and params.same_architecture(state.first_moment)):
        raise ValueError("params, grads and optimizer state have different shapes")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = params.copy(), state.first_moment.copy(), state.second_moment.copy()
    for p, m, v, g in zip(new_p.arrays(), new_m.arrays(), new_v.arrays(), grads.arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return new_p, AdamState(new_m, new_v, t, state.learning_rate, b1, b2, state.epsilon)


def soft_update(target: MlpParams, live: MlpParams, tau: float) -> MlpParams:
    """``tau * live + (1 - tau) * target`` elementwise."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    if not target.same_architecture(live):
        raise ValueError("target and live networks have different architectures")
    if tau == 1.0:
        return live.copy()
    out = target.copy()
    for t, l in zip(out.arrays(), live.arrays()):
        # written as a correction so that live == target is an exact fixed point
        t += tau * (l - t)
    return out


# ---------------------------------------------------------------------------
# finite differences

@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int

    def __float__(self):
        return self.max_rel_error


def _relu_pattern(fn, *args):
    log: list = []
    token = _kink_log.set(log)
    try:
        value = fn(*args)
    finally:
        _kink_log.reset(token)
    return value, b"".join(log)


def finite_difference_check(params: MlpParams, inputs: Mapping[str, np.ndarray],
                            loss_fn: Callable, grad_fn: Callable, h: float = 1e-5,
                            max_coords: int | None = None, rng: np.random.Generator | None = None,
                            rel_floor: float = 1e-3) -> GradCheckResult:
    """Compare analytic gradients against central differences.

    ``loss_fn(params, inputs) -> float``; ``grad_fn(params, inputs) ->
    (param_grads, input_grads)``.  ``input_grads`` may omit inputs that should
    not be checked.  The per-coordinate error is
    ``|a - n| / max(|a|, |n|, rel_floor * max_abs_grad)``.  Coordinates whose
    perturbation flips a relu sign are skipped and counted, since the loss is
    not differentiable across the kink.
    """
    params = params.copy()
    inputs = {k: np.array(v, dtype=np.float64, copy=True) for k, v in inputs.items()}
    param_grads, input_grads = grad_fn(params, inputs)

    targets: list[tuple[np.ndarray, np.ndarray]] = []
    for p, g in zip(params.arrays(), param_grads.arrays()):
        targets.append((p, np.asarray(g, dtype=np.float64)))
    for name, g in (input_grads or {}).items():
        x = inputs[name]
        targets.append((x, np.asarray(g, dtype=np.float64).reshape(x.shape)))

    coords = [(k, idx) for k, (arr, _) in enumerate(targets) for idx in range(arr.size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in np.sort(pick)]

    _, base_pattern = _relu_pattern(loss_fn, params, inputs)
    analytic, numeric = [], []
    skipped = 0
    for k, idx in coords:
        arr, g = targets[k]
        flat = arr.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        up, pat_up = _relu_pattern(loss_fn, params, inputs)
        flat[idx] = orig - h
        down, pat_down = _relu_pattern(loss_fn, params, inputs)
        flat[idx] = orig
        if pat_up != base_pattern or pat_down != base_pattern:
            skipped += 1
            continue
        analytic.append(g.reshape(-1)[idx])
        numeric.append((up - down) / (2.0 * h))
    if not analytic:
        return GradCheckResult(0.0, 0, skipped)
    a = np.array(analytic)
    n = np.array(numeric)
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)))
    if scale == 0.0:
        return GradCheckResult(0.0, len(a), skipped)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), rel_floor * scale)
    return GradCheckResult(float(np.max(np.abs(a - n) / denom)), len(a), skipped)
