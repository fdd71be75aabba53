"""Checkpoints: a JSON manifest plus one raw little-endian float64 file per network."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .actor import ActorNet
from .critic import CriticNet
from .nn import LayerSpec, MlpParams
from .replay import RunningNormalizer

MANIFEST = "manifest.json"
FORMAT_VERSION = 1
DTYPE = "<f8"


@dataclass
class Checkpoint:
    actor: ActorNet
    actor_target: ActorNet
    critic: CriticNet
    critic_target: CriticNet
    normalizer: RunningNormalizer
    meta: dict = field(default_factory=dict)  # scenario config, train config, episode count


def _params_entry(params: MlpParams, filename: str) -> dict:
    return {
        "file": filename,
        "inputs": params.inputs,
        "specs": [asdict(s) for s in params.specs],
        "shapes": [list(a.shape) for a in params.arrays()],
    }


def _write_arrays(path: Path, arrays) -> None:
    blob = b"".join(np.ascontiguousarray(a, dtype=DTYPE).tobytes() for a in arrays)
    path.write_bytes(blob)


def _read_arrays(path: Path, shapes) -> list[np.ndarray]:
    raw = np.frombuffer(path.read_bytes(), dtype=DTYPE)
    expected = sum(int(np.prod(s)) for s in shapes)
    if raw.size != expected:
        raise ValueError(f"{path.name}: expected {expected} values, found {raw.size}")
    out, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(raw[pos:pos + n].reshape(s).astype(np.float64))
        pos += n
    return out


def _params_from(entry: dict, arrays) -> MlpParams:
    specs = tuple(LayerSpec(**{**s, "sources": tuple(s["sources"])}) for s in entry["specs"])
    return MlpParams(dict(entry["inputs"]), specs, list(arrays[0::2]), list(arrays[1::2]))


def save_checkpoint(ckpt: Checkpoint, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nets = {"actor": ckpt.actor, "actor_target": ckpt.actor_target,
            "critic": ckpt.critic, "critic_target": ckpt.critic_target}
    manifest = {"format": FORMAT_VERSION, "dtype": DTYPE, "networks": {}, "meta": ckpt.meta}
    for key, net in nets.items():
        entry = _params_entry(net.params, f"{key}.bin")
        if isinstance(net, ActorNet):
            entry["action_scale"] = net.action_scale
        else:
            entry["variance_floor"] = net.variance_floor
        manifest["networks"][key] = entry
        _write_arrays(d / entry["file"], net.params.arrays())
    norm = ckpt.normalizer
    manifest["normalizer"] = {"file": "normalizer.bin", "dim": norm.dim, "count": norm.count,
                              "epsilon": norm.epsilon, "clip": norm.clip}
    _write_arrays(d / "normalizer.bin", [norm.mean, norm.m2])
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def load_checkpoint(directory) -> Checkpoint:
    d = Path(directory)
    manifest = json.loads((d / MANIFEST).read_text())
    if manifest.get("format") != FORMAT_VERSION or manifest.get("dtype") != DTYPE:
        raise ValueError("unsupported checkpoint format")
    nets = {}
    for key, entry in manifest["networks"].items():
        params = _params_from(entry, _read_arrays(d / entry["file"], entry["shapes"]))
        if "action_scale" in entry:
            nets[key] = ActorNet(params, entry["action_scale"])
        else:
            nets[key] = CriticNet(params, entry["variance_floor"])
    n = manifest["normalizer"]
    mean, m2 = _read_arrays(d / n["file"], [[n["dim"]], [n["dim"]]])
    norm = RunningNormalizer.from_state({"count": n["count"], "mean": mean, "m2": m2,
                                         "epsilon": n["epsilon"], "clip": n["clip"]})
    return Checkpoint(nets["actor"], nets["actor_target"], nets["critic"], nets["critic_target"],
                      norm, manifest.get("meta", {}))
