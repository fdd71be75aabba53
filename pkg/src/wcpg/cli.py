"""Command-line front end.

Every subcommand writes CSV files with a header row and a ``run.json``
manifest holding the resolved configuration and its hash.  Reruns with the
same inputs produce byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__

DEFAULT_OUT = "runs"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, rows, fields=None) -> Path:
    rows = list(rows)
    fields = list(fields or (rows[0].keys() if rows else []))
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k, "")) for k in fields})
    return path


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out: Path, command: str, resolved: dict, outputs) -> Path:
    manifest = {"command": command, "version": __version__, "config": resolved,
                "config_hash": config_hash(resolved), "outputs": sorted(str(o) for o in outputs)}
    path = out / "run.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_config_file(path: str | None) -> dict:
    """``{"train": {...}, "scenario": {...}}``; a flat file is read as a scenario config."""
    if not path:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    if "train" in data or "scenario" in data and isinstance(data["scenario"], dict):
        return data
    return {"scenario": data}


def _scenario(args, file_cfg: dict, ckpt=None):
    from .sim import ScenarioConfig

    d = dict(file_cfg.get("scenario") or {})
    if not d and ckpt is not None and "scenario_config" in ckpt.meta:
        d = dict(ckpt.meta["scenario_config"])
    if getattr(args, "scenario", None):
        d["scenario"] = args.scenario
    return ScenarioConfig.from_dict(d)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _alphas(args):
    from .evaluation import EVAL_ALPHAS

    return tuple(args.alpha) if args.alpha else EVAL_ALPHAS


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    from .trainer import TrainConfig, train

    file_cfg = load_config_file(args.config)
    tc = dict(file_cfg.get("train") or {})
    if args.episodes is not None:
        tc["episodes"] = args.episodes
    if args.seed is not None:
        tc["seed"] = args.seed
    out = _out(args)
    tc["checkpoint_dir"] = str(out / "checkpoint")
    if args.scenario:
        tc["scenario"] = args.scenario
    config = TrainConfig.from_dict(tc)
    scen = dict(file_cfg.get("scenario") or {})
    scen.setdefault("scenario", config.scenario)
    scen.setdefault("max_steps", config.max_steps)
    from .sim import ScenarioConfig

    scenario = ScenarioConfig.from_dict(scen)
    progress = None
    if args.verbose:
        progress = lambda r: print(f"episode {r['episode']:5d} alpha {r['alpha']:.2f} "  # noqa: E731
                                   f"return {r['return']:7.2f} {r['cause']}", file=sys.stderr)
    _, log = train(config, scenario_config=scenario, progress=progress)
    log.write_csv(out / "train_log.csv")
    paths = [out / "train_log.csv"]
    if log.evals:
        paths.append(write_csv(out / "train_evals.csv", log.evals))
    train_cfg = config.to_dict()
    train_cfg.pop("checkpoint_dir")
    resolved = {"train": train_cfg, "scenario": scenario.to_dict()}
    write_manifest(out, "train", resolved, [p.name for p in paths] + ["checkpoint"])
    print(f"wrote {out}")
    return 0


def _load(args):
    from .checkpoint import load_checkpoint

    if not args.checkpoint:
        raise SystemExit("--checkpoint is required")
    return load_checkpoint(args.checkpoint)


def cmd_eval(args) -> int:
    from .evaluation import evaluate, records_as_rows

    ckpt = _load(args)
    cfg = _scenario(args, load_config_file(args.config), ckpt)
    out = _out(args)
    records, summaries = [], []
    for alpha in _alphas(args):
        recs, summary = evaluate(ckpt, cfg, alpha, args.trials, args.seed)
        records.extend(records_as_rows(recs))
        summaries.append(summary)
    paths = [write_csv(out / "eval_records.csv", records), write_csv(out / "eval_summary.csv", summaries)]
    resolved = {"scenario": cfg.to_dict(), "alphas": list(_alphas(args)), "trials": args.trials,
                "seed": args.seed, "checkpoint": str(args.checkpoint)}
    write_manifest(out, "eval", resolved, [p.name for p in paths])
    for s in summaries:
        print(f"alpha {s['alpha']:.2f}: collision {s['collision']:.1f} ±{s['collision_sem']:.1f}  "
              f"success {s['success']:.1f} ±{s['success_sem']:.1f}  steps {s['mean_steps']:.1f}")
    return 0


def cmd_sweep(args) -> int:
    from .evaluation import SweepSpec, extrapolation_sweep

    ckpt = _load(args)
    cfg = _scenario(args, load_config_file(args.config), ckpt)
    spec = SweepSpec.for_scenario(cfg.scenario, alphas=_alphas(args), trials_per_cell=args.trials)
    rows = extrapolation_sweep(ckpt, cfg, spec, args.seed)
    out = _out(args)
    path = write_csv(out / "sweep.csv", rows)
    resolved = {"scenario": cfg.to_dict(), "rows": [list(r) for r in spec.rows()],
                "alphas": list(spec.alphas), "trials": args.trials, "seed": args.seed,
                "checkpoint": str(args.checkpoint)}
    write_manifest(out, "sweep", resolved, [path.name])
    print(f"wrote {path}")
    return 0


def cmd_alpha_sweep(args) -> int:
    from .evaluation import alpha_sweep

    ckpt = _load(args)
    cfg = _scenario(args, load_config_file(args.config), ckpt)
    alphas = tuple(args.alpha) if args.alpha else tuple(np.round(np.linspace(0.05, 1.0, 20), 2))
    rows = alpha_sweep(ckpt, cfg, alphas, args.trials, args.seed)
    out = _out(args)
    path = write_csv(out / "alpha_sweep.csv", rows)
    resolved = {"scenario": cfg.to_dict(), "alphas": [float(a) for a in alphas], "trials": args.trials,
                "seed": args.seed, "checkpoint": str(args.checkpoint)}
    write_manifest(out, "alpha-sweep", resolved, [path.name])
    print(f"wrote {path}")
    return 0


def cmd_trace(args) -> int:
    from .evaluation import uncertainty_trace

    ckpt = _load(args)
    cfg = _scenario(args, load_config_file(args.config), ckpt)
    alpha = args.alpha[0] if args.alpha else 0.1
    rows = uncertainty_trace(ckpt, cfg, alpha, args.seed)
    out = _out(args)
    path = write_csv(out / "trace.csv", rows)
    resolved = {"scenario": cfg.to_dict(), "alpha": alpha, "seed": args.seed, "checkpoint": str(args.checkpoint)}
    write_manifest(out, "trace", resolved, [path.name])
    print(f"wrote {path} ({len(rows)} steps, outcome {rows[-1]['cause']})")
    return 0


def cmd_oracle(args) -> int:
    from .lanes import LaneMdp, alpha_sweep, crossover_alpha

    alphas = tuple(args.alpha) if args.alpha else tuple(np.round(np.arange(1, 21) * 0.05, 2))
    rows = alpha_sweep(LaneMdp(), alphas, grid=args.grid, n_trials=args.trials, seed=args.seed)
    out = _out(args)
    path = write_csv(out / "oracle.csv", [{"alpha": a, "p_change": p, "cvar": c} for a, p, c in rows])
    resolved = {"alphas": [float(a) for a in alphas], "grid": args.grid, "trials": args.trials, "seed": args.seed}
    write_manifest(out, "oracle", resolved, [path.name])
    for a, p, c in rows:
        print(f"alpha {a:.2f}: p_change {p:.3f}  cvar {c:.3f}")
    print(f"crossover alpha: {crossover_alpha(rows)}")
    return 0


def cmd_gradcheck(args) -> int:
    from .evaluation import gradcheck_all

    report = gradcheck_all(points=args.points, seed=args.seed)
    out = _out(args)
    path = write_csv(out / "gradcheck.csv", report)
    write_manifest(out, "gradcheck", {"points": args.points, "seed": args.seed}, [path.name])
    for r in report:
        status = "ok" if r["passed"] else "FAIL"
        print(f"{r['component']:15s} worst rel. error {r['max_rel_error']:.3e}  {status}")
    return 0 if all(r["passed"] for r in report) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcpg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, default_trials=100):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=DEFAULT_OUT, help="output directory")
        sp.add_argument("--checkpoint", help="checkpoint directory")
        sp.add_argument("--scenario", choices=("left_turn", "merge"))
        sp.add_argument("--alpha", type=float, action="append", help="risk level (repeatable)")
        sp.add_argument("--trials", type=int, default=default_trials)

    sp = sub.add_parser("train", help="train an actor-critic pair")
    common(sp)
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_train, seed=None)

    for name, fn, text in (("eval", cmd_eval, "evaluate a checkpoint"),
                           ("sweep", cmd_sweep, "extrapolation sweep over traffic settings"),
                           ("alpha-sweep", cmd_alpha_sweep, "return distribution versus alpha"),
                           ("trace", cmd_trace, "per-step critic uncertainty for one episode")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("oracle", help="brute-force CVaR policy search on the lane MDP")
    common(sp, default_trials=100_000)
    sp.add_argument("--grid", type=int, default=32)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    common(sp)
    sp.add_argument("--points", type=int, default=10)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
