"""Command-line driver: gen-data, train, eval and demo-misalignment.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
Every command writes ``manifest.json`` into its output directory.
"""
from __future__ import annotations

import argparse
import datetime
import json
import subprocess
import sys
import warnings
from pathlib import Path

import numpy as np

from . import demos, experiment
from .datagen import dataset_csv, read_jsonl, write_jsonl
from .predictor import Predictor, TrainConfig, train_dol, train_two_stage

METHODS = ("dol", "two-stage")
LABELS = {"dol": "DOL", "two-stage": "two-stage", "random": "random"}


class UsageError(Exception):
    """Bad flags, config or inputs; exit code 2."""


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_manifest(out: Path, command, config_path, config, seed, started, extra=None):
    m = {
        "command": command, "config_path": None if config_path is None else str(config_path),
        "config": config, "seed": seed, "git_describe": git_describe(), "out": str(out),
        "started": started, "finished": _now(),
    }
    m.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    return m


def load_config(path) -> experiment.ExperimentConfig:
    if path is None:
        return experiment.ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from e
    try:
        return experiment.ExperimentConfig.from_dict(d)
    except (TypeError, ValueError) as e:
        raise UsageError(f"{path}: invalid config: {e}") from e


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data_config(data: Path) -> experiment.ExperimentConfig:
    try:
        m = json.loads((data / "manifest.json").read_text())
        return experiment.ExperimentConfig.from_dict(m["config"])
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise UsageError(f"{data} is not a gen-data output directory: {e}") from e


def _load_dataset(data: Path):
    try:
        samples = read_jsonl(data / "dataset.jsonl")
        split = json.loads((data / "split.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"missing or unreadable dataset in {data}: {e}") from e
    return samples, split["train"], split["test"]


# -- commands -------------------------------------------------------------------

def cmd_gen_data(args):
    started = _now()
    cfg = load_config(args.config)
    if args.n_samples is not None:
        if args.n_samples < 0:
            raise UsageError("--n-samples must be >= 0")
        cfg.n_samples = args.n_samples
    if cfg.n_samples == 0:
        warnings.warn("--n-samples 0: writing an empty dataset")
    out = _outdir(args.out)
    world = experiment.build_world(cfg)
    records, samples, tr, te = experiment.build_dataset(cfg, world, args.seed)
    write_jsonl(out / "dataset.jsonl", samples)
    with open(out / "raw.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")
    (out / "dataset.csv").write_text(dataset_csv(samples) if samples else "")
    (out / "split.json").write_text(json.dumps({"train": tr, "test": te}) + "\n")
    (out / "routes.json").write_text(json.dumps(world.routes.to_dict()) + "\n")
    write_manifest(out, "gen-data", args.config, cfg.to_dict(), args.seed, started,
                   {"n_samples": len(samples), "weight_shape": list(world.objective.shape)})
    print(f"wrote {len(samples)} samples ({len(tr)} train / {len(te)} test) to {out}")
    return 0


def cmd_train(args):
    started = _now()
    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    overrides = dict(epochs=args.epochs, epsilon=args.epsilon, sg_trials=args.sg_trials)
    if args.fixture:
        Z, W, obj, system = demos.training_fixture()
        base = dict(demos.FIXTURE_CONFIG)
        base.update({k: v for k, v in overrides.items() if v is not None})
        tcfg = TrainConfig(seed=args.seed, **base)
        cfg_echo = {"fixture": True, "train": tcfg.to_dict()}
    else:
        if args.data is None:
            raise UsageError("train needs --data DIR or --fixture")
        data = Path(args.data)
        cfg = load_config(args.config) if args.config else _data_config(data)
        world = experiment.build_world(cfg)
        obj, system = world.objective, world.system
        samples, tr, _ = _load_dataset(data)
        if not tr:
            raise UsageError(f"no training samples in {data}")
        Z, W = experiment.stack(samples, tr)
        if W.shape[1:] != obj.shape:
            raise UsageError(f"dataset weights {W.shape[1:]} do not match the scenario {obj.shape}")
        tcfg = experiment.method_config(cfg, args.method, args.seed, **overrides)
        cfg_echo = {**cfg.to_dict(), "train": tcfg.to_dict()}
    try:
        if args.method == "dol":
            pred, hist = train_dol(Z, W, obj, system, tcfg)
        else:
            pred, hist = train_two_stage(Z, W, tcfg)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = _outdir(args.out)
    pred.save(out / "checkpoint.json")
    write_csv(out / "loss.csv", ["epoch", hist.label, "seconds"],
              [(k + 1, l, s) for k, (l, s) in enumerate(zip(hist.loss, hist.seconds))])
    if not args.no_plots and hist.loss:
        from .plotting import plot_loss_curve
        plot_loss_curve(hist.loss, hist.label, out / "loss.png")
    write_manifest(out, "train", args.config, cfg_echo, args.seed, started,
                   {"method": args.method, "data": args.data})
    if hist.loss:
        print(f"{args.method}: epoch 1 {hist.label} {hist.loss[0]:.4g}, epoch {len(hist.loss)} {hist.loss[-1]:.4g}")
    return 0


def _parse_checkpoints(items):
    ckpts = {}
    for item in items or []:
        name, sep, path = item.partition("=")
        if not sep or name not in METHODS:
            raise UsageError(f"--checkpoint expects METHOD=PATH with METHOD in {METHODS}, got {item!r}")
        ckpts[name] = Path(path)
    return ckpts


def cmd_eval(args):
    started = _now()
    data = Path(args.data)
    cfg = load_config(args.config) if args.config else _data_config(data)
    ckpts = _parse_checkpoints(args.checkpoint)
    world = experiment.build_world(cfg)
    samples, _, te = _load_dataset(data)
    if not te:
        raise UsageError(f"no held-out contexts in {data}")
    Zt, _ = experiment.stack(samples, te)
    ev = experiment.Evaluator(cfg, world, Zt, seed=args.seed)
    selections = {}
    for name, path in ckpts.items():
        try:
            pred = Predictor.load(path)
        except (OSError, KeyError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot load checkpoint {path}: {e}") from e
        if tuple(pred.shape) != world.objective.shape or pred.params.W1.shape[1] != Zt.shape[1]:
            raise UsageError(f"checkpoint {path} does not match the scenario")
        selections[name] = ev.predictor_selections(pred)
    selections["random"] = ev.random_selections(args.seed)
    out = _outdir(args.out)
    rows, per_ctx = [], []
    for name, sels in selections.items():
        s = ev.score(sels)
        rows.append((LABELS[name], float(s.mean()), float(s.std(ddof=1)) if len(s) > 1 else 0.0, len(s)))
        per_ctx += [(name, k, " ".join(map(str, sel)), v) for k, (sel, v) in enumerate(zip(sels, s))]
    write_csv(out / "table.csv", ["method", "mean", "std", "n_contexts"], rows)
    write_csv(out / "per_context.csv", ["method", "context", "selection", "recharged"], per_ctx)
    text = "\n".join(f"{r[0]:<10s} {r[1]:.2f} ± {r[2]:.2f}" for r in rows) + "\n"
    (out / "table.txt").write_text(text)
    if not args.no_plots:
        from .plotting import plot_method_table
        plot_method_table([r[:3] for r in rows], out / "table.png")
    write_manifest(out, "eval", args.config, cfg.to_dict(), args.seed, started,
                   {"data": str(data), "checkpoints": {k: str(v) for k, v in ckpts.items()}})
    print(text, end="")
    return 0


def cmd_demo_misalignment(args):
    started = _now()
    out = _outdir(args.out)
    sweep = demos.beta_sweep()
    beta_star = demos.beta_threshold()
    write_csv(out / "beta_sweep.csv", ["beta", "f_s1_s2", "f_s1_s3", "selection"],
              [(b, f12, f13, " ".join(map(str, sel))) for b, f12, f13, sel in sweep])
    epsilon = args.epsilon if args.epsilon is not None else 0.2
    seeds = [args.seed + k for k in range(args.n_seeds)]
    summary, first = [], None
    for s in seeds:
        res = demos.run_case_study(s, epsilon=epsilon)
        summary.append((s, res.optimal, res.mse.boundary(), res.dol.boundary(), res.mse_gap, res.dol_gap))
        first = first or res
    write_csv(out / "boundaries.csv", ["seed", "optimal", "mse", "dol", "mse_gap", "dol_gap"], summary)
    grid = np.linspace(*demos.Z_RANGE, 121)
    rows = demos.decision_rows(first, grid)
    write_csv(out / "decisions.csv", ["z", "w_hat1", "w_hat2", "decision", "method"], rows)
    if not args.no_plots:
        from .plotting import plot_beta_sweep, plot_boundaries
        plot_beta_sweep(sweep, beta_star, out / "beta_sweep.png")
        plot_boundaries(rows, {"optimal": first.optimal, "mse": first.mse.boundary(),
                               "dol": first.dol.boundary()}, out / "boundaries.png")
    write_manifest(out, "demo-misalignment", args.config, {"epsilon": epsilon, "seeds": seeds}, args.seed,
                   started, {"beta_threshold": beta_star})
    wins = sum(r[5] <= r[4] for r in summary)
    print(f"beta threshold {beta_star:.6f}; DOL boundary at least as close as MSE in {wins}/{len(summary)} seeds")
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="dolroute", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    g = sub.add_parser("gen-data", help="simulate contexts and fit weight targets")
    common(g)
    g.add_argument("--n-samples", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a predictor")
    common(t)
    t.add_argument("--method", required=True, help="dol or two-stage")
    t.add_argument("--data", help="gen-data output directory")
    t.add_argument("--fixture", action="store_true", help="train on the small built-in fixture")
    t.add_argument("--epochs", type=int)
    t.add_argument("--epsilon", type=float)
    t.add_argument("--sg-trials", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="compare checkpoints with random selection")
    common(e)
    e.add_argument("--data", required=True, help="gen-data output directory")
    e.add_argument("--checkpoint", action="append", metavar="METHOD=PATH")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("demo-misalignment", help="regenerate the two misalignment demos")
    common(d)
    d.add_argument("--epsilon", type=float)
    d.add_argument("--n-seeds", type=int, default=5)
    d.set_defaults(func=cmd_demo_misalignment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"{parser.prog}: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
