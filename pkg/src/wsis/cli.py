"""Command line entry point: ``wsis train|evaluate|compare|sweep|synth-wind``."""
from __future__ import annotations

import argparse
import csv
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import tomli

from . import experiment as ex
from .config import METHODS, RunConfig, load_config, set_path, write_config
from .errors import ConfigError, WsisError
from .metrics import EpisodeSummary, relative_report, write_report_csv, write_report_json
from .winddata import synthesize, write_csv


class UsageError(WsisError):
    pass


# --- helpers ---------------------------------------------------------------------

def resolve(args, config_path=None) -> RunConfig:
    cfg = load_config(config_path, args.preset)
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out is not None:
        changes["output_dir"] = args.out
    if getattr(args, "method", None):
        changes["method"] = args.method
    if getattr(args, "episodes", None) is not None:
        changes["episodes"] = args.episodes
    return replace(cfg, **changes) if changes else cfg


def parse_value(text: str):
    """Interpret a command-line value as a TOML scalar, falling back to a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _seed_results(cfg: RunConfig, out: Path, seed: int, learner=None) -> dict[str, EpisodeSummary]:
    results = ex.evaluate(cfg, learner)
    ex.write_evaluation(out, cfg, seed, results)
    return results


def _metrics(s: EpisodeSummary) -> dict:
    return {"total_profit": s.total_profit, "fs": s.fs, "vo": s.vo}


def _per_scenario_mean(per_seed: dict[int, dict[str, EpisodeSummary]]) -> dict[str, EpisodeSummary]:
    names = list(next(iter(per_seed.values())))
    return {n: ex.mean_summary([per_seed[s][n] for s in per_seed]) for n in names}


def _train_seed(cfg: RunConfig, out: Path, seed: int):
    d = ex.run_dir(out, cfg.method, "train", seed)
    d.mkdir(parents=True, exist_ok=True)
    partial = d / "PARTIAL"
    partial.write_text("training in progress\n", encoding="utf-8")
    try:
        learner, rows = ex.train(cfg, seed)
    except Exception:
        partial.write_text("training failed\n" + traceback.format_exc(), encoding="utf-8")
        raise
    ex.write_log(rows, d / "log.csv")
    learner.save(d / "checkpoints")
    partial.unlink()
    return learner


def _evaluate_config(cfg: RunConfig, out: Path, train_first: bool, checkpoint=None):
    per_seed = {}
    for seed in cfg.seeds:
        learner = None
        if cfg.is_rl:
            if train_first:
                learner = _train_seed(cfg, out, seed)
            else:
                ck = Path(checkpoint) if checkpoint else ex.run_dir(out, cfg.method, "train",
                                                                      seed) / "checkpoints"
                learner = ex.Learner(cfg, ex.build_env(cfg, training=True), seed)
                learner.load(ck)
        per_seed[seed] = _seed_results(cfg, out, seed, learner)
    return per_seed


def _write_method_summary(cfg: RunConfig, out: Path, per_seed) -> dict:
    means = _per_scenario_mean(per_seed)
    summary = {
        "method": cfg.method,
        "seeds": {str(s): {n: _metrics(v) for n, v in r.items()} for s, r in per_seed.items()},
        "scenarios": {n: _metrics(v) for n, v in means.items()},
        "average": _metrics(ex.mean_summary(means.values())),
    }
    ex.write_json(summary, out / cfg.method / "summary.json")
    return summary


# --- commands ---------------------------------------------------------------------

def cmd_train(cfg: RunConfig) -> None:
    if not cfg.is_rl:
        raise UsageError(f"method {cfg.method!r} needs no training")
    out = Path(cfg.output_dir)
    write_config(cfg, out / "config.toml")
    for seed in cfg.seeds:
        _train_seed(cfg, out, seed)


def cmd_evaluate(cfg: RunConfig, checkpoint=None) -> dict:
    out = Path(cfg.output_dir)
    write_config(cfg, out / "config.toml")
    per_seed = _evaluate_config(cfg, out, train_first=False, checkpoint=checkpoint)
    return _write_method_summary(cfg, out, per_seed)


def cmd_compare(configs: Sequence[RunConfig], out=None) -> list:
    methods = [c.method for c in configs]
    if len(configs) < 2 or "mpc" not in methods:
        raise UsageError("compare needs at least two methods including mpc")
    if len(set(methods)) != len(methods):
        raise UsageError("compare: each method may appear once")
    ref = configs[0].scenarios
    for c in configs[1:]:
        if c.scenarios != ref:
            raise ConfigError(f"compare: scenario list of {c.method} differs from {configs[0].method}")
    out = Path(out or configs[0].output_dir)
    results = {}
    for c in configs:
        write_config(c, out / c.method / "config.toml")
        per_seed = _evaluate_config(c, out, train_first=True)
        _write_method_summary(c, out, per_seed)
        results[c.method] = _per_scenario_mean(per_seed)
    baseline = results.pop("mpc")
    rows = relative_report(results, baseline)
    write_report_csv(rows, out / "report.csv")
    write_report_json(rows, out / "report.json")
    return rows


SWEEP_FIELDS = ("parameter", "value", "total_profit", "fs", "vo")


def cmd_sweep(cfg: RunConfig, parameter: str, values: Sequence) -> list[dict]:
    if not values:
        raise UsageError("sweep needs at least one value")
    variants = [set_path(cfg, parameter, v) for v in values]  # validates every value up front
    out = Path(cfg.output_dir)
    rows = []
    for v, c in zip(values, variants):
        sub = out / f"{parameter}={v}"
        write_config(c, sub / "config.toml")
        per_seed = _evaluate_config(c, sub, train_first=True)
        avg = _write_method_summary(c, sub, per_seed)["average"]
        rows.append({"parameter": parameter, "value": v, **avg})
    with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            w.writerow([ex._fmt(r[k]) for k in SWEEP_FIELDS])
    ex.write_json(rows, out / "sweep.json")
    return rows


def cmd_synth_wind(cfg: RunConfig, seed: Optional[int] = None) -> list[Path]:
    out = Path(cfg.output_dir) / "wind"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for spec in cfg.scenarios:
        p = out / f"{spec.name}.csv"
        write_csv(synthesize(spec, seed), p)
        paths.append(p)
    return paths


# --- argument parsing -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def common(repeat_config=False):
        # a fresh parent per verb: option conflicts must not leak between verbs
        c = argparse.ArgumentParser(add_help=False)
        if repeat_config:
            c.add_argument("--config", action="append", metavar="PATH",
                           help="one per method; may be repeated")
        else:
            c.add_argument("--config", metavar="PATH", help="TOML run configuration")
        c.add_argument("--seed", type=int, metavar="N", help="run only this master seed")
        c.add_argument("--out", metavar="DIR", help="output directory")
        c.add_argument("--preset", choices=("desk", "paper"), help="base configuration")
        return c

    p = argparse.ArgumentParser(prog="wsis", description="Wind-storage control experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common()], help="train agents and write checkpoints")
    t.add_argument("--method", choices=METHODS)
    t.add_argument("--episodes", type=int)

    e = sub.add_parser("evaluate", parents=[common()], help="evaluate on the configured scenarios")
    e.add_argument("--method", choices=METHODS)
    e.add_argument("--checkpoint", metavar="DIR", help="checkpoint directory (RL methods)")

    c = sub.add_parser("compare", parents=[common(repeat_config=True)],
                       help="train/evaluate several methods against mpc")
    c.add_argument("--methods", help="comma-separated methods applied to a single config")
    c.add_argument("--episodes", type=int)

    s = sub.add_parser("sweep", parents=[common()], help="evaluate across values of one parameter")
    s.add_argument("--param", required=True, help="dotted parameter path, e.g. env.beta1")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--episodes", type=int)

    sub.add_parser("synth-wind", parents=[common()], help="write scenario wind series as CSV")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            cmd_train(resolve(args, args.config))
        elif args.command == "evaluate":
            cmd_evaluate(resolve(args, args.config), args.checkpoint)
        elif args.command == "compare":
            paths = args.config or [None]
            configs = [resolve(args, p) for p in paths]
            if args.methods:
                if len(configs) != 1:
                    raise UsageError("--methods takes a single --config")
                configs = [replace(configs[0], method=m.strip()) for m in args.methods.split(",")]
            cmd_compare(configs)
        elif args.command == "sweep":
            values = [parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
            cmd_sweep(resolve(args, args.config), args.param, values)
        elif args.command == "synth-wind":
            cfg = resolve(args, args.config)
            cmd_synth_wind(cfg, args.seed)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, WsisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
