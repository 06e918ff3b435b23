"""Command-line entry point.

    auction-forge <command> --config <path> [--out <dir>] [--seed <u64>] [--seeds K]

Exit status: 0 on success, 1 on a usage or validation error, 2 when
training hits a non-finite loss.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .config import ConfigError, ExperimentConfig, load_config
from .trainer import NumericalError

log = logging.getLogger("auction_forge")

COMMANDS = ("gen-data", "train", "eval", "baseline", "sweep-oos", "grad-check", "prop-check", "summarize")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="auction-forge", description="Train and evaluate contextual auction mechanisms.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON or TOML experiment config, or a manifest.json from an earlier run")
    p.add_argument("--out", help="run directory (default: <out_dir>/<label or setting>)")
    p.add_argument("--seed", type=int, help="master seed; overrides the config")
    p.add_argument("--seeds", type=int, default=1,
                   help="repeat over this many consecutive master seeds, one subdirectory each")
    p.add_argument("--checkpoint", help="model checkpoint for eval / sweep-oos / prop-check")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def _run_dir(config: ExperimentConfig, out: str | None) -> Path:
    if out:
        return Path(out)
    return Path(config.out_dir) / (config.label or config.setting)


def _run_one(command: str, config: ExperimentConfig, out: Path, checkpoint: str | None) -> dict:
    if command == "gen-data":
        return {"artifacts": experiments.gen_data(config, out)}
    if command == "train":
        _, hist = experiments.train_run(config, out)
        return {"epochs": len(hist), "last": hist[-1] if hist else None}
    if command == "eval":
        return json.loads(experiments.eval_run(config, out, checkpoint).to_json())
    if command == "baseline":
        return json.loads(experiments.baseline_run(config, out).to_json())
    if command == "sweep-oos":
        reps = experiments.sweep_oos(config, out, checkpoint)
        return {"cells": [{"n": r.n, "m": r.m, "revenue": r.revenue, "mean_regret": r.mean_regret} for r in reps]}
    if command == "grad-check":
        s = experiments.grad_check_run(config, out)
        if s["failures"]:
            raise ValueError(f"{len(s['failures'])} of {s['cases']} gradient checks failed")
        return s
    if command == "prop-check":
        s = experiments.prop_check_run(config, out, checkpoint)
        if not (s["equivariance"]["passed"] and s["feasibility"]["passed"]):
            raise ValueError(f"property check failed: {json.dumps(s)}")
        return s
    raise UsageError(f"unknown command {command!r}")


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                            format="%(asctime)s %(levelname)s %(message)s")
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        if args.command == "summarize":
            if args.out:
                root = Path(args.out)
            elif args.config:
                root = _run_dir(load_config(args.config), None)
            else:
                raise UsageError("summarize needs --out <run dir> or --config")
            paths = experiments.summarize(root)
            print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
            return 0
        if not args.config:
            raise UsageError(f"{args.command} needs --config <path>")
        config = load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed).validate()
        out = _run_dir(config, args.out)
        results = []
        for k in range(args.seeds):
            cfg = config if args.seeds == 1 else dataclasses.replace(config, seed=config.seed + k).validate()
            where = out if args.seeds == 1 else out / f"seed-{cfg.seed}"
            results.append(_run_one(args.command, cfg, where, args.checkpoint))
        print(json.dumps(results[0] if len(results) == 1 else results, indent=2, default=str))
        return 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
