"""Command line interface: run / validate / bound."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, ConvergenceError, InvariantViolation
from .harness import ExperimentConfig, aggregate, export, run_experiment, theorem_bound_for_config


def _load_config(path, overrides):
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def _error_out(kind, exc, code):
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": str(exc)}}) + "\n")
    return code


def main(argv=None):
    parser = argparse.ArgumentParser(prog="delayed-ftrl", description="Delayed-feedback FTRL experiment harness.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate", "bound"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the experiment JSON config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--replications", type=int, default=None, help="override the replication count")
        if name == "run":
            p.add_argument("--output", default=None, help="output directory (overrides config)")
            p.add_argument("--format", choices=("csv", "json"), default=None, help="export format")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, {"seed": args.seed, "replications": args.replications})
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        return _error_out("config", exc, 2)

    if args.command == "validate":
        print(json.dumps({"ok": True, "setting": cfg.setting, "T": cfg.T, "replications": cfg.replications}))
        return 0

    if args.command == "bound":
        try:
            bound = theorem_bound_for_config(cfg)
        except ConfigError as exc:
            return _error_out("config", exc, 2)
        print(json.dumps({"setting": cfg.setting, "theorem_bound": bound}))
        return 0

    out_dir = args.output or cfg.output.get("dir", ".")
    fmt = args.format or cfg.output.get("format", "csv")
    try:
        traces = run_experiment(cfg)
        summary = aggregate(traces)
        path = f"{out_dir.rstrip('/')}/summary.{fmt}"
        written = export(summary, path, fmt=fmt, config=cfg)
    except ConfigError as exc:
        return _error_out("config", exc, 2)
    except (ConvergenceError, InvariantViolation) as exc:
        return _error_out("runtime", exc, 3)
    print(json.dumps({"ok": True, "output": written, "replications": cfg.replications}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
