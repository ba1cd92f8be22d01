"""Command line entry point: ``blinddemod <gen|scan|solve|recover-batch|verify>``.

Exit codes: 0 success, 2 invalid config, 3 degenerate iterate.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from .solver import DegenerateIterateError

DEFAULT_OUT = {
    "gen": "networks.json",
    "scan": "scan.csv",
    "solve": "solve.json",
    "recover-batch": "batch.csv",
    "verify": "verify.csv",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blinddemod")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in harness.EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; defaults are used when omitted")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        if name == "recover-batch":
            p.add_argument("--jobs", type=int, default=1)
    return ap


def _load(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.load_config(args.config)
        if cfg.experiment != args.command:
            cfg = replace(cfg, experiment=args.command)
    else:
        cfg = harness.default_config(args.command)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = args.out or cfg.out or DEFAULT_OUT[args.command]
    return replace(cfg, out=out)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def execute(cfg: harness.ExperimentConfig, jobs: int = 1) -> str:
    """Run one experiment and write its outputs; returns a one-line summary."""
    exp = cfg.experiment
    if exp == "gen":
        _write(cfg.out, harness.dumps(harness.generate(cfg)))
        return f"wrote networks to {cfg.out}"
    if exp == "scan":
        grid = harness.scan_landscape(cfg)
        _write(cfg.out, harness.scan_to_csv(grid))
        _write(cfg.out + ".report.json", harness.dumps(harness.scan_report(cfg, grid)))
        return f"{len(grid.minima)} interior grid minima; grid in {cfg.out}"
    if exp == "solve":
        rep = harness.solve(cfg)
        doc = {"config": harness.config_to_dict(cfg), "report": harness.solve_report_to_dict(rep)}
        _write(cfg.out, harness.dumps(doc))
        return f"residual {rep.measurement_residual:.3e} after {rep.iterations_used} iterations"
    if exp == "recover-batch":
        summary = harness.recover_batch(cfg, jobs=jobs)
        _write(cfg.out, harness.batch_to_csv(summary))
        _write(cfg.out + ".report.json", harness.dumps(harness.batch_to_dict(cfg, summary)))
        return f"success rate {summary.success_rate:.3f} over {len(summary.trials)} trials"
    if exp == "verify":
        rows = harness.verify_sweep(cfg)
        _write(cfg.out, harness.verify_to_csv(rows))
        return f"{len(rows)} verification rows in {cfg.out}"
    raise ValueError(f"unknown experiment {exp!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if getattr(args, "jobs", 1) < 1:
            raise ValueError("--jobs must be >= 1")
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 2
    try:
        print(execute(cfg, jobs=getattr(args, "jobs", 1)))
    except DegenerateIterateError as e:
        print(f"degenerate iterate: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        # e.g. a network file that does not match the config
        print(f"invalid config: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
