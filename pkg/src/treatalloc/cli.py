"""Command line entry point: ``treatalloc {run,validate,oracle} CONFIG``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .harness import STRATEGIES, ConfigError, load_config, oracle_table, run_experiment


def _apply_overrides(cfg, args):
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be in [0, 2**64)")
        changes["master_seed"] = args.seed
    if args.out_dir is not None:
        changes["output_dir"] = Path(args.out_dir)
    if args.strategies is not None:
        names = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
        for s in names:
            if s not in STRATEGIES:
                raise ConfigError(f"--strategies: unknown strategy {s!r}")
        changes["strategies"] = names
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads: must be a positive integer")
        changes["workers"] = args.threads
    return dataclasses.replace(cfg, **changes)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treatalloc", description="Simulation budget allocation for treatment effects")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "run the configured strategies and write CSV reports"),
        ("validate", "parse and validate a configuration"),
        ("oracle", "print the exact expected outcome at every condition"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out-dir", help="override output_dir")
        p.add_argument("--strategies", help="comma-separated strategy names")
        p.add_argument("--threads", type=int, help="worker threads per replication batch")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "validate":
            print(
                f"ok: {len(cfg.grid)} active of {len(cfg.grid.conditions)} conditions; "
                f"strategies: {', '.join(cfg.strategies) or '(none)'}; master_seed={cfg.master_seed}"
            )
        elif args.command == "oracle":
            print("TC,x1,x2,expected,active")
            for label, x1, x2, value, active in oracle_table(cfg):
                print(f"{label},{x1},{x2},{value!r},{int(active)}")
        else:
            bundle = run_experiment(cfg)
            for name, run in bundle.runs.items():
                status = run.trace.status.value if run.trace is not None else "done"
                print(f"{name}: total runs {run.report.total_runs}, max CI width "
                      f"{run.report.max_ci_width:.2f} ({status})")
            if bundle:
                print(f"wrote {cfg.output_dir}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"treatalloc: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
