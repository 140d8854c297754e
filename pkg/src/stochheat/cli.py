"""Command line: ``stochheat run <config>`` and ``stochheat list``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config
from .runner import apply_overrides, list_experiments, run_config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochheat", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one configured experiment")
    run.add_argument("config", help="path to a .ini file or the name of a bundled config")
    run.add_argument("--output-dir", help="directory for report.json, CSVs and manifest")
    run.add_argument("--seed-override", type=int, help="replace the ensemble seed")
    run.add_argument("--paths-override", type=int, help="replace the number of Monte Carlo paths")
    run.add_argument("--workers", type=int, help="worker processes (does not change results)")
    run.add_argument("--json", action="store_true", help="print the full report as JSON")
    ls = sub.add_parser("list", help="list experiment kinds")
    ls.add_argument("--json", action="store_true", help="machine-readable listing")
    return p


def _list(as_json: bool) -> int:
    rows = list_experiments()
    if as_json:
        print(json.dumps([{"kind": k, "statement": s} for k, s in rows], indent=2))
    else:
        width = max(len(k) for k, _ in rows)
        for k, s in rows:
            print(f"{k:<{width}}  {s}")
    return 0


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.paths_override is not None and args.paths_override < 1:
            raise ConfigError("parameter violation for key 'paths': must be >= 1")
        cfg = apply_overrides(cfg, seed=args.seed_override, paths=args.paths_override,
                              workers=args.workers, output_dir=args.output_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_config(cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for r in report["reports"]:
            print(f"{r['lemma']:<14} {r['verdict']:<4}  ratio={r['ratio']}  exponent={r['exponent']}")
        print(f"verdict: {report['verdict']}  ({cfg.output.dir})")
    return 0 if report["verdict"] == "pass" else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        return _list(args.json)
    return _run(args)
