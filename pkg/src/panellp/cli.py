"""Command-line interface.

Two subcommands: ``estimate`` runs a local-projection study on a CSV panel,
``simulate`` runs a Monte Carlo experiment. Every run writes its outputs and
a manifest into ``--out`` and nowhere else. Exit codes: 0 success, 1 input
or configuration problem, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import load_lp_spec, load_sim_config
from .data import load_csv
from .driver import compare_estimators, run_lp
from .errors import NumericalError, ValidationError
from .report import (
    comparison_csv,
    comparison_rows,
    irf_csv,
    irf_rows,
    manifest,
    raw_estimates_csv,
    sim_csv,
    sim_rows,
    to_json,
)
from .simulate import run_mc

THREADS_ENV = "PANELLP_THREADS"


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _emit_warnings(rows: list[dict], stream) -> None:
    seen: set[str] = set()
    for row in rows:
        for w in row.get("warnings", []):
            if w not in seen:
                seen.add(w)
                print(f"warning: {w}", file=stream)
        if row.get("error"):
            print(f"warning: gap row: {row['error']}", file=stream)


def cmd_estimate(args: argparse.Namespace) -> int:
    spec = load_lp_spec(args.spec)
    data = load_csv(args.data)
    result = run_lp(data, spec)
    if all(not c.ok for c in result.cells):
        raise NumericalError(
            "every horizon failed; first error: " + (result.cells[0].error or "unknown")
        )

    os.makedirs(args.out, exist_ok=True)
    rows = irf_rows(result)
    _write(args.out, "irf.csv", irf_csv(result))
    if args.format == "json":
        _write(args.out, "irf.json", to_json(rows))

    if len(result.estimators()) >= 2:
        table = compare_estimators(result, args.peak_rule)
        _write(args.out, "comparison.csv", comparison_csv(table))
        if args.format == "json":
            _write(args.out, "comparison.json", to_json(comparison_rows(table)))

    man = manifest("estimate", spec, {"data": args.data, "spec": args.spec}, seed=None)
    _write(args.out, "manifest.json", json.dumps(man, indent=2) + "\n")
    _emit_warnings(rows, sys.stderr)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_sim_config(args.config)
    report = run_mc(cfg, threads=args.threads, keep_raw=args.keep_raw)

    os.makedirs(args.out, exist_ok=True)
    _write(args.out, "report.csv", sim_csv(report))
    _write(args.out, "report.json", to_json(sim_rows(report)))
    if args.keep_raw:
        _write(args.out, "raw_estimates.csv", raw_estimates_csv(report))
    man = manifest("simulate", cfg, {"config": args.config}, seed=cfg.seed)
    _write(args.out, "manifest.json", json.dumps(man, indent=2) + "\n")

    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    if report.n_failed:
        print(
            f"warning: {report.n_failed} of {cfg.replications} replications failed "
            f"and were excluded; first errors: {'; '.join(report.failures)}",
            file=sys.stderr,
        )
    return 0


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panellp",
        description="Panel local-projection impulse responses with jackknife "
                    "and analytic bias correction, plus a Monte Carlo harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="run a local-projection study on a CSV panel")
    est.add_argument("--data", required=True, help="long-format CSV (unit,time,variables)")
    est.add_argument("--spec", required=True, help="TOML study description")
    est.add_argument("--out", default=".", help="output directory (default: current)")
    est.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="'json' additionally writes JSON mirrors of the CSV outputs")
    est.add_argument("--peak-rule", choices=("most-negative", "most-positive", "max-abs"),
                     default="most-negative", dest="peak_rule",
                     help="peak definition for the estimator comparison table")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment")
    sim.add_argument("--config", required=True, help="TOML simulation design")
    sim.add_argument("--out", default=".", help="output directory (default: current)")
    sim.add_argument("--threads", type=int, default=None,
                     help=f"worker processes (default: ${THREADS_ENV} or 1); "
                          "changes wall time only, never values")
    sim.add_argument("--keep-raw", action="store_true", dest="keep_raw",
                     help="also write per-replication estimates")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None) is None and args.command == "simulate":
        args.threads = _default_threads()
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
