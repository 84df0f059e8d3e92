"""Command-line entry point.

    reservoir-lab run --config cfg.toml [--set key=value]... [--out DIR]
    reservoir-lab plot --record DIR --kind error_vs_n
    reservoir-lab budget --m 2 --d 1 --delta 0.05 --bm 1 --n-grid 1e3,1e4

Output root defaults to $RESERVOIR_LAB_OUT, then the current directory.
Exit codes: 0 success, 1 config error, 2 completed with failed cells.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, parse_config, parse_overrides, resolve_config
from .experiments import run_experiment
from .plots import PLOT_KINDS, emit_plot_data
from .records import load_record, write_record


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reservoir-lab")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("--config", required=True, help="TOML config file")
    run_p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value (repeatable; flags win over the file)",
    )
    run_p.add_argument("--out", default=None, help="output root (default $RESERVOIR_LAB_OUT or .)")

    plot_p = sub.add_parser("plot", help="emit plot data from a result record")
    plot_p.add_argument("--record", required=True, help="record directory written by run")
    plot_p.add_argument("--kind", required=True, choices=PLOT_KINDS)

    budget_p = sub.add_parser("budget", help="print a pure-formula budget table")
    budget_p.add_argument("--m", type=int, required=True)
    budget_p.add_argument("--d", type=int, default=1)
    budget_p.add_argument("--delta", type=float, default=0.05)
    budget_p.add_argument("--bm", type=float, default=1.0)
    budget_p.add_argument("--n-grid", required=True, help="comma-separated n values")
    budget_p.add_argument("--operator", default="", help="optional operator id for the tail column")
    return parser


def _output_root(flag_value) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("RESERVOIR_LAB_OUT")
    return Path(env) if env else Path(".")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            config = parse_config(
                args.config,
                overrides=parse_overrides(args.overrides),
                output_dir=_output_root(args.out),
            )
            record = run_experiment(config)
            out = write_record(record, config)
            print(f"wrote {len(record.rows)} rows to {out}")
            if record.failed_cells:
                for cell, reason in record.failed_cells:
                    print(f"failed cell {cell}: {reason}", file=sys.stderr)
                return 2
            return 0
        if args.command == "plot":
            record = load_record(args.record)
            path = emit_plot_data(record, args.kind, Path(args.record))
            print(f"wrote {path}")
            return 0
        if args.command == "budget":
            n_grid = [int(float(v)) for v in args.n_grid.split(",") if v]
            config = resolve_config(
                "budget_table",
                {
                    "m_grid": [args.m],
                    "d_grid": [args.d],
                    "delta": args.delta,
                    "b_m": args.bm,
                    "n_grid": n_grid,
                    "operator": args.operator,
                },
                output_dir=_output_root(None),
            )
            record = run_experiment(config)
            sys.stdout.write(record.csv_payload())
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
