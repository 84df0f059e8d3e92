"""Plot-data emission: small plain-text tables any plotting tool can read."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .records import ResultRecord, fmt_value

PLOT_KINDS = ("error_vs_n", "gap_vs_t", "bound_vs_empirical")


def _require(record: ResultRecord, columns) -> None:
    missing = [c for c in columns if c not in record.header]
    if missing:
        raise ValueError(
            f"record {record.experiment} lacks column(s) {missing}; has {record.header}"
        )


def emit_plot_data(record: ResultRecord, kind: str, out_dir) -> Path:
    """Write a two-or-three-column table for the requested plot kind.

    error_vs_n aggregates seeds to the per-n median and emits log-log columns
    precomputed; the other kinds are plain column projections.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{record.experiment}-{kind}.dat"
    if kind == "error_vs_n":
        _require(record, ["n", "sup_error", "total_bound"])
        ns = sorted(set(record.column("n")))
        lines = ["# log_n log_median_sup_error log_total_bound"]
        for n in ns:
            errs = [r for r, nn in zip(record.column("sup_error"), record.column("n")) if nn == n]
            bnds = [r for r, nn in zip(record.column("total_bound"), record.column("n")) if nn == n]
            med = float(np.median(errs))
            lines.append(
                f"{fmt_value(math.log(n))} {fmt_value(math.log(med))} "
                f"{fmt_value(math.log(float(np.median(bnds))))}"
            )
    elif kind == "gap_vs_t":
        _require(record, ["t", "output_gap"])
        lines = ["# t gap"]
        for t, gap in zip(record.column("t"), record.column("output_gap")):
            lines.append(f"{fmt_value(t)} {fmt_value(gap)}")
    elif kind == "bound_vs_empirical":
        _require(record, ["trial", "empirical_sup", "bound"])
        lines = ["# trial empirical_sup bound"]
        for t, e, b in zip(
            record.column("trial"), record.column("empirical_sup"), record.column("bound")
        ):
            lines.append(f"{fmt_value(t)} {fmt_value(e)} {fmt_value(b)}")
    else:
        raise ValueError(f"unknown plot kind {kind!r}; known: {', '.join(PLOT_KINDS)}")
    path.write_text("\n".join(lines) + "\n")
    return path
