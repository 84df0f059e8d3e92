"""Result persistence: deterministic CSV rows plus a JSON summary.

CSV dialect is fixed: comma separators, '.' decimal point, mandatory header,
floats printed with 17 significant digits so values round-trip bit-exactly
and reruns of the same config produce byte-identical payloads. Timestamps
live only in the JSON summary, never in the CSV.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig

TOOL_VERSION = "0.1.0"


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass
class ResultRecord:
    config_hash: str
    experiment: str
    header: list
    rows: list  # list of tuples aligned with header
    created_at: str
    tool_version: str = TOOL_VERSION
    summary: dict = field(default_factory=dict)
    failed_cells: list = field(default_factory=list)

    def csv_payload(self) -> str:
        lines = [",".join(self.header)]
        for row in self.rows:
            lines.append(",".join(fmt_value(v) for v in row))
        return "\n".join(lines) + "\n"

    def column(self, name: str) -> list:
        if name not in self.header:
            raise KeyError(f"record has no column {name!r}; columns: {self.header}")
        idx = self.header.index(name)
        return [row[idx] for row in self.rows]


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


def write_record(record: ResultRecord, config: ExperimentConfig) -> Path:
    """Write rows.csv, summary.json, config.json (and errors.csv if needed)."""
    out = config.output_dir / f"{record.experiment}-{record.config_hash[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "rows.csv").write_text(record.csv_payload())
    (out / "config.json").write_text(config.canonical() + "\n")
    summary = {
        "experiment": record.experiment,
        "config_hash": record.config_hash,
        "created_at": record.created_at,
        "tool_version": record.tool_version,
        "n_rows": len(record.rows),
        "failed_cells": record.failed_cells,
        **record.summary,
    }
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    if record.failed_cells:
        lines = ["cell,reason"]
        for cell, reason in record.failed_cells:
            safe = str(reason).replace("\n", " ").replace(",", ";")
            lines.append(f"{cell},{safe}")
        (out / "errors.csv").write_text("\n".join(lines) + "\n")
    return out


def load_record(path) -> ResultRecord:
    """Read a record directory back (enough structure for plotting)."""
    path = Path(path)
    csv_path = path / "rows.csv"
    summary_path = path / "summary.json"
    if not csv_path.exists() or not summary_path.exists():
        raise FileNotFoundError(f"{path} is not a result record directory")
    summary = json.loads(summary_path.read_text())
    lines = csv_path.read_text().splitlines()
    header = lines[0].split(",") if lines else []
    rows = []
    for line in lines[1:]:
        row = []
        for tok in line.split(","):
            if tok in ("true", "false"):
                row.append(tok == "true")
            else:
                try:
                    row.append(int(tok))
                except ValueError:
                    try:
                        row.append(float(tok))
                    except ValueError:
                        row.append(tok)
        rows.append(tuple(row))
    return ResultRecord(
        config_hash=summary["config_hash"],
        experiment=summary["experiment"],
        header=header,
        rows=rows,
        created_at=summary["created_at"],
        tool_version=summary.get("tool_version", TOOL_VERSION),
        summary=summary,
        failed_cells=summary.get("failed_cells", []),
    )
