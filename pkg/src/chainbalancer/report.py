"""Report serialization: JSON for the full run, CSV for per-block samples.

Serialization is deterministic: sorted keys, fixed separators, repr-exact
floats. Two runs of the same config and seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

CSV_COLUMNS = ("block", "discrepancy", "utilization", "psi", "captured_profit")


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2)


def write_json(report: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_report(report) + "\n", encoding="utf-8")
    return path


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_blocks_csv(report: dict, path: str | Path) -> Path:
    """One row per block sample, header included, UTF-8."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for row in report["blocks"]:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
    return path


def write_comparison_json(comparison: dict, path: str | Path) -> Path:
    return write_json(comparison, path)


def write_comparison_csv(comparison: dict, path: str | Path) -> Path:
    """Per-mode, per-seed summary table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(("mode", "seed", "time_avg_discrepancy", "captured", "leaked"))
        for mode in comparison["modes"]:
            for row in comparison["per_mode"][mode]["per_seed"]:
                writer.writerow(
                    (
                        mode,
                        row["seed"],
                        repr(row["time_avg_discrepancy"]),
                        repr(row["captured"]),
                        repr(row["leaked"]),
                    )
                )
    return path
