"""Export a DiagnosticsReport to CSV and JSON.

Functions return bytes; `write_report` puts both files in an output
directory. Floats are written with 17 significant digits so they read back
bit-exactly; NaN is written as `nan` in CSV and `null` in JSON, and an
absent nested R-hat is an empty CSV cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from src.schemas import DiagnosticsReport, QuantitySummary

SUMMARY_COLUMNS = [
    "quantity", "mean", "sd", "q05", "q50", "q95", "bhat", "what",
    "rhat", "split_rhat", "nested_rhat", "ess", "mcse", "flags",
]


def format_float(value: float | None, digits: int = 17) -> str:
    if value is None:
        return ""
    if math.isnan(value):
        return "nan"
    return f"{value:.{digits}g}"


def _json_float(value: float | None) -> float | None:
    if value is None or math.isnan(value):
        return None
    return value


# ── CSV ───────────────────────────────────────────────────────────────────────

def summary_row(row: QuantitySummary, digits: int = 17) -> dict[str, str]:
    out = {"quantity": row.quantity, "flags": ";".join(row.flags)}
    for column in SUMMARY_COLUMNS[1:-1]:
        out[column] = format_float(getattr(row, column), digits)
    return out


def report_to_csv_bytes(report: DiagnosticsReport, digits: int = 17) -> bytes:
    """One row per quantity, header always present."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report.quantities:
        writer.writerow(summary_row(row, digits))
    return buf.getvalue().encode("utf-8")


# ── JSON ──────────────────────────────────────────────────────────────────────

def report_to_dict(report: DiagnosticsReport) -> dict:
    quantities = []
    for row in report.quantities:
        entry = {"quantity": row.quantity}
        for column in SUMMARY_COLUMNS[1:-1]:
            entry[column] = _json_float(getattr(row, column))
        entry["chain_means"] = [_json_float(v) for v in row.chain_means]
        entry["flags"] = list(row.flags)
        quantities.append(entry)
    return {
        "num_chains": report.num_chains,
        "num_draws": report.num_draws,
        "num_groups": report.num_groups,
        "rhat_threshold": report.rhat_threshold,
        "min_ess": _json_float(report.min_ess),
        "max_rhat": _json_float(report.max_rhat),
        "flags": report.flags,
        "quantities": quantities,
    }


def report_to_json_bytes(report: DiagnosticsReport) -> bytes:
    return json.dumps(report_to_dict(report), indent=2, allow_nan=False).encode("utf-8")


def write_report(report: DiagnosticsReport, out_dir: Path, digits: int = 17) -> tuple[Path, Path]:
    """Write summary.csv and summary.json; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "summary.csv"
    json_path = out_dir / "summary.json"
    csv_path.write_bytes(report_to_csv_bytes(report, digits))
    json_path.write_bytes(report_to_json_bytes(report))
    return csv_path, json_path
