import csv
import io
import json
import math

import numpy as np

from src.diagnostics.export import (
    SUMMARY_COLUMNS,
    format_float,
    report_to_csv_bytes,
    report_to_json_bytes,
    write_report,
)
from src.diagnostics.summary import ChainMatrix, summarize


def _report(draws, groups=None):
    draws = np.asarray(draws, dtype=float)
    groups = np.zeros(draws.shape[0], dtype=int) if groups is None else np.asarray(groups)
    return summarize(ChainMatrix(draws, 0, groups))


def _rows(data: bytes) -> list[dict]:
    return list(csv.DictReader(io.StringIO(data.decode("utf-8"))))


def test_format_float():
    assert format_float(None) == ""
    assert format_float(math.nan) == "nan"
    assert format_float(0.1) == "0.10000000000000001"
    assert float(format_float(1 / 3)) == 1 / 3


def test_csv_header_and_rows(rng):
    data = report_to_csv_bytes(_report(rng.standard_normal((4, 100, 3))))
    assert data.splitlines()[0].decode() == ",".join(SUMMARY_COLUMNS)
    rows = _rows(data)
    assert [r["quantity"] for r in rows] == ["theta[0]", "theta[1]", "theta[2]"]
    assert all(r["nested_rhat"] == "" for r in rows)


def test_csv_values_read_back_exactly(rng):
    report = _report(rng.standard_normal((4, 100, 1)), groups=[0, 0, 1, 1])
    row = _rows(report_to_csv_bytes(report))[0]
    summary = report.quantities[0]
    for column in ("mean", "sd", "rhat", "split_rhat", "nested_rhat", "ess", "mcse"):
        assert float(row[column]) == getattr(summary, column)


def test_nan_and_flags_in_csv():
    row = _rows(report_to_csv_bytes(_report(np.full((2, 10, 1), 1.5))))[0]
    assert row["rhat"] == "nan"
    assert row["flags"].split(";")[:2] == ["constant-chain", "rhat-undefined"]


def test_json_uses_null_for_nan():
    payload = json.loads(report_to_json_bytes(_report(np.full((2, 10, 1), 1.5))))
    entry = payload["quantities"][0]
    assert entry["rhat"] is None
    assert entry["nested_rhat"] is None
    assert payload["max_rhat"] is None
    assert "constant-chain" in payload["flags"]


def test_write_report(tmp_path, rng):
    report = _report(rng.standard_normal((2, 50, 1)))
    csv_path, json_path = write_report(report, tmp_path / "out")
    assert csv_path.read_bytes() == report_to_csv_bytes(report)
    assert json.loads(json_path.read_text())["num_chains"] == 2
