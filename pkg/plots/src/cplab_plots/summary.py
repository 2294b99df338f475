"""Reading and filtering the sweep harness's summary CSV.

The CSV is the only interface to the experiment pipeline; nothing here
imports from it. Columns used: ncm, model, dataset, noise, d, n, epsilon,
mean_validity, mean_efficiency, se_efficiency, mean_abs_coverage_gap,
se_abs_coverage_gap, n_infeasible.
"""

from __future__ import annotations

import csv
from pathlib import Path


class SummaryError(Exception):
    """Missing file, missing column, or a filter that matches nothing."""


_INT_COLUMNS = {"d", "n", "repetitions", "n_infeasible", "total_zero_width"}
_FLOAT_COLUMNS = {
    "epsilon", "mean_validity", "se_validity", "mean_efficiency",
    "se_efficiency", "mean_abs_coverage_gap", "se_abs_coverage_gap",
    "corrected_mean_efficiency", "corrected_se_efficiency",
}

REQUIRED_COLUMNS = (
    "ncm", "model", "dataset", "noise", "d", "n", "epsilon",
    "mean_validity", "mean_efficiency", "se_efficiency",
    "mean_abs_coverage_gap", "se_abs_coverage_gap",
)


def _convert(column: str, text: str):
    if column in _INT_COLUMNS:
        return int(text)
    if column in _FLOAT_COLUMNS:
        return float(text)
    return text


def read_summary(path: str | Path) -> list[dict]:
    """Parse summary.csv into typed row dicts, preserving file order."""
    path = Path(path)
    if not path.exists():
        raise SummaryError(f"summary file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SummaryError(f"summary is missing columns: {missing}")
        rows = []
        for raw in reader:
            try:
                rows.append({k: _convert(k, v) for k, v in raw.items()})
            except ValueError as exc:
                raise SummaryError(f"bad cell in {path}:{reader.line_num}: {exc}")
    if not rows:
        raise SummaryError(f"summary has no data rows: {path}")
    return rows


def _matches(row: dict, column: str, wanted: str) -> bool:
    value = row[column]
    if isinstance(value, (int, float)):
        try:
            return float(value) == float(wanted)
        except ValueError:
            return False
    return str(value) == wanted


def apply_filters(rows: list[dict], filters: dict) -> list[dict]:
    """Keep rows matching every key=value predicate; error if none do."""
    if not filters:
        return list(rows)
    known = rows[0].keys()
    for column in filters:
        if column not in known:
            raise SummaryError(
                f"filter references unknown column {column!r}; "
                f"available: {sorted(known)}"
            )
    kept = [
        row for row in rows
        if all(_matches(row, c, w) for c, w in filters.items())
    ]
    if not kept:
        pretty = ", ".join(f"{k}={v}" for k, v in filters.items())
        raise SummaryError(f"no rows match filter {pretty}")
    return kept
