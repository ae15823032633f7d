"""Result files: ``results.csv``, ``report.json`` and ``curves/*.csv``.

Floats are written with ``repr`` (shortest round-trip form) so identical
numbers always produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from sforge.harness.recipes import CSV_COLUMNS


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            w.writerow([fmt(row.get(c)) for c in header])
        else:
            w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_results(path: Path, rows) -> None:
    Path(path).write_text(csv_text(CSV_COLUMNS, rows))


def read_results(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_curve(directory: Path, name: str, header, rows) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{name}.csv"
    path.write_text(csv_text(header, rows))
    return path


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_report(path: Path, report: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
