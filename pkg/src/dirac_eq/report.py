"""Result containers and the on-disk report: JSON summary, CSV tables, text."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["Check", "Table", "ExperimentResult", "emit_report", "to_jsonable", "file_digest"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: str
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {_num(self.value)} (require {self.threshold}){'  ' + self.detail if self.detail else ''}"


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        self.rows.append(list(values))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_cell(v) for v in r])


@dataclass
class ExperimentResult:
    name: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)  # name -> field, for --dump-fields
    extra_files: dict = field(default_factory=dict)  # name -> callable(path)

    def check(self, name: str, passed, value, threshold: str, detail: str = "") -> Check:
        c = Check(name, bool(passed), float(value), threshold, detail)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _num(v) -> str:
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return f"{v:.6g}"
    return str(v)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def emit_report(result: ExperimentResult | None, outdir) -> list[Path]:
    """Write summary.json, one CSV per table and report.txt; return the paths.

    An empty or missing result yields an empty summary and a warning.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if result is None or (not result.checks and not result.tables):
        warnings.warn("empty result set; writing an empty report", RuntimeWarning, stacklevel=2)
        result = result or ExperimentResult("empty")
    for name, table in sorted(result.tables.items()):
        p = out / f"{name}.csv"
        table.write_csv(p)
        written.append(p)
    for name, writer in sorted(result.extra_files.items()):
        p = out / name
        writer(p)
        written.append(p)
    summary = {
        "experiment": result.name,
        "passed": result.passed,
        "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "threshold": c.threshold,
                    "detail": c.detail} for c in result.checks],
        "results": result.summary,
        "tables": sorted(f"{n}.csv" for n in result.tables),
    }
    p = out / "summary.json"
    with open(p, "w") as fh:
        json.dump(to_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(p)
    p = out / "report.txt"
    lines = [f"experiment: {result.name}", f"status: {'PASS' if result.passed else 'FAIL'}", ""]
    lines += [c.line() for c in result.checks]
    for name, table in sorted(result.tables.items()):
        lines += ["", f"[{name}] {len(table.rows)} rows: {', '.join(table.columns)}"]
    with open(p, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(p)
    return written


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
