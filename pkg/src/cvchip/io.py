"""CSV/JSON serialization with round-trip-exact floats."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .acquire import TimeTrace, VarianceTrace

TRACE_COLUMNS = ("timestamp", "sample", "trace")
VARIANCE_COLUMNS = ("t_center", "variance", "se")
POWER_COLUMNS = ("power_mw", "v_minus", "v_plus")
POWER_SIGMA_COLUMNS = ("sigma_minus_db", "sigma_plus_db")
SHG_COLUMNS = ("wavelength_nm", "efficiency")


class CSVSchemaError(ValueError):
    """Bad CSV input; ``row`` is 1-based counting the header, ``column`` a name or None."""

    def __init__(self, path, row, column, message):
        self.path, self.row, self.column = str(path), row, column
        where = f"row {row}" + (f", column {column!r}" if column else "")
        super().__init__(f"{path}: {where}: {message}")

    def as_dict(self) -> dict:
        return {"error": "csv_schema", "path": self.path, "row": self.row,
                "column": self.column, "message": str(self)}


def fmt(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer)) else fmt(v) for v in row])
    return path


def write_trace_csv(path, trace: TimeTrace, max_traces: int | None = None) -> Path:
    n = trace.n_traces if max_traces is None else min(max_traces, trace.n_traces)
    rows = ((t, s, k) for k in range(n) for t, s in zip(trace.t, trace.samples[k]))
    return _write_rows(path, TRACE_COLUMNS, rows)


def write_variance_csv(path, vt: VarianceTrace) -> Path:
    return _write_rows(path, VARIANCE_COLUMNS, zip(vt.t, vt.variance, vt.se))


def write_power_csv(path, points, sigma_db=None) -> Path:
    pts = np.asarray(points, dtype=float)
    if sigma_db is None:
        return _write_rows(path, POWER_COLUMNS, pts)
    sig = np.broadcast_to(np.asarray(sigma_db, dtype=float), (len(pts), 2))
    return _write_rows(path, POWER_COLUMNS + POWER_SIGMA_COLUMNS, np.hstack([pts, sig]))


def write_shg_csv(path, wavelengths, efficiency) -> Path:
    return _write_rows(path, SHG_COLUMNS, zip(wavelengths, efficiency))


def read_csv_columns(path, required, optional=()) -> dict[str, np.ndarray]:
    """Parse a numeric CSV, reporting the first bad row/column."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CSVSchemaError(path, 0, None, f"cannot open: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CSVSchemaError(path, 1, None, "empty file")
        header = [h.strip() for h in header]
        for col in required:
            if col not in header:
                raise CSVSchemaError(path, 1, col, "missing column")
        wanted = [c for c in tuple(required) + tuple(optional) if c in header]
        cols = {c: [] for c in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise CSVSchemaError(path, lineno, None,
                                     f"expected {len(header)} fields, found {len(row)}")
            for c in wanted:
                raw = row[header.index(c)]
                try:
                    val = float(raw)
                except ValueError:
                    raise CSVSchemaError(path, lineno, c, f"not a number: {raw!r}") from None
                if not math.isfinite(val):
                    raise CSVSchemaError(path, lineno, c, f"non-finite value {raw!r}")
                cols[c].append(val)
    if not cols[wanted[0]]:
        raise CSVSchemaError(path, 2, None, "no data rows")
    return {c: np.array(v) for c, v in cols.items()}


def read_variance_csv(path) -> VarianceTrace:
    c = read_csv_columns(path, VARIANCE_COLUMNS)
    if np.any(c["variance"] < 0):
        row = int(np.flatnonzero(c["variance"] < 0)[0]) + 2
        raise CSVSchemaError(path, row, "variance", "negative variance")
    return VarianceTrace(c["t_center"], c["variance"], c["se"])


def read_power_csv(path):
    c = read_csv_columns(path, POWER_COLUMNS, POWER_SIGMA_COLUMNS)
    points = np.column_stack([c[k] for k in POWER_COLUMNS])
    sigma = None
    if all(k in c for k in POWER_SIGMA_COLUMNS):
        sigma = np.column_stack([c[k] for k in POWER_SIGMA_COLUMNS])
    return points, sigma


def read_shg_csv(path) -> np.ndarray:
    c = read_csv_columns(path, SHG_COLUMNS)
    return np.column_stack([c[k] for k in SHG_COLUMNS])


def read_trace_csv(path, sample_rate: float) -> TimeTrace:
    c = read_csv_columns(path, TRACE_COLUMNS[:2], TRACE_COLUMNS[2:])
    idx = c.get("trace", np.zeros_like(c["timestamp"])).astype(int)
    n_traces = idx.max() + 1
    t = c["timestamp"][idx == 0]
    samples = np.vstack([c["sample"][idx == k] for k in range(n_traces)])
    return TimeTrace(t, samples, sample_rate)


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
