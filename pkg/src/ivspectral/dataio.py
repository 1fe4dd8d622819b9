"""CSV ingestion and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .dgp import Dataset
from .errors import DataError

_COLUMN = re.compile(r"^(x|z)([1-9][0-9]*)$")


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}", field="input_path") from None
    except UnicodeDecodeError:
        raise DataError(f"{path} is not valid UTF-8", field="input_path") from None
    if not rows:
        raise DataError(f"{path} is empty; a header row is required", field="input_path")
    header = [h.strip() for h in rows[0]]
    return header, rows[1:]


def _numeric(rows: list[list[str]], header: list[str], path) -> np.ndarray:
    out = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {i + 2} has {len(row)} cells, header has {len(header)}", field=str(path))
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DataError(f"missing value at row {i + 2}, column {header[j]!r}", field=header[j])
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"non-numeric cell {cell!r} at row {i + 2}", field=header[j]) from None
            if not math.isfinite(value):
                raise DataError(f"non-finite cell {cell!r} at row {i + 2}", field=header[j])
            out[i, j] = value
    return out


def _indexed(header: list[str], prefix: str) -> list[int]:
    cols = {}
    for pos, name in enumerate(header):
        m = _COLUMN.match(name)
        if m and m.group(1) == prefix:
            cols[int(m.group(2))] = pos
    if not cols:
        raise DataError(f"no {prefix}1..{prefix}N columns in header", field=prefix)
    expected = list(range(1, len(cols) + 1))
    if sorted(cols) != expected:
        raise DataError(f"{prefix} columns must be numbered 1..{len(cols)}, got {sorted(cols)}", field=prefix)
    return [cols[i] for i in expected]


def read_dataset_csv(path: str | Path) -> Dataset:
    """Load ``y, x1..xG, z1..zK`` from a headed CSV file."""
    header, rows = _read_rows(path)
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header", field="header")
    if "y" not in header:
        raise DataError("missing column 'y'", field="y")
    unknown = [h for h in header if h != "y" and not _COLUMN.match(h)]
    if unknown:
        raise DataError(f"unexpected columns {unknown}", field=unknown[0])
    x_cols = _indexed(header, "x")
    z_cols = _indexed(header, "z")
    if not rows:
        raise DataError("no data rows", field="input_path")
    values = _numeric(rows, header, path)
    return Dataset(y=values[:, header.index("y")], x=values[:, x_cols], z=values[:, z_cols])


def read_pi_csv(path: str | Path) -> np.ndarray:
    """K x G coefficient matrix from a headed CSV with one column per regressor."""
    header, rows = _read_rows(path)
    if not rows:
        raise DataError("no coefficient rows", field="pi_path")
    return _numeric(rows, header, path)


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    header = ["y"] + [f"x{j + 1}" for j in range(data.g)] + [f"z{j + 1}" for j in range(data.k)]
    table = np.column_stack([data.y, data.x, data.z])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in table:
            writer.writerow([fmt(v) for v in row])


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def fmt(value: float) -> str:
    """Shortest representation that parses back to the same float."""
    return repr(float(value))


def jsonable(value: Any) -> Any:
    """Convert numpy containers and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def dumps_json(report: dict) -> str:
    return json.dumps(jsonable(report), indent=2, allow_nan=False) + "\n"


def dumps_csv(header: list[str], rows: Iterable[list[Any]], preamble: dict) -> str:
    """CSV body preceded by ``# key: json`` comment lines carrying the report metadata."""
    buf = io.StringIO()
    for key, value in preamble.items():
        buf.write(f"# {key}: {json.dumps(jsonable(value), sort_keys=False, allow_nan=False)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
