"""File formats: gain-matrix and allocation JSON, Table-style CSVs, manifests.

Full-precision files use ``repr`` floats, which round-trip exactly;
``*_rounded.csv`` views use two decimals.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .closed_form import GainMatrix
from .power_alloc import PowerAllocation

__all__ = [
    "ParseError",
    "dumps_json",
    "write_json",
    "load_json",
    "read_gain_matrix",
    "read_allocation",
    "grid_csv",
    "parse_grid_csv",
    "allocation_csv",
    "parse_allocation_csv",
    "shortfall_csv",
    "sha256_file",
]


class ParseError(ValueError):
    """Malformed input file; the message names the file and line when known."""


def _fmt(x: float, decimals: int | None) -> str:
    if decimals is None:
        return repr(float(x))
    # +0.0 turns a rounded -0.00 into 0.00
    return f"{round(float(x), decimals) + 0.0:.{decimals}f}"


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _from_dict(path, d, cls):
    try:
        return cls.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        what = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ParseError(f"{path}: not a valid {cls.__name__} file: {what}") from exc


def read_gain_matrix(path) -> GainMatrix:
    return _from_dict(path, load_json(path), GainMatrix)


def read_allocation(path) -> PowerAllocation:
    return _from_dict(path, load_json(path), PowerAllocation)


def grid_csv(grid, row_labels: Sequence[str], col_labels: Sequence[str], corner: str,
             decimals: int | None = None, extra_rows: Iterable[tuple[str, Sequence[float]]] = ()) -> str:
    """Render a labelled 2-D grid; ``extra_rows`` go between header and grid."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *col_labels])
    for label, values in extra_rows:
        w.writerow([label, *(_fmt(v, decimals) for v in values)])
    for label, row in zip(row_labels, np.asarray(grid)):
        w.writerow([label, *(_fmt(v, decimals) for v in row)])
    return buf.getvalue()


def parse_grid_csv(text: str, source: str = "<csv>") -> tuple[list[str], list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParseError(f"{source}: empty file")
    header = rows[0]
    labels, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{source}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(f"{source}: line {lineno}: {exc}") from exc
        labels.append(row[0])
    return header, labels, np.array(values)


def allocation_csv(alloc: PowerAllocation, decimals: int | None = None) -> str:
    """Power table layout: gain row, then one row per layer with p_{1,l}..p_{M,l}."""
    M, L = alloc.powers.shape
    return grid_csv(
        alloc.powers.T,
        [f"l={l}" for l in range(1, L + 1)],
        [f"m={m}" for m in range(1, M + 1)],
        corner="row",
        decimals=decimals,
        extra_rows=[("gain_db", alloc.thresholds.gains_db)],
    )


def parse_allocation_csv(text: str, source: str = "<csv>") -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`allocation_csv`: returns (gains_db, powers[m-1, l-1])."""
    _, labels, values = parse_grid_csv(text, source)
    if not labels or labels[0] != "gain_db":
        raise ParseError(f"{source}: line 2: expected the gain_db row")
    return values[0], values[1:].T


def shortfall_csv(report, decimals: int | None = None) -> str:
    """Shortfall table layout: rows are layers, columns are block counts, percent."""
    grid = report.grid.T
    L, M = grid.shape
    return grid_csv(grid, [f"l={l}" for l in range(1, L + 1)],
                    [f"m={m}" for m in range(1, M + 1)], corner="layer", decimals=decimals)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
