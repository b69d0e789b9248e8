"""Dataset CSV files: header ``x1..xp,y1..yd``, one sample per row.

Comma separated, ``.`` decimal point, UTF-8, header required.  Floats are
written in shortest round-trip form so a file read back is bit-identical.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

__all__ = ["CsvFormatError", "read_dataset", "write_dataset", "dataset_header", "format_float"]

_COLUMN = re.compile(r"^([xy])([1-9][0-9]*)$")


class CsvFormatError(ValueError):
    """Malformed dataset file; the message names the offending row and column."""


def format_float(v) -> str:
    return repr(float(v))


def dataset_header(p: int, d: int) -> list[str]:
    return [f"x{i}" for i in range(1, p + 1)] + [f"y{k}" for k in range(1, d + 1)]


def _parse_header(path, header: list[str]) -> tuple[int, int]:
    p = d = 0
    for col, name in enumerate(header, 1):
        match = _COLUMN.match(name.strip())
        if match is None:
            raise CsvFormatError(f"{path}: row 1, column {col}: bad header name {name!r}")
        letter, index = match.group(1), int(match.group(2))
        if letter == "x" and (d or index != p + 1):
            raise CsvFormatError(f"{path}: row 1, column {col}: expected x{p + 1}, got {name!r}")
        if letter == "y" and index != d + 1:
            raise CsvFormatError(f"{path}: row 1, column {col}: expected y{d + 1}, got {name!r}")
        if letter == "x":
            p += 1
        else:
            d += 1
    if p == 0:
        raise CsvFormatError(f"{path}: row 1: header has no x columns")
    return p, d


def read_dataset(path, *, need_y: bool = False, p: int | None = None, d: int | None = None):
    """Read ``(x, y)``; ``y`` is None when the file has no ``y`` columns.

    ``p`` and ``d`` (when given) must match the header; ``d`` is only
    checked if the file carries responses.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: row 1: missing header")
    n_x, n_y = _parse_header(path, rows[0])
    if need_y and n_y == 0:
        raise CsvFormatError(f"{path}: row 1: header has no y columns")
    if p is not None and n_x != p:
        raise CsvFormatError(f"{path}: row 1: expected {p} x columns, found {n_x}")
    if d is not None and n_y and n_y != d:
        raise CsvFormatError(f"{path}: row 1: expected {d} y columns, found {n_y}")
    width = n_x + n_y
    data = np.empty((len(rows) - 1, width))
    for r, row in enumerate(rows[1:], 2):
        if len(row) != width:
            raise CsvFormatError(f"{path}: row {r}: expected {width} columns, found {len(row)}")
        for c, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                value = np.nan
            if not np.isfinite(value):
                raise CsvFormatError(
                    f"{path}: row {r}, column {c + 1} ({rows[0][c].strip()}): "
                    f"not a finite number: {cell!r}"
                )
            data[r - 2, c] = value
    x = data[:, :n_x]
    y = data[:, n_x:] if n_y else None
    return x, y


def write_dataset(path, x, y=None) -> None:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y_cols = 0 if y is None else np.asarray(y).shape[1]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_header(x.shape[1], y_cols))
        for i in range(x.shape[0]):
            cells = list(x[i]) + ([] if y is None else list(y[i]))
            writer.writerow([format_float(v) for v in cells])
