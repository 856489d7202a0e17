"""File I/O helpers: atomic writes and the CSV dialect used everywhere.

CSV dialect: comma separator, '.' decimal, mandatory header row, UTF-8, LF
line endings. Floats are emitted with 17 significant digits so values
round-trip exactly through text.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError


def format_float(v) -> str:
    return format(float(v), ".17g")


def atomic_write(path, text: str) -> None:
    """Write text to path via a temp file + rename so readers never see a
    truncated artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    lines = [",".join(str(h) for h in header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def read_numeric_csv(path) -> tuple[np.ndarray, list]:
    """Read a headered all-numeric CSV. Malformed cells are reported with
    their 1-based row and column position."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"empty CSV: {path}")
    names = [c.strip() for c in lines[0].split(",")]
    ncol = len(names)
    out = np.empty((len(lines) - 1, ncol), dtype=float)
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != ncol:
            raise DataError(
                f"{path}: row {i} has {len(cells)} cells, expected {ncol}")
        for j, cell in enumerate(cells):
            try:
                out[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: malformed numeric cell at row {i}, "
                    f"column {j + 1} ({names[j]!r}): {cell!r}") from None
    return out, names
