"""Dense matrix CSV codec: no header, LF endings, 17 significant digits."""

from __future__ import annotations

import math

import numpy as np

from .errors import ParseError, ShapeError


def format_float(v):
    return "%.17g" % v


def write_matrix(path, m):
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    lines = [",".join(format_float(v) for v in row) for row in m]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(line + "\n" for line in lines))


def read_matrix(path):
    """Parse a matrix written by :func:`write_matrix`.

    Raises
    ------
    ParseError
        A field is not a finite number (1-based line and column).
    ShapeError
        Rows have differing lengths or the file is empty.
    """
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    width = None
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r")
        fields = line.split(",")
        row = []
        for col, tok in enumerate(fields, start=1):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(lineno, col, f"not a number: {tok!r}") from None
            if not math.isfinite(v):
                raise ParseError(lineno, col, f"non-finite value {tok!r}")
            row.append(v)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ShapeError(lineno, f"expected {width} fields, found {len(row)}")
        rows.append(row)
    if not rows:
        raise ShapeError(1, "empty matrix file")
    return np.array(rows, dtype=float)
