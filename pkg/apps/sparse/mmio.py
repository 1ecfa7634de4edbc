"""Matrix Market coordinate files (real field, general or symmetric).

The banner and size line are read with scipy.io.mminfo. Entries are parsed
here so every error carries its line number and duplicates are rejected
instead of summed.
"""
import logging

import numpy as np
from scipy.io import mminfo

from .csr import CsrMatrix

logger = logging.getLogger(__name__)

HEADER = "%%MatrixMarket matrix coordinate real general"


class MatrixMarketError(ValueError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


def _read_header(path):
    """(n_rows, n_cols, entries, symmetric) from the banner and size line."""
    try:
        n_rows, n_cols, entries, fmt, field, symmetry = mminfo(str(path))
    except Exception as e:
        raise MatrixMarketError(path, 1, f"malformed Matrix Market header ({e})") from None
    if fmt != "coordinate":
        raise MatrixMarketError(path, 1, f"unsupported format '{fmt}'")
    if field != "real":
        raise MatrixMarketError(path, 1, f"unsupported field '{field}'")
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(path, 1, f"unsupported symmetry '{symmetry}'")
    return int(n_rows), int(n_cols), int(entries), symmetry == "symmetric"


def read_matrix_market(path):
    """Read a .mtx file; symmetric storage is expanded to general."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    n_rows, n_cols, n_entries, symmetric = _read_header(path)

    size_seen = False
    seen = {}
    rows, cols, vals = [], [], []
    for line_no, line in enumerate(lines[1:], start=2):
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        if not size_seen:
            size_seen = True
            continue
        tokens = text.split()
        if len(tokens) != 3:
            raise MatrixMarketError(path, line_no, "expected 'row col value'")
        try:
            i, j, v = int(tokens[0]) - 1, int(tokens[1]) - 1, float(tokens[2])
        except ValueError:
            raise MatrixMarketError(path, line_no, "malformed entry") from None
        if not (0 <= i < n_rows and 0 <= j < n_cols):
            raise MatrixMarketError(path, line_no, f"index ({i + 1}, {j + 1}) out of range")
        if symmetric and j > i:
            raise MatrixMarketError(path, line_no, "upper-triangular entry in symmetric file")
        if (i, j) in seen:
            raise MatrixMarketError(
                path, line_no, f"duplicate entry ({i + 1}, {j + 1}), first on line {seen[(i, j)]}"
            )
        seen[(i, j)] = line_no
        rows.append(i)
        cols.append(j)
        vals.append(v)
        if symmetric and i != j:
            rows.append(j)
            cols.append(i)
            vals.append(v)

    if len(seen) != n_entries:
        raise MatrixMarketError(
            path, len(lines), f"expected {n_entries} entries, found {len(seen)}"
        )
    return CsrMatrix.from_coo(
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array(vals, dtype=np.float64),
        (n_rows, n_cols),
    )


def write_matrix_market(A, path):
    """Write A as general coordinate data; values use the shortest exact repr."""
    lines = [HEADER, f"{A.n_rows} {A.n_cols} {A.nnz}"]
    lines.extend(
        f"{i + 1} {j + 1} {float(v)!r}"
        for i, j, v in zip(A.row_idx.tolist(), A.col_idx.tolist(), A.values.tolist())
    )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise
