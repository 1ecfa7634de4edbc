"""Row-scale analyses: the multiscale set and minimal-entry dropping."""
import logging
from dataclasses import dataclass

import numpy as np

from .csr import CsrMatrix, DimensionMismatch

logger = logging.getLogger(__name__)


class NoOffDiagonalEntries(ValueError):
    pass


@dataclass(frozen=True)
class MultiscaleReport:
    delta: float
    rows: np.ndarray
    max_row_ratio_log10: float

    @property
    def is_multiscale(self):
        return len(self.rows) > 0

    def to_dict(self):
        return {
            "delta": self.delta,
            "multiscale_rows": int(len(self.rows)),
            "max_row_ratio_log10": self.max_row_ratio_log10,
        }


def offdiagonal_mask(A):
    """Stored entries that belong to N_i: off the diagonal and nonzero."""
    return (A.col_idx != A.row_idx) & (A.values != 0)


def row_log_ratios(A):
    """log10(max|a_ik| / min|a_ik|) over N_i per row; NaN where |N_i| <= 1."""
    mask = offdiagonal_mask(A)
    rows = A.row_idx[mask]
    mags = np.abs(A.values[mask])
    counts = np.bincount(rows, minlength=A.n_rows)
    row_max = np.zeros(A.n_rows)
    row_min = np.full(A.n_rows, np.inf)
    np.maximum.at(row_max, rows, mags)
    np.minimum.at(row_min, rows, mags)
    ratios = np.full(A.n_rows, np.nan)
    eligible = counts >= 2
    ratios[eligible] = np.log10(row_max[eligible] / row_min[eligible])
    return ratios


def multiscale_report(A, delta):
    if not A.is_square:
        raise DimensionMismatch(f"multiscale_report needs a square matrix, got {A.shape}")
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    ratios = row_log_ratios(A)
    defined = ~np.isnan(ratios)
    rows = np.flatnonzero(defined & (ratios >= delta))
    max_ratio = float(ratios[defined].max()) if defined.any() else 0.0
    return MultiscaleReport(delta=float(delta), rows=rows, max_row_ratio_log10=max_ratio)


def is_structurally_symmetric(A):
    if not A.is_square:
        return False
    keys = A.entry_keys()
    mirrored = np.sort(A.col_idx * A.n_cols + A.row_idx)
    return np.array_equal(keys, mirrored)


def drop_min_entry(A):
    """Copy of A without its smallest-magnitude off-diagonal entry.

    Ties go to the lexicographically smallest (row, col). For a structurally
    symmetric matrix the mirrored entry is dropped as well; the diagonal is
    never touched.
    """
    if not A.is_square:
        raise DimensionMismatch(f"drop_min_entry needs a square matrix, got {A.shape}")
    candidates = np.flatnonzero(A.col_idx != A.row_idx)
    if len(candidates) == 0:
        raise NoOffDiagonalEntries("matrix has no off-diagonal entries to drop")
    # entries are stored row-major, so argmin's first hit is the lexicographic tie-break
    k = int(candidates[np.argmin(np.abs(A.values[candidates]))])
    i, j = int(A.row_idx[k]), int(A.col_idx[k])
    dropped = [k]
    if is_structurally_symmetric(A):
        cols, _ = A.row(j)
        dropped.append(int(A.row_ptr[j] + np.searchsorted(cols, i)))
    keep = np.ones(A.nnz, dtype=bool)
    keep[dropped] = False
    logger.debug(f"Dropping entry ({i}, {j}) with value {A.values[k]!r}")
    return CsrMatrix.from_coo(
        A.row_idx[keep], A.col_idx[keep], A.values[keep], A.shape
    )
