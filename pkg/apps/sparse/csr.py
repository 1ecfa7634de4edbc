"""Compressed sparse row matrices and the kernels every other app builds on.

`CsrMatrix` owns plain numpy arrays in canonical form (sorted, duplicate
free column indices per row). Arithmetic is delegated to the equivalent
`scipy.sparse.csr_matrix`, whose row kernels sum each row left to right, so
results are reproducible run to run.
"""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)


class DimensionMismatch(ValueError):
    pass


class ZeroDiagonal(ValueError):
    def __init__(self, rows):
        self.rows = list(rows)
        shown = ", ".join(str(r) for r in self.rows[:10])
        super().__init__(f"Zero or missing diagonal entry in rows: {shown}")


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_ptr = np.asarray(self.row_ptr, dtype=np.int64)
        col_idx = np.asarray(self.col_idx, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self._check_invariants()

    def _check_invariants(self):
        nnz = len(self.col_idx)
        if len(self.row_ptr) != self.n_rows + 1:
            raise ValueError(
                f"row_ptr has length {len(self.row_ptr)}, expected {self.n_rows + 1}"
            )
        if len(self.values) != nnz:
            raise ValueError("values and col_idx lengths differ")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != nnz:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if nnz > 1:
            same_row = np.ones(nnz - 1, dtype=bool)
            starts = self.row_ptr[1:-1]
            starts = starts[(starts > 0) & (starts < nnz)]
            same_row[starts - 1] = False
            if np.any(np.diff(self.col_idx)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within a row")

    # construction

    @classmethod
    def from_scipy(cls, matrix):
        m = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_coo(cls, rows, cols, values, shape):
        """Build from triplets. Duplicate coordinates are an error, not a sum."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        n_rows, n_cols = shape
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows) > 1:
            dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate entry at ({rows[k]}, {cols[k]})")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=row_ptr[1:])
        return cls(n_rows, n_cols, row_ptr, cols, values)

    @classmethod
    def from_dense(cls, array):
        return cls.from_scipy(sp.csr_matrix(np.asarray(array, dtype=np.float64)))

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    # views

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.col_idx)

    @property
    def is_square(self):
        return self.n_rows == self.n_cols

    @cached_property
    def row_idx(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.row_ptr))

    @cached_property
    def scipy(self):
        m = sp.csr_matrix(
            (self.values.copy(), self.col_idx.copy(), self.row_ptr.copy()),
            shape=self.shape,
        )
        m.has_sorted_indices = True
        return m

    def to_dense(self):
        return self.scipy.toarray()

    def row(self, i):
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def entry_keys(self):
        """Row-major linear key of every stored entry (strictly increasing)."""
        return self.row_idx * self.n_cols + self.col_idx

    def diagonal(self, require_nonzero=False):
        diag = np.zeros(min(self.shape))
        on_diag = self.col_idx == self.row_idx
        diag[self.row_idx[on_diag]] = self.values[on_diag]
        if require_nonzero:
            bad = np.flatnonzero(diag == 0)
            if len(bad):
                raise ZeroDiagonal(bad)
        return diag

    def has_full_diagonal(self):
        on_diag = self.col_idx == self.row_idx
        return self.is_square and np.count_nonzero(on_diag) == self.n_rows

    def scaled(self, factor):
        return CsrMatrix(
            self.n_rows, self.n_cols, self.row_ptr, self.col_idx, self.values * factor
        )

    def same_pattern(self, other):
        return (
            self.shape == other.shape
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
        )

    def __repr__(self):
        return f"CsrMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def _as_operand(x, length, what):
    x = np.asarray(x, dtype=np.float64)
    rows = x.shape[0] if x.ndim else 0
    if x.ndim not in (1, 2) or rows != length:
        raise DimensionMismatch(f"{what}: operand has {rows} rows, expected {length}")
    return x


def spmv(A, x):
    """y = A x. Also accepts a block of column vectors (one SpMV per column)."""
    x = _as_operand(x, A.n_cols, "spmv")
    return A.scipy @ x


def spmv_transpose(A, x):
    """y = Aᵀ x without forming the transpose."""
    x = _as_operand(x, A.n_rows, "spmv_transpose")
    return A.scipy.T @ x


def transpose(A):
    return CsrMatrix.from_scipy(A.scipy.T.tocsr())
