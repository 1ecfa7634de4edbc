import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from apps.sparse.analysis import offdiagonal_mask
from apps.sparse.csr import CsrMatrix, DimensionMismatch, transpose

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StrengthGraph:
    """Row i of `strong` lists S_i; row i of `strong_transpose` lists S_i^T."""

    n: int
    strong: CsrMatrix
    strong_transpose: CsrMatrix

    @cached_property
    def influence_counts(self):
        """|S_i^T|: how many points depend strongly on i."""
        return np.diff(self.strong_transpose.row_ptr)

    @cached_property
    def symmetrized(self):
        """Pattern of S + S^T, the neighbourhood used by coarsening."""
        union = (self.strong.scipy + self.strong_transpose.scipy).tocsr()
        union.data[:] = 1.0
        return CsrMatrix.from_scipy(union)

    @property
    def n_edges(self):
        return self.strong.nnz


def strength_graph(A, theta):
    """j is in S_i when |a_ij| >= theta * max over off-diagonal k of |a_ik|."""
    if not A.is_square:
        raise DimensionMismatch(f"strength_graph needs a square matrix, got {A.shape}")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    A.diagonal(require_nonzero=True)

    mask = offdiagonal_mask(A)
    mags = np.abs(A.values)
    row_max = np.zeros(A.n_rows)
    np.maximum.at(row_max, A.row_idx[mask], mags[mask])
    strong = mask & (mags >= theta * row_max[A.row_idx])

    rows, cols = A.row_idx[strong], A.col_idx[strong]
    S = CsrMatrix.from_coo(rows, cols, np.ones(len(rows)), A.shape)
    graph = StrengthGraph(n=A.n_rows, strong=S, strong_transpose=transpose(S))
    logger.debug(f"Strength graph at theta={theta}: {graph.n_edges} strong edges")
    return graph
