import logging

import numpy as np

from apps.sparse.analysis import offdiagonal_mask
from apps.sparse.csr import CsrMatrix

logger = logging.getLogger(__name__)


def direct_interpolation(A, S, split):
    """Classical direct interpolation P (n_fine x n_coarse).

    C rows inject. An F row i interpolates from C_i = S_i & C with
    p_ij = -(a_ij / a_ii) * (sum over N_i of a_ik) / (sum over C_i of a_ik);
    a vanishing C_i sum falls back to equal weights 1/|C_i|, and an empty
    C_i leaves a zero row.
    """
    diag = A.diagonal(require_nonzero=True)
    is_coarse = split.is_coarse
    coarse_index = split.coarse_index
    rows, cols, vals = A.row_idx, A.col_idx, A.values

    neighbour = offdiagonal_mask(A)
    neighbour_sum = np.bincount(rows[neighbour], weights=vals[neighbour], minlength=A.n_rows)

    strong = np.isin(A.entry_keys(), S.strong.entry_keys(), assume_unique=True)
    interp = strong & neighbour & is_coarse[cols] & ~is_coarse[rows]
    f_rows, c_cols, a_ij = rows[interp], cols[interp], vals[interp]
    coarse_sum = np.bincount(f_rows, weights=a_ij, minlength=A.n_rows)
    coarse_count = np.bincount(f_rows, minlength=A.n_rows)

    denominator = coarse_sum[f_rows]
    fallback = denominator == 0
    if fallback.any():
        logger.debug(f"Equal-weight interpolation in {len(np.unique(f_rows[fallback]))} rows")
    safe = np.where(fallback, 1.0, denominator)
    weights = np.where(
        fallback,
        1.0 / coarse_count[f_rows],
        -(a_ij / diag[f_rows]) * (neighbour_sum[f_rows] / safe),
    )

    c_points = split.c_points
    P = CsrMatrix.from_coo(
        np.concatenate([c_points, f_rows]),
        np.concatenate([coarse_index[c_points], coarse_index[c_cols]]),
        np.concatenate([np.ones(len(c_points)), weights]),
        (A.n_rows, split.n_coarse),
    )
    return P
