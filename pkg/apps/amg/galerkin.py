import numpy as np

from apps.sparse.csr import CsrMatrix, DimensionMismatch


def _ones(M):
    pattern = M.scipy.copy()
    pattern.data = np.ones_like(pattern.data)
    return pattern


def galerkin(A, P):
    """A_c = P^T A P on the full symbolic product pattern.

    The pattern comes from the product of all-ones patterns, so entries that
    cancel numerically stay stored as explicit zeros.
    """
    if not A.is_square or P.n_rows != A.n_rows:
        raise DimensionMismatch(f"cannot form P^T A P with A {A.shape} and P {P.shape}")
    Pt = P.scipy.T.tocsr()
    values = (Pt @ A.scipy @ P.scipy).tocoo()
    values.sum_duplicates()
    symbolic = CsrMatrix.from_scipy(_ones(P).T.tocsr() @ _ones(A) @ _ones(P))

    n_c = P.n_cols
    filled = np.zeros(symbolic.nnz)
    keys = values.row.astype(np.int64) * n_c + values.col.astype(np.int64)
    filled[np.searchsorted(symbolic.entry_keys(), keys)] = values.data
    return CsrMatrix(n_c, n_c, symbolic.row_ptr, symbolic.col_idx, filled)
