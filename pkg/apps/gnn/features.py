"""Graph inputs for the GCIN: initial node features and edge weights.

Every quantity here is a ratio of stored matrix entries, so scaling A by a
positive constant leaves the graph inputs unchanged.
"""
import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from apps.sparse.analysis import offdiagonal_mask, row_log_ratios
from apps.sparse.csr import CsrMatrix, DimensionMismatch

logger = logging.getLogger(__name__)

FEATURE_VERSION = 1
FEATURE_NAMES = (
    "diag_sign",
    "diag_relative_log",
    "degree",
    "multiscale",
    "negative_fraction",
    "offdiag_dominance",
)
MULTISCALE_CAP = 16.0
DOMINANCE_CAP = 4.0
EDGE_NORMALIZATION = "row_max_abs"


@dataclass(frozen=True, eq=False)
class NodeFeatureMatrix:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatch(f"node features must be 2-D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("node features contain non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def permuted(self, perm):
        return NodeFeatureMatrix(self.data[perm])


@dataclass(frozen=True, eq=False)
class EdgeWeighting:
    W: CsrMatrix
    row_scale: np.ndarray
    normalization: str = EDGE_NORMALIZATION

    @property
    def n(self):
        return self.W.n_rows


def init_node_features(A):
    if not A.is_square:
        raise DimensionMismatch(f"node features need a square matrix, got {A.shape}")
    diag = np.abs(A.diagonal(require_nonzero=True))

    off = offdiagonal_mask(A)
    rows = A.row_idx[off]
    mags = np.abs(A.values[off])
    degree = np.bincount(rows, minlength=A.n_rows).astype(np.float64)
    negative = np.bincount(rows, weights=(A.values[off] < 0).astype(np.float64), minlength=A.n_rows)
    off_sum = np.bincount(rows, weights=mags, minlength=A.n_rows)

    X = np.zeros((A.n_rows, len(FEATURE_NAMES)))
    X[:, 0] = np.sign(A.diagonal())
    X[:, 1] = np.log10(1.0 + diag / diag.max()) / np.log10(2.0)
    max_degree = degree.max() if A.n_rows else 0.0
    if max_degree > 0:
        X[:, 2] = degree / max_degree
    ratios = row_log_ratios(A)
    X[:, 3] = np.clip(np.nan_to_num(ratios, nan=0.0) / MULTISCALE_CAP, 0.0, 1.0)
    has_neighbors = degree > 0
    X[has_neighbors, 4] = negative[has_neighbors] / degree[has_neighbors]
    X[:, 5] = np.clip(off_sum / diag, 0.0, DOMINANCE_CAP) / DOMINANCE_CAP
    return NodeFeatureMatrix(X)


def edge_weights(A):
    """w_ij = a_ij / max_k |a_ik| on pattern(A) plus the diagonal."""
    if not A.is_square:
        raise DimensionMismatch(f"edge weights need a square matrix, got {A.shape}")
    on_diag = A.col_idx == A.row_idx
    missing = np.setdiff1d(np.arange(A.n_rows), A.row_idx[on_diag])
    rows = np.concatenate([A.row_idx, missing])
    cols = np.concatenate([A.col_idx, missing])
    values = np.concatenate([A.values, np.zeros(len(missing))])
    P = CsrMatrix.from_coo(rows, cols, values, A.shape)

    scale = np.maximum.reduceat(np.abs(P.values), P.row_ptr[:-1]) if P.nnz else np.zeros(0)
    zero_rows = np.flatnonzero(scale == 0)
    if len(zero_rows):
        raise ValueError(f"edge weights undefined for zero rows: {zero_rows[:10].tolist()}")
    W = CsrMatrix(P.n_rows, P.n_cols, P.row_ptr, P.col_idx, P.values / scale[P.row_idx])
    return EdgeWeighting(W=W, row_scale=scale)


def graph_inputs(A):
    """(EdgeWeighting, NodeFeatureMatrix) for one matrix."""
    return edge_weights(A), init_node_features(A)


def feature_fingerprint():
    """Identifies the feature extractor a model was trained against."""
    description = {
        "version": FEATURE_VERSION,
        "features": list(FEATURE_NAMES),
        "multiscale_cap": MULTISCALE_CAP,
        "dominance_cap": DOMINANCE_CAP,
        "edges": EDGE_NORMALIZATION,
    }
    payload = json.dumps(description, sort_keys=True).encode("utf-8")
    return hashlib.md5(payload).hexdigest()
