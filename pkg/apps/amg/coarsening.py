"""PMIS coarsening: parallel modified independent set selection."""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

C_POINT = 1
F_POINT = -1
UNDECIDED = 0


@dataclass(frozen=True)
class CfSplitting:
    labels: np.ndarray

    @cached_property
    def is_coarse(self):
        return self.labels == C_POINT

    @property
    def n_coarse(self):
        return int(np.count_nonzero(self.is_coarse))

    @property
    def c_points(self):
        return np.flatnonzero(self.is_coarse)

    @property
    def f_points(self):
        return np.flatnonzero(~self.is_coarse)

    @cached_property
    def coarse_index(self):
        """Coarse-grid index of each C point; -1 for F points."""
        index = np.full(len(self.labels), -1, dtype=np.int64)
        index[self.is_coarse] = np.arange(self.n_coarse)
        return index


def _ranks(measure):
    # larger measure wins; among equal measures the smaller index wins
    order = np.lexsort((-np.arange(len(measure)), measure))
    ranks = np.empty(len(measure), dtype=np.int64)
    ranks[order] = np.arange(len(measure))
    return ranks


def _max_over_rows(G, values, empty):
    """Row-wise maximum of `values` over the pattern of G (`empty` for empty rows)."""
    out = np.full(G.n_rows, empty, dtype=values.dtype)
    counts = np.diff(G.row_ptr)
    nonempty = counts > 0
    if nonempty.any():
        out[nonempty] = np.maximum.reduceat(values, G.row_ptr[:-1][nonempty])
    return out


def pmis_coarsen(S, seed, random_values=None):
    """Split the points of S into C and F.

    Each round promotes every undecided point whose measure |S_i^T| + rand_i
    beats all undecided neighbours in S + S^T; their undecided neighbours
    become F. Points with no strong connection at all are F from the start.
    """
    n = S.n
    if random_values is None:
        random_values = np.random.default_rng(seed).random(n)
    else:
        random_values = np.asarray(random_values, dtype=np.float64)
        if random_values.shape != (n,):
            raise ValueError(f"random_values must have shape ({n},), got {random_values.shape}")
    ranks = _ranks(S.influence_counts + random_values)

    G = S.symmetrized
    neighbours = G.col_idx
    labels = np.full(n, UNDECIDED, dtype=np.int8)
    labels[np.diff(G.row_ptr) == 0] = F_POINT

    rounds = 0
    while True:
        undecided = labels == UNDECIDED
        if not undecided.any():
            break
        rounds += 1
        neighbour_ranks = np.where(undecided[neighbours], ranks[neighbours], -1)
        best_neighbour = _max_over_rows(G, neighbour_ranks, -1)
        new_c = undecided & (ranks > best_neighbour)
        labels[new_c] = C_POINT
        touched = new_c[G.row_idx] & (labels[neighbours] == UNDECIDED)
        labels[neighbours[touched]] = F_POINT

    split = CfSplitting(labels=labels)
    logger.debug(f"PMIS: {split.n_coarse}/{n} C points after {rounds} rounds")
    return split
