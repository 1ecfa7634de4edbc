"""AMG setup and the V-cycle that applies it."""
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
from django.conf import settings
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.sparse.linalg import spsolve_triangular

from apps.sparse.csr import CsrMatrix, DimensionMismatch, transpose

from .coarsening import CfSplitting, pmis_coarsen
from .galerkin import galerkin
from .interpolation import direct_interpolation
from .strength import StrengthGraph, strength_graph

logger = logging.getLogger(__name__)


class SingularCoarseMatrix(ArithmeticError):
    def __init__(self, level):
        self.level = level
        super().__init__(f"Coarsest matrix on level {level} is singular")


@dataclass(frozen=True)
class AmgParams:
    max_levels: int = 25
    coarse_size_limit: int = 64
    presmooth: int = 1
    postsmooth: int = 1
    seed: int = 0

    @classmethod
    def from_settings(cls, **overrides):
        values = {**settings.AUTOAMG_AMG, **overrides}
        return cls(**values)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class Level:
    A: CsrMatrix
    P: Optional[CsrMatrix] = None
    R: Optional[CsrMatrix] = None
    splitting: Optional[CfSplitting] = None
    strength: Optional[StrengthGraph] = None

    @cached_property
    def lower(self):
        """Lower triangle with diagonal, for forward Gauss-Seidel."""
        return sp.tril(self.A.scipy, format="csr")

    @cached_property
    def upper(self):
        return sp.triu(self.A.scipy, format="csr")


@dataclass(frozen=True)
class Hierarchy:
    levels: list
    theta: float
    params: AmgParams
    coarse_lu: tuple = field(repr=False)

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def finest(self):
        return self.levels[0].A

    def stats(self):
        rows = [lvl.A.n_rows for lvl in self.levels]
        nnz = [lvl.A.nnz for lvl in self.levels]
        return {
            "theta": self.theta,
            "levels": len(self.levels),
            "rows": rows,
            "nnz": nnz,
            "grid_complexity": sum(rows) / rows[0],
            "operator_complexity": sum(nnz) / nnz[0],
        }


def _factor_coarsest(A, level):
    dense = A.to_dense()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(dense, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(pivots)) or np.any(pivots == 0):
        raise SingularCoarseMatrix(level)
    return lu, piv


def setup(A, theta, params=None):
    """Build the multigrid hierarchy of A for strong threshold theta."""
    params = params or AmgParams()
    if not A.is_square:
        raise DimensionMismatch(f"setup needs a square matrix, got {A.shape}")
    A.diagonal(require_nonzero=True)

    levels = []
    current = A
    while len(levels) + 1 < params.max_levels and current.n_rows > params.coarse_size_limit:
        depth = len(levels)
        S = strength_graph(current, theta)
        split = pmis_coarsen(S, seed=params.seed + depth)
        if split.n_coarse in (0, current.n_rows):
            logger.debug(f"Coarsening stagnated on level {depth} (|C|={split.n_coarse})")
            break
        P = direct_interpolation(current, S, split)
        levels.append(Level(A=current, P=P, R=transpose(P), splitting=split, strength=S))
        current = galerkin(current, P)
        current.diagonal(require_nonzero=True)

    levels.append(Level(A=current))
    hierarchy = Hierarchy(
        levels=levels,
        theta=float(theta),
        params=params,
        coarse_lu=_factor_coarsest(current, len(levels) - 1),
    )
    logger.debug(f"AMG setup theta={theta}: {hierarchy.stats()}")
    return hierarchy


def _cycle(H, depth, b, x):
    if depth == H.n_levels - 1:
        return lu_solve(H.coarse_lu, b, check_finite=False)
    level = H.levels[depth]
    A = level.A.scipy
    x = np.array(x, dtype=np.float64)
    for _ in range(H.params.presmooth):
        x += spsolve_triangular(level.lower, b - A @ x, lower=True)
    coarse_b = level.R.scipy @ (b - A @ x)
    coarse_x = _cycle(H, depth + 1, coarse_b, np.zeros(len(coarse_b)))
    x += level.P.scipy @ coarse_x
    for _ in range(H.params.postsmooth):
        x += spsolve_triangular(level.upper, b - A @ x, lower=False)
    return x


def vcycle(H, b, x):
    """One V-cycle for A x = b starting from x; inputs are not modified."""
    n = H.finest.n_rows
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if b.shape != (n,) or x.shape != (n,):
        raise DimensionMismatch(f"vcycle expects vectors of length {n}, got {b.shape} and {x.shape}")
    return _cycle(H, 0, b, x)
