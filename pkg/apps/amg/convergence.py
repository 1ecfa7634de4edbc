"""Two-grid convergence factors.

The error propagation operator of one cycle is applied matrix-free as
E v = vcycle(H, 0, v). The theoretical factor is its spectral radius by
power iteration; the computed factor is the observed asymptotic error
reduction of the stationary iteration x <- vcycle(H, b, x).
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import spsolve

from .hierarchy import vcycle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactorEstimate:
    value: float
    converged: bool
    iterations: int

    def to_dict(self):
        return {"value": self.value, "converged": self.converged, "iterations": self.iterations}


def _check_two_grid(H):
    if H.n_levels > 2:
        raise ValueError(f"two-grid analysis needs at most 2 levels, hierarchy has {H.n_levels}")


def _geometric_mean(ratios):
    return float(math.exp(np.mean(np.log(ratios))))


def tg_convergence_factor_theoretical(H, tol=1e-6, max_iter=1000, seed=0):
    _check_two_grid(H)
    if H.n_levels == 1:
        return FactorEstimate(0.0, True, 0)
    n = H.finest.n_rows
    zero = np.zeros(n)
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)

    estimate = None
    ratios = []
    for k in range(1, max_iter + 1):
        w = vcycle(H, zero, v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return FactorEstimate(0.0, True, k)
        previous, estimate = estimate, abs(float(v @ w))
        ratios.append(norm)
        if previous is not None and abs(estimate - previous) < tol:
            return FactorEstimate(estimate, True, k)
        v = w / norm

    fallback = _geometric_mean(ratios[len(ratios) // 2:])
    logger.warning(
        f"Power iteration did not settle in {max_iter} steps "
        f"(last estimate {estimate:.6f}); using norm-ratio mean {fallback:.6f}"
    )
    return FactorEstimate(fallback, False, max_iter)


def tg_convergence_factor_computed(H, iters=100, seed=0, reduction=1e-8):
    """Geometric mean of the last half of the error-norm ratios.

    Stops early once the error has dropped by `reduction` so the recorded
    ratios stay clear of round-off.
    """
    _check_two_grid(H)
    if iters < 10:
        raise ValueError(f"iters must be at least 10, got {iters}")
    if H.n_levels == 1:
        return FactorEstimate(0.0, True, 0)
    A = H.finest
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(A.n_rows)
    x = rng.standard_normal(A.n_rows)
    exact = spsolve(A.scipy.tocsc(), b)

    initial = np.linalg.norm(x - exact)
    if initial == 0.0:
        return FactorEstimate(0.0, True, 0)
    ratios = []
    previous = initial
    for k in range(1, iters + 1):
        x = vcycle(H, b, x)
        error = np.linalg.norm(x - exact)
        if error == 0.0:
            return FactorEstimate(0.0, True, k)
        ratios.append(error / previous)
        previous = error
        if error < reduction * initial:
            break
    tail = ratios[len(ratios) // 2:]
    return FactorEstimate(_geometric_mean(tail), True, len(ratios))
