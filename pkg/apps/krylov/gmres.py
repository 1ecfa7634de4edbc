"""Restarted GMRES with an optional AMG V-cycle as right preconditioner."""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.linalg import solve_triangular

from apps.amg.hierarchy import vcycle
from apps.sparse.csr import DimensionMismatch

logger = logging.getLogger(__name__)

BREAKDOWN = 1e-300


@dataclass(frozen=True)
class SolverParams:
    tol: float = 1e-8
    max_iter: int = 500
    restart: int = 30

    @classmethod
    def from_settings(cls, **overrides):
        return cls(**{**settings.AUTOAMG_GMRES, **overrides})

    def as_kwargs(self):
        return {"tol": self.tol, "max_iter": self.max_iter, "restart": self.restart}


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    relative_residuals: list = field(default_factory=list)
    true_relative_residual: float = 0.0
    elapsed_seconds: float = 0.0

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "relative_residual": self.true_relative_residual,
            "time_seconds": self.elapsed_seconds,
        }


def _preconditioner(precond, n):
    if precond is None:
        return lambda v: v
    zero = np.zeros(n)
    return lambda v: vcycle(precond, v, zero)


def gmres(A, b, precond=None, tol=1e-8, max_iter=500, restart=30):
    """Solve A x = b from x0 = 0.

    Arnoldi uses modified Gram-Schmidt and the small least-squares problem is
    reduced with Givens rotations. Convergence is only declared on the true
    residual ||b - A x|| / ||b||, recomputed at every restart boundary.
    """
    start = time.perf_counter()
    n = A.n_rows
    b = np.asarray(b, dtype=np.float64)
    if not A.is_square or b.shape != (n,):
        raise DimensionMismatch(f"gmres: A is {A.shape}, b has shape {b.shape}")
    if tol <= 0 or restart < 1 or max_iter < 0:
        raise ValueError(f"invalid GMRES parameters tol={tol}, max_iter={max_iter}, restart={restart}")

    x = np.zeros(n)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x, SolveReport(0, True, [], 0.0, time.perf_counter() - start)

    apply_m = _preconditioner(precond, n)
    matrix = A.scipy
    history = []
    iterations = 0
    r = b.copy()
    beta = b_norm

    while beta / b_norm >= tol and iterations < max_iter:
        m = min(restart, max_iter - iterations)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta

        k = 0
        for j in range(m):
            w = matrix @ apply_m(V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            h_next = np.linalg.norm(w)
            H[j + 1, j] = h_next

            for i in range(j):
                upper = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = upper
            radius = math.hypot(H[j, j], H[j + 1, j])
            if radius == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / radius, H[j + 1, j] / radius
            H[j, j] = radius
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            iterations += 1
            k = j + 1
            history.append(abs(g[j + 1]) / b_norm)
            if h_next < BREAKDOWN:
                logger.debug(f"Arnoldi breakdown after {iterations} iterations")
                break
            V[j + 1] = w / h_next
            if history[-1] < tol:
                break

        # a zero pivot means the Krylov space stopped growing; keep the leading block
        rank = k
        while rank > 0 and H[rank - 1, rank - 1] == 0.0:
            rank -= 1
        if rank:
            y = solve_triangular(H[:rank, :rank], g[:rank], lower=False)
            x += apply_m(V[:rank].T @ y)
        r = b - matrix @ x
        beta = np.linalg.norm(r)
        logger.debug(f"GMRES restart at {iterations} iterations, relative residual {beta / b_norm:.3e}")

    relative = beta / b_norm
    converged = relative < tol
    report = SolveReport(
        iterations=iterations,
        converged=converged,
        relative_residuals=history,
        true_relative_residual=float(relative),
        elapsed_seconds=time.perf_counter() - start,
    )
    return x, report
