"""Theta sensitivity of a boundary matrix under the stationary two-grid solver.

A boundary matrix is a multiscale matrix one entry drop away from being
single-scale. Sweeping theta over it shows where the strength graph
changes and how abruptly the two-grid iteration count responds.
"""
import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from apps.amg.convergence import tg_convergence_factor_computed, tg_convergence_factor_theoretical
from apps.amg.hierarchy import AmgParams, setup, vcycle
from apps.amg.strength import strength_graph
from apps.problems.generators import boundary_matrix, gen_diffusion
from apps.sparse.csr import spmv

from .grid import theta_grid

logger = logging.getLogger(__name__)

MAX_DENSE_ROWS = 400

BOUNDARY_COLUMNS = [
    "theta",
    "iterations",
    "converged",
    "factor_theoretical",
    "factor_computed",
    "theoretical_converged",
]


@dataclass
class BoundaryExperiment:
    rows: pd.DataFrame
    theta_star: float
    jump_ratio: float
    nnz_original: int
    nnz_boundary: int

    def summary(self):
        return {
            "theta_star": self.theta_star,
            "jump_ratio": self.jump_ratio,
            "nnz_original": self.nnz_original,
            "nnz_boundary": self.nnz_boundary,
        }


def two_grid_iterations(H, b, tol=1e-8, max_iter=500):
    """Iterations of x <- vcycle(H, b, x) from zero until the relative residual < tol."""
    A = H.finest
    b_norm = np.linalg.norm(b)
    x = np.zeros(A.n_rows)
    for k in range(1, max_iter + 1):
        x = vcycle(H, b, x)
        if np.linalg.norm(b - spmv(A, x)) < tol * b_norm:
            return k, True
    return max_iter, False


def _pattern_key(S):
    digest = hashlib.md5()
    digest.update(S.strong.row_ptr.tobytes())
    digest.update(S.strong.col_idx.tobytes())
    return digest.hexdigest()


def boundary_sensitivity_experiment(spec, delta, grid=None, tol=1e-8, max_iter=500, seed=0, factor_iters=100):
    """Regenerate the matrix of a diffusion spec and sweep its boundary matrix."""
    return boundary_sweep(gen_diffusion(spec).A, delta, grid, tol, max_iter, seed, factor_iters)


def boundary_sweep(A, delta, grid=None, tol=1e-8, max_iter=500, seed=0, factor_iters=100):
    if A.n_rows > MAX_DENSE_ROWS:
        raise ValueError(
            f"boundary experiment is limited to {MAX_DENSE_ROWS} rows, matrix has {A.n_rows}"
        )
    B = boundary_matrix(A, delta)
    b = np.ones(B.n_rows)
    params = AmgParams(max_levels=2, coarse_size_limit=1, seed=seed)
    grid = theta_grid() if grid is None else [float(t) for t in grid]

    # thetas with the same strength pattern build the same hierarchy
    cache = {}
    rows = []
    for theta in grid:
        key = _pattern_key(strength_graph(B, theta))
        if key not in cache:
            H = setup(B, theta, params)
            iterations, converged = two_grid_iterations(H, b, tol, max_iter)
            theoretical = tg_convergence_factor_theoretical(H, seed=seed)
            computed = tg_convergence_factor_computed(H, factor_iters, seed=seed)
            cache[key] = {
                "iterations": iterations,
                "converged": converged,
                "factor_theoretical": theoretical.value,
                "factor_computed": computed.value,
                "theoretical_converged": theoretical.converged,
            }
        rows.append({"theta": theta, **cache[key]})
    frame = pd.DataFrame(rows, columns=BOUNDARY_COLUMNS)

    iterations = frame["iterations"].to_numpy(dtype=np.float64)
    if len(iterations) > 1:
        jumps = iterations[1:] / np.maximum(iterations[:-1], 1.0)
        k = int(np.argmax(jumps))
        theta_star, jump_ratio = float(frame["theta"].iloc[k]), float(jumps[k])
    else:
        theta_star, jump_ratio = float(frame["theta"].iloc[0]), 1.0
    logger.info(
        f"Boundary experiment: {len(cache)} distinct strength patterns, "
        f"theta*={theta_star} (iterations x{jump_ratio:.2f})"
    )
    return BoundaryExperiment(
        rows=frame,
        theta_star=theta_star,
        jump_ratio=jump_ratio,
        nnz_original=A.nnz,
        nnz_boundary=B.nnz,
    )
