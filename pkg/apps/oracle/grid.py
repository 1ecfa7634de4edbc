"""Exhaustive theta grid search: the labels and ground truth for training."""
import hashlib
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from apps.amg.hierarchy import AmgParams, SingularCoarseMatrix, setup
from apps.krylov.gmres import SolverParams, gmres
from apps.sparse.csr import ZeroDiagonal

logger = logging.getLogger(__name__)

GRID_COLUMNS = [
    "matrix_id",
    "theta",
    "iterations",
    "converged",
    "time_seconds",
    "setup_seconds",
    "solve_seconds",
    "levels",
    "operator_complexity",
]

SETUP_FAILURES = (SingularCoarseMatrix, ZeroDiagonal, ArithmeticError, np.linalg.LinAlgError)


def theta_grid(start=0.01, stop=0.99, step=0.01):
    """Inclusive arithmetic grid, rounded so 0.25 and 0.5 are hit exactly."""
    count = int(round((stop - start) / step)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def theta_key(theta):
    return f"{theta:g}"


def _as_bool(value):
    # CSV round trips may hand back "True"/"False" strings
    if isinstance(value, str):
        return value.strip().lower() == "true"
    return bool(value)


def seed_from_id(matrix_id):
    """Stable 63-bit PMIS seed for a matrix identifier."""
    digest = hashlib.md5(str(matrix_id).encode("utf-8")).hexdigest()
    return int(digest[:16], 16) >> 1


@dataclass(frozen=True)
class GridPoint:
    theta: float
    iterations: int
    converged: bool
    setup_seconds: float = 0.0
    solve_seconds: float = 0.0
    levels: int = 0
    operator_complexity: float = 0.0

    @property
    def time_seconds(self):
        return self.setup_seconds + self.solve_seconds


@dataclass
class ThetaRecord:
    matrix_id: str
    grid: list
    default_thetas: tuple = (0.25, 0.5)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = sorted(self.grid, key=lambda p: p.theta)
        if not self.grid:
            raise ValueError("a theta record needs at least one grid point")

    @property
    def thetas(self):
        return np.array([p.theta for p in self.grid])

    @property
    def iterations(self):
        return np.array([p.iterations for p in self.grid], dtype=np.int64)

    @property
    def optimum(self):
        # argmin returns the first minimum, i.e. the smallest theta on ties
        return self.grid[int(np.argmin(self.iterations))]

    @property
    def theta_opt(self):
        return self.optimum.theta

    @property
    def iters_min(self):
        return self.optimum.iterations

    @property
    def iters_max(self):
        return int(self.iterations.max())

    @property
    def theta_at_max(self):
        return self.grid[int(np.argmax(self.iterations))].theta

    def point_at(self, theta):
        for point in self.grid:
            if math.isclose(point.theta, theta, abs_tol=1e-9):
                return point
        return None

    @property
    def defaults(self):
        found = {}
        for theta in self.default_thetas:
            point = self.point_at(theta)
            if point is not None:
                found[theta_key(theta)] = point.iterations
        return found

    def summary(self):
        return {
            "matrix_id": self.matrix_id,
            "theta_opt": self.theta_opt,
            "iters_min": int(self.iters_min),
            "iters_max": self.iters_max,
            "theta_at_max": self.theta_at_max,
            "defaults": self.defaults,
        }

    def to_frame(self):
        rows = [
            {"matrix_id": self.matrix_id, **asdict(p), "time_seconds": p.time_seconds}
            for p in self.grid
        ]
        return pd.DataFrame(rows, columns=GRID_COLUMNS)

    @classmethod
    def from_frame(cls, frame, default_thetas=(0.25, 0.5)):
        if frame.empty:
            raise ValueError("grid frame has no rows")
        matrix_ids = frame["matrix_id"].astype(str).unique()
        if len(matrix_ids) != 1:
            raise ValueError(f"grid frame mixes matrices: {list(matrix_ids)}")
        points = [
            GridPoint(
                theta=float(row.theta),
                iterations=int(row.iterations),
                converged=_as_bool(row.converged),
                setup_seconds=float(row.setup_seconds),
                solve_seconds=float(row.solve_seconds),
                levels=int(row.levels),
                operator_complexity=float(row.operator_complexity),
            )
            for row in frame.itertuples(index=False)
        ]
        return cls(matrix_id=matrix_ids[0], grid=points, default_thetas=tuple(default_thetas))


def evaluate_theta(A, b, theta, solver_params, amg_params):
    """Setup + GMRES at one theta; setup failures count as the worst case."""
    start = time.perf_counter()
    try:
        H = setup(A, theta, amg_params)
    except SETUP_FAILURES as e:
        logger.warning(f"AMG setup failed at theta={theta}: {e}; recording {solver_params.max_iter} iterations")
        return GridPoint(
            theta=theta,
            iterations=solver_params.max_iter,
            converged=False,
            setup_seconds=time.perf_counter() - start,
        )
    setup_seconds = time.perf_counter() - start
    _, report = gmres(A, b, H, **solver_params.as_kwargs())
    stats = H.stats()
    return GridPoint(
        theta=theta,
        iterations=report.iterations if report.converged else solver_params.max_iter,
        converged=report.converged,
        setup_seconds=setup_seconds,
        solve_seconds=report.elapsed_seconds,
        levels=stats["levels"],
        operator_complexity=stats["operator_complexity"],
    )


def grid_search(
    problem,
    grid,
    solver_params=None,
    amg_params=None,
    matrix_id="matrix",
    default_thetas=(0.25, 0.5),
    n_jobs=1,
):
    """Run setup + GMRES for every theta in grid and pick the best one.

    The PMIS seed is derived from `matrix_id` unless `amg_params` already
    fixes one, so theta is the only thing varying across the sweep.
    """
    grid = [float(t) for t in grid]
    if not grid:
        raise ValueError("theta grid is empty")
    bad = [t for t in grid if not 0.0 < t < 1.0]
    if bad:
        raise ValueError(f"theta grid values must lie in (0, 1): {bad}")
    solver_params = solver_params or SolverParams()
    amg_params = amg_params or AmgParams.from_settings(seed=seed_from_id(matrix_id))

    points = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(evaluate_theta)(problem.A, problem.b, theta, solver_params, amg_params)
        for theta in grid
    )
    record = ThetaRecord(matrix_id=str(matrix_id), grid=points, default_thetas=tuple(default_thetas))
    logger.info(
        f"{matrix_id}: theta_opt={record.theta_opt} ({record.iters_min} iterations), "
        f"worst {record.iters_max} at theta={record.theta_at_max}"
    )
    return record


def sensitivity_report(record):
    """Per-theta data rows sorted by theta plus one summary row."""
    default_columns = [f"default_{theta_key(t)}" for t in record.default_thetas]
    rows = [
        {
            "row_type": "data",
            "matrix_id": record.matrix_id,
            "theta": p.theta,
            "iterations": p.iterations,
            "converged": p.converged,
            "time_seconds": p.time_seconds,
            "setup_seconds": p.setup_seconds,
            "solve_seconds": p.solve_seconds,
            "levels": p.levels,
            "operator_complexity": p.operator_complexity,
        }
        for p in record.grid
    ]
    summary = {
        "row_type": "summary",
        "matrix_id": record.matrix_id,
        "theta": record.theta_opt,
        "iterations": record.iters_min,
        "iters_max": record.iters_max,
        "theta_at_max": record.theta_at_max,
    }
    defaults = record.defaults
    for theta, column in zip(record.default_thetas, default_columns):
        summary[column] = defaults.get(theta_key(theta))
    rows.append(summary)
    columns = [
        "row_type", "matrix_id", "theta", "iterations", "converged", "time_seconds",
        "setup_seconds", "solve_seconds", "levels", "operator_complexity", "iters_max", "theta_at_max",
    ] + default_columns
    return pd.DataFrame(rows, columns=columns)


def record_from_report(frame):
    """Rebuild the ThetaRecord a sensitivity report was written from."""
    data = frame[frame["row_type"] == "data"]
    default_thetas = tuple(
        float(c[len("default_"):]) for c in frame.columns if c.startswith("default_")
    )
    points = [
        GridPoint(
            theta=float(row.theta),
            iterations=int(row.iterations),
            converged=_as_bool(row.converged),
            setup_seconds=float(row.setup_seconds),
            solve_seconds=float(row.solve_seconds),
            levels=int(row.levels),
            operator_complexity=float(row.operator_complexity),
        )
        for row in data.itertuples(index=False)
    ]
    return ThetaRecord(
        matrix_id=str(data["matrix_id"].iloc[0]), grid=points, default_thetas=default_thetas
    )
