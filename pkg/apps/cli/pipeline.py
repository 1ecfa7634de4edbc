"""The end-to-end pipeline behind the management commands.

gen -> gridsearch -> train -> eval, plus predict and sensitivity. Every
function here takes explicit arguments and returns data; the commands
handle option parsing and console output.
"""
import logging
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed

from apps.amg.hierarchy import AmgParams, setup
from apps.krylov.gmres import SolverParams, gmres
from apps.model.head import predict_theta
from apps.model.persistence import save_model
from apps.model.training import loss_curve_frame, prepare_samples, train
from apps.oracle.boundary import boundary_sweep
from apps.oracle.grid import evaluate_theta, grid_search, seed_from_id, sensitivity_report, theta_grid, theta_key
from apps.problems.generators import (
    DiffusionSpec,
    LinearProblem,
    RadiationSurrogateSpec,
    gen_diffusion,
    generate,
    spec_from_dict,
)
from apps.sparse.analysis import multiscale_report
from apps.sparse.mmio import write_matrix_market

from .manifest import MANIFEST_NAME, DatasetManifest, ManifestEntry
from .serializers import GenConfigSerializer
from .utils.data_loader import dump_json_data, load_matrix, write_csv

logger = logging.getLogger(__name__)

DEFAULT_M_RANGE = (1, 5)
DEFAULT_OMEGA_RANGE = (0.0, 1.0)
GROUPS = ("2d", "3d", "radiation")
MODEL_NAME = "model.json"
TRAINING_LOG_NAME = "training_log.csv"


def default_grid():
    return theta_grid(*settings.AUTOAMG_THETA_GRID)


def _draw_int(rng, bounds):
    low, high = bounds
    return int(rng.integers(low, high + 1))


def draw_spec(config, index, seed):
    """Problem spec number `index` of a generation config.

    Sizes come from a generator seeded with (seed, index); the coefficient
    field seed is the matrix index itself.
    """
    rng = np.random.default_rng([seed, index])
    radiation = config["problem"] == "radiation"
    if radiation:
        dim = 3
    elif config["dim"] == "mixed":
        dim = 2 if index % 2 == 0 else 3
    else:
        dim = int(config["dim"])
    desk = settings.AUTOAMG_DESK_SIZES[dim]
    n = _draw_int(rng, config.get("nx", desk["nx"]))
    blocks = min(_draw_int(rng, config.get("bx", desk["bx"])), n)
    M = _draw_int(rng, config.get("M", DEFAULT_M_RANGE))

    if radiation:
        omega_er = float(rng.uniform(*config.get("omega_er", DEFAULT_OMEGA_RANGE)))
        omega_ei = float(rng.uniform(*config.get("omega_ei", DEFAULT_OMEGA_RANGE)))
        return RadiationSurrogateSpec(
            nx=n, ny=n, nz=n, M=M, omega_er=omega_er, omega_ei=omega_ei,
            bx=blocks, by=blocks, bz=blocks, seed=index,
        )
    return DiffusionSpec(
        dim=dim,
        nx=n,
        ny=n,
        nz=n if dim == 3 else 1,
        bx=blocks,
        by=blocks,
        bz=blocks if dim == 3 else 1,
        M=M,
        seed=index,
        kappa_y_fixed=config["kappa_y_fixed"],
    )


def _draw_problem(cfg, index, seed, delta):
    spec = draw_spec(cfg, index, seed)
    problem = generate(spec)
    return spec, problem, multiscale_report(problem.A, delta)


def generate_dataset(config, out_dir, seed=None, delta=None, n_jobs=1):
    """Write matrices/<id>.mtx for every drawn spec plus manifest.json.

    Assembly runs on `n_jobs` threads; files are written in index order.
    """
    serializer = GenConfigSerializer(data=config)
    serializer.is_valid(raise_exception=True)
    cfg = dict(serializer.validated_data)
    seed = seed if seed is not None else cfg.get("seed", settings.AUTOAMG_SEED)
    if delta is None:
        delta = cfg.get("delta", settings.AUTOAMG_MULTISCALE_DELTA)
    cfg["seed"] = seed

    out_dir = Path(out_dir)
    (out_dir / "matrices").mkdir(parents=True, exist_ok=True)
    count = cfg["count"]
    n_train = int(round(count * (1.0 - cfg["test_fraction"])))
    if count == 0:
        logger.warning("Generation config asks for 0 matrices; writing an empty manifest")

    drawn = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_draw_problem)(cfg, index, seed, delta) for index in range(count)
    )
    entries = []
    for index, (spec, problem, report) in enumerate(drawn):
        matrix_id = f"m{index:04d}"
        relative = f"matrices/{matrix_id}.mtx"
        write_matrix_market(problem.A, out_dir / relative)
        entries.append(
            ManifestEntry(
                matrix_id=matrix_id,
                matrix_path=relative,
                problem=problem.meta["problem"],
                split="train" if index < n_train else "test",
                n_rows=problem.A.n_rows,
                nnz=problem.A.nnz,
                multiscale_rows=int(len(report.rows)),
                spec=spec.to_dict(),
            )
        )
        logger.info(
            f"{matrix_id}: {problem.meta['problem']} n={problem.A.n_rows} nnz={problem.A.nnz} "
            f"multiscale rows={len(report.rows)} (delta={delta})"
        )

    manifest = DatasetManifest(entries=entries, delta=float(delta), config=cfg, root=out_dir)
    manifest.save(out_dir / MANIFEST_NAME)
    return manifest


def _unit_rhs_problem(A):
    return LinearProblem(A=A, b=np.ones(A.n_rows))


def label_dataset(manifest, grid=None, solver_params=None, force=False, n_jobs=1, default_thetas=None):
    """Grid-search theta_opt for every unlabeled entry (all entries with force).

    The manifest is saved after each entry so an interrupted run resumes
    where it stopped.
    """
    grid = grid or default_grid()
    solver_params = solver_params or SolverParams.from_settings()
    default_thetas = tuple(default_thetas or settings.AUTOAMG_DEFAULT_THETAS)
    todo = [e for e in manifest.entries if force or not e.labeled]
    logger.info(f"Labeling {len(todo)} of {len(manifest.entries)} matrices over {len(grid)} theta values")

    for entry in todo:
        A = load_matrix(manifest.matrix_file(entry))
        record = grid_search(
            _unit_rhs_problem(A),
            grid,
            solver_params=solver_params,
            matrix_id=entry.matrix_id,
            default_thetas=default_thetas,
            n_jobs=n_jobs,
        )
        relative = f"grids/{entry.matrix_id}.csv"
        write_csv(record.to_frame(), manifest.resolve(relative))
        dump_json_data(record.summary(), manifest.resolve(f"grids/{entry.matrix_id}.json"))
        entry.theta_opt = float(record.theta_opt)
        entry.iters_at_opt = int(record.iters_min)
        entry.grid_csv = relative
        manifest.save()
    return [e.matrix_id for e in todo]


def _require_labels(manifest, entries, split):
    if not entries:
        raise ValueError(f"manifest has no {split} entries")
    missing = manifest.unlabeled(entries)
    if missing:
        raise ValueError(f"{split} matrices without theta_opt labels: {', '.join(missing)}")


def train_model(manifest, cfg=None, out_dir=None, n_jobs=1, gcin=None, head=None, model_path=None):
    """Train on the labeled train split; writes the model JSON and the loss CSV."""
    entries = manifest.train_entries
    _require_labels(manifest, entries, "train")
    samples = prepare_samples(
        (e.matrix_id, load_matrix(manifest.matrix_file(e)), e.theta_opt) for e in entries
    )
    model = train(samples, cfg, n_jobs=n_jobs, gcin=gcin, head=head)
    model.metadata["manifest"] = str(manifest.root / MANIFEST_NAME)

    out_dir = Path(out_dir or manifest.root)
    model_path = Path(model_path) if model_path else out_dir / MODEL_NAME
    save_model(model, model_path)
    write_csv(loss_curve_frame(model), model_path.parent / TRAINING_LOG_NAME)
    return model, model_path


def timed_solve(A, b, theta, solver_params, amg_params, repeats):
    """GridPoint at theta with median setup+solve time over `repeats` runs."""
    runs = [evaluate_theta(A, b, theta, solver_params, amg_params) for _ in range(repeats)]
    return runs[0], statistics.median(p.time_seconds for p in runs)


def _entry_system(manifest, entry):
    A = load_matrix(manifest.matrix_file(entry))
    return A, np.ones(A.n_rows), AmgParams.from_settings(seed=seed_from_id(entry.matrix_id))


def _entry_cases(row, defaults):
    cases = [("opt", row["theta_opt"]), ("auto", row["theta_auto"])]
    return cases + [(f"default_{theta_key(t)}", t) for t in defaults]


def _count_entry(manifest, entry, model, defaults, solver_params):
    """theta_auto and the iteration count of every case for one test matrix."""
    A, b, amg_params = _entry_system(manifest, entry)
    row = {
        "matrix_id": entry.matrix_id,
        "group": entry.group,
        "n_rows": A.n_rows,
        "theta_opt": entry.theta_opt,
        "theta_auto": predict_theta(model, A),
    }
    for name, theta in _entry_cases(row, defaults):
        point = evaluate_theta(A, b, theta, solver_params, amg_params)
        row[f"iter_{name}"] = point.iterations
        row[f"converged_{name}"] = point.converged
    logger.info(
        f"{entry.matrix_id}: theta_opt={entry.theta_opt} ({row['iter_opt']} its), "
        f"theta_auto={row['theta_auto']:.3f} ({row['iter_auto']} its)"
    )
    return row


def _time_entry(manifest, entry, row, defaults, solver_params, repeats):
    A, b, amg_params = _entry_system(manifest, entry)
    for name, theta in _entry_cases(row, defaults):
        point, median_time = timed_solve(A, b, theta, solver_params, amg_params, repeats)
        row[f"time_{name}"] = median_time
        row[f"setup_{name}"] = point.setup_seconds
        row[f"solve_{name}"] = point.solve_seconds
    return row


@dataclass
class EvalTable:
    table: pd.DataFrame
    per_matrix: pd.DataFrame

    def save(self, out_dir):
        out_dir = Path(out_dir)
        write_csv(self.table, out_dir / "eval_table.csv")
        write_csv(self.per_matrix, out_dir / "eval_matrices.csv")
        return out_dir / "eval_table.csv"


def _speedup(time_default, time_auto):
    return time_default / time_auto if time_auto > 0 else float("nan")


def eval_table(per_matrix, defaults):
    """Group means over the per-matrix rows; speedup = mean default time / mean auto time."""
    groups = [g for g in GROUPS if (per_matrix["group"] == g).any()]
    groups += sorted(set(per_matrix["group"]) - set(GROUPS))
    rows = []
    for group in groups + ["all"]:
        part = per_matrix if group == "all" else per_matrix[per_matrix["group"] == group]
        row = {
            "group": group,
            "count": len(part),
            "nrow_mean": part["n_rows"].mean(),
            "iter_opt_mean": part["iter_opt"].mean(),
            "time_opt_mean": part["time_opt"].mean(),
        }
        for i, theta in enumerate(defaults):
            key = theta_key(theta)
            iters = part[f"iter_default_{key}"].mean()
            times = part[f"time_default_{key}"].mean()
            row[f"iter_default_{key}"] = iters
            row[f"time_default_{key}"] = times
            row[f"speedup_{key}"] = _speedup(times, part["time_auto"].mean())
            if i == 0:
                row["iter_default_mean"] = iters
                row["time_default_mean"] = times
        row["iter_auto_mean"] = part["iter_auto"].mean()
        row["time_auto_mean"] = part["time_auto"].mean()
        row["speedup"] = _speedup(row["time_default_mean"], row["time_auto_mean"])
        rows.append(row)

    columns = [
        "group", "count", "nrow_mean", "iter_opt_mean", "time_opt_mean", "iter_default_mean",
        "time_default_mean", "iter_auto_mean", "time_auto_mean", "speedup",
    ]
    for theta in defaults:
        key = theta_key(theta)
        columns += [f"iter_default_{key}", f"time_default_{key}", f"speedup_{key}"]
    return pd.DataFrame(rows, columns=columns)


def evaluate_model(manifest, model, defaults=None, solver_params=None, repeats=None, n_jobs=1):
    """Solve every test matrix at theta_opt, each default and theta_auto.

    Predictions and iteration counts run on `n_jobs` threads; the timed
    solves that feed the time and speedup columns run one at a time.
    """
    defaults = tuple(defaults or settings.AUTOAMG_DEFAULT_THETAS)
    if not defaults:
        raise ValueError("evaluation needs at least one default theta")
    solver_params = solver_params or SolverParams.from_settings()
    repeats = repeats or settings.AUTOAMG_TIMING_REPEATS
    model.check_fingerprint()
    entries = manifest.test_entries
    _require_labels(manifest, entries, "test")

    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_count_entry)(manifest, e, model, defaults, solver_params) for e in entries
    )
    rows = [_time_entry(manifest, e, row, defaults, solver_params, repeats) for e, row in zip(entries, rows)]
    per_matrix = pd.DataFrame(rows)
    return EvalTable(table=eval_table(per_matrix, defaults), per_matrix=per_matrix)


def predict_matrix(matrix_path, model, solve=False, timing=False, delta=None, solver_params=None):
    delta = settings.AUTOAMG_MULTISCALE_DELTA if delta is None else delta
    A = load_matrix(matrix_path)
    start = time.perf_counter()
    theta = predict_theta(model, A)
    inference_seconds = time.perf_counter() - start
    result = {
        "matrix": str(matrix_path),
        "n_rows": A.n_rows,
        "nnz": A.nnz,
        "theta_auto": theta,
        "multiscale": multiscale_report(A, delta).to_dict(),
    }
    if timing:
        result["inference_seconds"] = inference_seconds

    if solve:
        solver_params = solver_params or SolverParams.from_settings()
        amg_params = AmgParams.from_settings(seed=seed_from_id(Path(matrix_path).stem))
        start = time.perf_counter()
        H = setup(A, theta, amg_params)
        setup_seconds = time.perf_counter() - start
        _, report = gmres(A, np.ones(A.n_rows), H, **solver_params.as_kwargs())
        result["solve"] = {**report.to_dict(), "setup_seconds": setup_seconds}
        result["hierarchy"] = H.stats()
        if timing:
            total = setup_seconds + report.elapsed_seconds
            result["inference_fraction"] = inference_seconds / total if total > 0 else None
    return result


def run_sensitivity(matrix_path=None, spec=None, tg=False, delta=None, grid=None, solver_params=None,
                    n_jobs=1, seed=0, factor_iters=100):
    """Theta sweep of one matrix: (CSV frame, summary dict).

    With `tg` the sweep runs the stationary two-grid solver on the boundary
    matrix; otherwise it is the GMRES grid search.
    """
    if (matrix_path is None) == (spec is None):
        raise ValueError("give exactly one of a matrix file or a problem spec")
    delta = settings.AUTOAMG_MULTISCALE_DELTA if delta is None else delta
    grid = grid or default_grid()
    solver_params = solver_params or SolverParams.from_settings()

    if spec is not None:
        spec = spec_from_dict(spec)
        name = "spec"
    else:
        name = Path(matrix_path).stem

    if tg:
        if spec is not None and not isinstance(spec, DiffusionSpec):
            raise ValueError("the two-grid boundary sweep needs a diffusion spec")
        A = gen_diffusion(spec).A if spec is not None else load_matrix(matrix_path)
        experiment = boundary_sweep(
            A, delta, grid, tol=solver_params.tol, max_iter=solver_params.max_iter,
            seed=seed, factor_iters=factor_iters,
        )
        return experiment.rows, experiment.summary()

    problem = generate(spec) if spec is not None else _unit_rhs_problem(load_matrix(matrix_path))
    record = grid_search(problem, grid, solver_params=solver_params, matrix_id=name, n_jobs=n_jobs)
    return sensitivity_report(record), record.summary()
