from django.conf import settings
from django.core.exceptions import ImproperlyConfigured


def _grid_problems(grid):
    if len(grid) != 3:
        return [f"AUTOAMG_THETA_GRID needs start,stop,step, got {list(grid)}"]
    start, stop, step = grid
    problems = []
    if not 0.0 < start <= stop < 1.0:
        problems.append(f"AUTOAMG_THETA_GRID bounds must satisfy 0 < start <= stop < 1, got {start}, {stop}")
    if step <= 0:
        problems.append(f"AUTOAMG_THETA_GRID step must be positive, got {step}")
    return problems


def check_pipeline_settings():
    """Verify the pipeline settings at startup; reports every bad entry at once."""
    problems = _grid_problems(settings.AUTOAMG_THETA_GRID)

    bad_defaults = [t for t in settings.AUTOAMG_DEFAULT_THETAS if not 0.0 < t < 1.0]
    if bad_defaults:
        problems.append(f"AUTOAMG_DEFAULT_THETAS outside (0, 1): {bad_defaults}")
    if settings.AUTOAMG_MULTISCALE_DELTA < 0:
        problems.append("AUTOAMG_MULTISCALE_DELTA must be non-negative")

    gmres = settings.AUTOAMG_GMRES
    if gmres["tol"] <= 0:
        problems.append("AUTOAMG_GMRES tol must be positive")
    if gmres["max_iter"] < 1 or gmres["restart"] < 1:
        problems.append("AUTOAMG_GMRES max_iter and restart must be at least 1")

    amg = settings.AUTOAMG_AMG
    if amg["max_levels"] < 1 or amg["coarse_size_limit"] < 1:
        problems.append("AUTOAMG_AMG max_levels and coarse_size_limit must be at least 1")

    for name in ("AUTOAMG_GCIN", "AUTOAMG_HEAD"):
        sizes = getattr(settings, name)
        if any(sizes[k] < 1 for k in ("layers", "hidden", "output") if k in sizes):
            problems.append(f"{name} layer sizes must be at least 1")

    train = settings.AUTOAMG_TRAIN
    if train["batch_size"] < 1:
        problems.append("AUTOAMG_TRAIN batch_size must be at least 1")
    if train["learning_rate"] <= 0:
        problems.append("AUTOAMG_TRAIN learning_rate must be positive")
    if not 0.0 <= train["validation_fraction"] < 1.0:
        problems.append("AUTOAMG_TRAIN validation_fraction must lie in [0, 1)")

    if settings.AUTOAMG_THREADS < 1 and settings.AUTOAMG_THREADS != -1:
        problems.append("AUTOAMG_THREADS must be positive or -1")
    if settings.AUTOAMG_TIMING_REPEATS < 1:
        problems.append("AUTOAMG_TIMING_REPEATS must be at least 1")

    if problems:
        raise ImproperlyConfigured("Invalid pipeline settings: " + "; ".join(problems))
