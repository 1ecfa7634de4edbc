import os
from pathlib import Path

from decouple import Csv, config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Pipeline data configuration
AUTOAMG_DATA_DIR = config("AUTOAMG_DATA_DIR", default=os.path.join(BASE_DIR, "data"))
AUTOAMG_SEED = config("AUTOAMG_SEED", default=0, cast=int)
AUTOAMG_THREADS = config("AUTOAMG_THREADS", default=1, cast=int)
AUTOAMG_LOG_LEVEL = config("AUTOAMG_LOG_LEVEL", default="INFO")

# θ grid used for labeling: start, stop, step (inclusive of stop)
AUTOAMG_THETA_GRID = config(
    "AUTOAMG_THETA_GRID", default="0.01,0.99,0.01", cast=Csv(float)
)
# Default thresholds solvers ship with (2D and 3D)
AUTOAMG_DEFAULT_THETAS = config(
    "AUTOAMG_DEFAULT_THETAS", default="0.25,0.5", cast=Csv(float)
)
AUTOAMG_MULTISCALE_DELTA = config("AUTOAMG_MULTISCALE_DELTA", default=3.0, cast=float)

AUTOAMG_GMRES = {
    "tol": config("AUTOAMG_GMRES_TOL", default=1e-8, cast=float),
    "max_iter": config("AUTOAMG_GMRES_MAX_ITER", default=500, cast=int),
    "restart": config("AUTOAMG_GMRES_RESTART", default=30, cast=int),
}

AUTOAMG_AMG = {
    "max_levels": config("AUTOAMG_AMG_MAX_LEVELS", default=25, cast=int),
    "coarse_size_limit": config("AUTOAMG_AMG_COARSE_SIZE", default=64, cast=int),
    "presmooth": 1,
    "postsmooth": 1,
}

AUTOAMG_GCIN = {
    "layers": 3,
    "hidden": 32,
    "output": 32,
    "activation": "tanh",
}
AUTOAMG_HEAD = {"hidden": 32, "activation": "tanh"}

AUTOAMG_TRAIN = {
    "epochs": config("AUTOAMG_TRAIN_EPOCHS", default=200, cast=int),
    "batch_size": config("AUTOAMG_TRAIN_BATCH_SIZE", default=8, cast=int),
    "learning_rate": config("AUTOAMG_TRAIN_LR", default=1e-3, cast=float),
    "beta1": 0.9,
    "beta2": 0.999,
    "validation_fraction": 0.2,
}

# Desk-scale generation ranges per dimension (inclusive)
AUTOAMG_DESK_SIZES = {
    2: {"nx": (32, 64), "bx": (4, 8)},
    3: {"nx": (10, 16), "bx": (3, 5)},
}

# Setup+solve timing repeats; the median is reported
AUTOAMG_TIMING_REPEATS = config("AUTOAMG_TIMING_REPEATS", default=3, cast=int)


SECRET_KEY = config("DJANGO_SECRET_KEY", default="autoamg-local-only")

DEBUG = config("DJANGO_DEBUG", default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    "rest_framework",
    # Project-specific apps
    "apps.sparse",
    "apps.problems",
    "apps.amg",
    "apps.krylov",
    "apps.oracle",
    "apps.gnn",
    "apps.model",
    "apps.cli",
]

# Nothing is persisted in a database; every artifact is a file.
DATABASES = {}

# Serializers only; no views, so no request authentication
REST_FRAMEWORK = {
    "DEFAULT_AUTHENTICATION_CLASSES": [],
    "DEFAULT_PERMISSION_CLASSES": [],
    "UNAUTHENTICATED_USER": None,
}

TIME_ZONE = "UTC"
USE_TZ = True
USE_I18N = False

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "apps": {
            "handlers": ["console"],
            "level": AUTOAMG_LOG_LEVEL,
            "propagate": False,
        },
    },
}
