import json
import logging
from pathlib import Path

import pandas as pd

from apps.sparse.mmio import read_matrix_market

logger = logging.getLogger(__name__)


def load_json_data(file_path):
    """Load JSON data from a file."""
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except Exception as e:
        logger.error(f"Error loading {file_path}: {str(e)}")
        raise


def dump_json_data(data, file_path):
    """Write JSON with sorted keys so reruns produce identical bytes."""
    path = Path(file_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except Exception as e:
        logger.error(f"Error writing {file_path}: {str(e)}")
        raise
    return path


def load_matrix(file_path):
    try:
        return read_matrix_market(file_path)
    except Exception as e:
        logger.error(f"Error loading matrix {file_path}: {str(e)}")
        raise


def write_csv(frame, file_path):
    path = Path(file_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, encoding="utf-8")
    except Exception as e:
        logger.error(f"Error writing {file_path}: {str(e)}")
        raise
    return path


def read_csv(file_path):
    try:
        return pd.read_csv(file_path, float_precision="round_trip")
    except Exception as e:
        logger.error(f"Error loading {file_path}: {str(e)}")
        raise
