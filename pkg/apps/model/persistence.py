"""Model files: JSON with every parameter stored as hex floats.

Schema (version 1):

    {
      "format": "autoamg-theta-model",
      "version": 1,
      "fingerprint": "<md5 of the feature extractor description>",
      "gcin": {"layers": [<mlp>, ...]},
      "head": <mlp>,
      "metadata": {...}
    }

    <mlp> = {"dims": [d0, d1, ...], "activation": "tanh",
             "weights": [<array>, ...], "biases": [<array>, ...]}
    <array> = {"shape": [...], "hex": ["0x1.8p-1", ...]}   (row-major)
"""
import json
import logging
from pathlib import Path

import numpy as np

from apps.gnn.gcin import GcinParams
from apps.gnn.mlp import MlpParams

from .head import FingerprintMismatch, TrainedModel

logger = logging.getLogger(__name__)

MODEL_FORMAT = "autoamg-theta-model"
MODEL_VERSION = 1

__all__ = ["FingerprintMismatch", "ModelFormatError", "load_model", "save_model"]


class ModelFormatError(ValueError):
    def __init__(self, path, message, offset=None):
        self.path = str(path)
        self.offset = offset
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}: invalid model file{where}: {message}")


def _encode_array(array):
    return {"shape": list(array.shape), "hex": [float(v).hex() for v in array.ravel()]}


def _decode_array(data):
    values = np.array([float.fromhex(v) for v in data["hex"]], dtype=np.float64)
    return values.reshape(data["shape"])


def _encode_mlp(params):
    return {
        "dims": params.dims,
        "activation": params.activation,
        "weights": [_encode_array(W) for W in params.weights],
        "biases": [_encode_array(b) for b in params.biases],
    }


def _decode_mlp(data):
    params = MlpParams(
        [_decode_array(W) for W in data["weights"]],
        [_decode_array(b) for b in data["biases"]],
        data["activation"],
    )
    if params.dims != list(data["dims"]):
        raise ValueError(f"declared dims {data['dims']} do not match stored arrays {params.dims}")
    return params


def model_to_dict(model):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "fingerprint": model.fingerprint,
        "gcin": {"layers": [_encode_mlp(layer) for layer in model.gcin.layers]},
        "head": _encode_mlp(model.head),
        "metadata": model.metadata,
    }


def save_model(model, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(model_to_dict(model), f, indent=1)
    except OSError as e:
        logger.error(f"Error writing model {path}: {str(e)}")
        raise
    logger.info(f"Model saved to {path}")
    return path


def load_model(path, *, for_inference=True, fingerprint=None):
    """Read a model file; with `for_inference` the feature fingerprint must match."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        logger.error(f"Error loading {path}: {str(e)}")
        raise
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ModelFormatError(path, "not UTF-8 text", e.start) from e
    except json.JSONDecodeError as e:
        # model files are ASCII, so the character position is the byte offset
        raise ModelFormatError(path, e.msg, e.pos) from e

    try:
        if data.get("format") != MODEL_FORMAT:
            raise ValueError(f"unknown format {data.get('format')!r}")
        if data.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported version {data.get('version')!r}")
        model = TrainedModel(
            gcin=GcinParams([_decode_mlp(layer) for layer in data["gcin"]["layers"]]),
            head=_decode_mlp(data["head"]),
            fingerprint=data["fingerprint"],
            metadata=data.get("metadata", {}),
        )
    except (KeyError, TypeError, AttributeError, ValueError) as e:
        logger.error(f"Error decoding model {path}: {str(e)}")
        raise ModelFormatError(path, str(e)) from e

    if for_inference:
        model.check_fingerprint(fingerprint)
    return model
