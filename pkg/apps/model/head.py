"""The trained predictor: GCIN graph feature -> head MLP -> theta."""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy.special import expit

from apps.gnn.features import feature_fingerprint, graph_inputs
from apps.gnn.gcin import GcinParams, gcin_forward, init_gcin
from apps.gnn.mlp import MlpParams, init_mlp, mlp_forward

logger = logging.getLogger(__name__)

THETA_LOW = 0.01
THETA_SPAN = 0.98


class FingerprintMismatch(ValueError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(
            f"model was trained with feature extractor {found}, current extractor is {expected}"
        )


@dataclass(eq=False)
class TrainedModel:
    gcin: GcinParams
    head: MlpParams
    fingerprint: str = field(default_factory=feature_fingerprint)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.head.output_width != 1:
            raise ValueError(f"the head must produce one value, got width {self.head.output_width}")
        if self.head.input_width != self.gcin.output_width:
            raise ValueError(
                f"head expects width {self.head.input_width}, GCIN produces {self.gcin.output_width}"
            )

    def arrays(self):
        return self.gcin.arrays() + self.head.arrays()

    def snapshot(self):
        return [a.copy() for a in self.arrays()]

    def restore(self, snapshot):
        for target, saved in zip(self.arrays(), snapshot):
            target[...] = saved

    def check_fingerprint(self, expected=None):
        expected = expected or feature_fingerprint()
        if self.fingerprint != expected:
            raise FingerprintMismatch(expected, self.fingerprint)


def init_model(seed=0, gcin=None, head=None):
    """Fresh random model; layer sizes default to the AUTOAMG_GCIN / AUTOAMG_HEAD settings."""
    gcin = {**settings.AUTOAMG_GCIN, **(gcin or {})}
    head = {**settings.AUTOAMG_HEAD, **(head or {})}
    rng = np.random.default_rng(seed)
    gcin_params = init_gcin(
        rng,
        layers=gcin["layers"],
        hidden=gcin["hidden"],
        output=gcin["output"],
        activation=gcin["activation"],
    )
    head_params = init_mlp([gcin["output"], head["hidden"], 1], rng, head["activation"])
    return TrainedModel(gcin=gcin_params, head=head_params, metadata={"init_seed": seed})


def squash(z):
    return THETA_LOW + THETA_SPAN * expit(z)


def model_forward(model, W, X0):
    """Raw head output z with the caches needed for the backward pass."""
    graph_feature, gcin_cache = gcin_forward(W, X0, model.gcin)
    z, head_cache = mlp_forward(model.head, graph_feature.values[np.newaxis, :])
    return float(z[0, 0]), gcin_cache, head_cache


def predict_theta(model, A):
    model.check_fingerprint()
    z, _, _ = model_forward(model, *graph_inputs(A))
    return float(squash(z))


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"prediction and target lengths differ: {pred.shape} vs {target.shape}")
    if len(pred) == 0:
        raise ValueError("mse_loss needs at least one pair")
    return float(np.mean((target - pred) ** 2))
