"""Graph convolutional isomorphism network over a weighted matrix graph.

One layer aggregates over N(v_i) ∪ {v_i} with the edge weights and passes
the result through that layer's MLP:

    M^(k) = W X^(k-1),    X^(k) = MLP^(k)(M^(k))

and the graph feature is the sum over layers of the per-layer node mean.
Because W stores the diagonal, the aggregation is exactly one sparse
product per feature column.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from apps.sparse.csr import DimensionMismatch, spmv, spmv_transpose

from .features import FEATURE_NAMES
from .mlp import MlpParams, init_mlp, mlp_backward, mlp_forward

logger = logging.getLogger(__name__)


class NonFiniteActivation(ArithmeticError):
    def __init__(self, layer):
        self.layer = layer
        super().__init__(f"GCIN layer {layer} produced a non-finite activation")


@dataclass(eq=False)
class GcinParams:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a GCIN needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].input_width != self.layers[k - 1].output_width:
                raise DimensionMismatch(
                    f"GCIN layer {k + 1} expects width {self.layers[k].input_width}, "
                    f"layer {k} gives {self.layers[k - 1].output_width}"
                )
        widths = {layer.output_width for layer in self.layers}
        if len(widths) != 1:
            raise DimensionMismatch(f"the readout sums layers, so output widths must agree: {sorted(widths)}")

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def input_width(self):
        return self.layers[0].input_width

    @property
    def output_width(self):
        return self.layers[-1].output_width

    def arrays(self):
        return [a for layer in self.layers for a in layer.arrays()]

    def copy(self):
        return GcinParams([layer.copy() for layer in self.layers])


def init_gcin(rng, input_width=len(FEATURE_NAMES), layers=3, hidden=32, output=32, activation="tanh"):
    """Each layer: affine in->hidden, activation, affine hidden->output."""
    mlps = []
    width = input_width
    for _ in range(layers):
        mlps.append(init_mlp([width, hidden, output], rng, activation))
        width = output
    return GcinParams(mlps)


def gcin_config(**overrides):
    return {**settings.AUTOAMG_GCIN, **overrides}


@dataclass(frozen=True)
class GraphFeature:
    values: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ValueError("graph feature contains non-finite values")


@dataclass
class GcinCache:
    W: object
    n: int
    layer_caches: list = field(default_factory=list)


def gcin_forward(W, X0, params):
    if W.n != X0.n:
        raise DimensionMismatch(f"edge weights cover {W.n} nodes, features cover {X0.n}")
    if X0.d != params.input_width:
        raise DimensionMismatch(f"GCIN expects {params.input_width} input features, got {X0.d}")
    cache = GcinCache(W=W.W, n=X0.n)
    readout = np.zeros(params.output_width)
    X = X0.data
    for k, mlp in enumerate(params.layers, start=1):
        M = spmv(W.W, X)
        X, layer_cache = mlp_forward(mlp, M)
        if not np.isfinite(X).all():
            raise NonFiniteActivation(k)
        cache.layer_caches.append(layer_cache)
        readout += X.mean(axis=0)
    if not np.isfinite(readout).all():
        raise NonFiniteActivation(params.n_layers)
    return GraphFeature(readout), cache


def gcin_backward(params, cache, d_readout):
    """Gradients of <d_readout, X_g> aligned with params.arrays()."""
    d_readout = np.asarray(d_readout, dtype=np.float64)
    if d_readout.shape != (params.output_width,):
        raise DimensionMismatch(
            f"upstream gradient has shape {d_readout.shape}, expected ({params.output_width},)"
        )
    per_node = np.broadcast_to(d_readout / cache.n, (cache.n, params.output_width))
    grads = [None] * params.n_layers
    upstream = np.zeros((cache.n, params.output_width))
    for k in range(params.n_layers - 1, -1, -1):
        dX = per_node + upstream
        layer_grads, dM = mlp_backward(params.layers[k], cache.layer_caches[k], dX)
        grads[k] = layer_grads
        if k:
            upstream = spmv_transpose(cache.W, dM)
    return [g for layer_grads in grads for g in layer_grads]
