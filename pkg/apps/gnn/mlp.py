"""Row-wise multilayer perceptrons with hand-written reverse mode.

A layer maps rows: Y = act(X @ W + b). The nonlinearity is applied after
every affine map except the last one.
"""
from dataclasses import dataclass, field

import numpy as np

from apps.sparse.csr import DimensionMismatch

ACTIVATIONS = ("tanh", "identity")


def _activate(name, Z):
    if name == "tanh":
        return np.tanh(Z)
    return Z


def _activation_grad(name, Y, dY):
    # derivative expressed through the activation output
    if name == "tanh":
        return dY * (1.0 - Y * Y)
    return dY


@dataclass(eq=False)
class MlpParams:
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("an MLP needs one bias per weight matrix and at least one layer")
        self.weights = [np.asarray(W, dtype=np.float64) for W in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise DimensionMismatch(f"layer {k}: weight {W.shape} and bias {b.shape} do not conform")
            if k and W.shape[0] != self.weights[k - 1].shape[1]:
                raise DimensionMismatch(
                    f"layer {k} expects width {W.shape[0]}, previous layer gives {self.weights[k - 1].shape[1]}"
                )

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def input_width(self):
        return self.dims[0]

    @property
    def output_width(self):
        return self.dims[-1]

    def arrays(self):
        """Trainable arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self):
        return MlpParams(
            [W.copy() for W in self.weights], [b.copy() for b in self.biases], self.activation
        )


def init_mlp(dims, rng, activation="tanh"):
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def zero_mlp(dims, activation="tanh"):
    return MlpParams(
        [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
        [np.zeros(b) for b in dims[1:]],
        activation,
    )


@dataclass
class MlpCache:
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


def mlp_forward(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_width:
        raise DimensionMismatch(f"MLP expects rows of width {params.input_width}, got shape {X.shape}")
    cache = MlpCache()
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(X)
        Z = X @ W + b
        X = Z if k == last else _activate(params.activation, Z)
        cache.outputs.append(X)
    return X, cache


def mlp_backward(params, cache, dY):
    """Returns (gradients aligned with params.arrays(), gradient w.r.t. the input)."""
    grads = [None] * (2 * len(params.weights))
    last = len(params.weights) - 1
    for k in range(last, -1, -1):
        if k != last:
            dY = _activation_grad(params.activation, cache.outputs[k], dY)
        grads[2 * k] = cache.inputs[k].T @ dY
        grads[2 * k + 1] = dY.sum(axis=0)
        dY = dY @ params.weights[k].T
    return grads, dY
