"""End-to-end training of GCIN + head on (matrix, theta_opt) pairs.

Optimizer (adaptive moment estimation), per parameter array p with
gradient g at step t:

    m <- beta1 m + (1 - beta1) g
    v <- beta2 v + (1 - beta2) g^2
    p <- p - lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + eps)
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed
from scipy.special import expit

from apps.gnn.features import graph_inputs
from apps.gnn.gcin import NonFiniteActivation, gcin_backward
from apps.gnn.mlp import mlp_backward

from .head import THETA_LOW, THETA_SPAN, init_model, model_forward, mse_loss

logger = logging.getLogger(__name__)

LOSS_CURVE_COLUMNS = ["epoch", "train_loss", "val_loss"]


class NonFiniteLoss(ArithmeticError):
    def __init__(self, epoch, batch):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")

    @classmethod
    def from_settings(cls, **overrides):
        return cls(**{"seed": settings.AUTOAMG_SEED, **settings.AUTOAMG_TRAIN, **overrides})


@dataclass(frozen=True, eq=False)
class TrainingSample:
    matrix_id: str
    W: object
    X0: object
    target: float


def prepare_samples(items):
    """items: iterable of (matrix_id, CsrMatrix, theta_opt)."""
    samples = []
    for matrix_id, A, target in items:
        W, X0 = graph_inputs(A)
        samples.append(TrainingSample(str(matrix_id), W, X0, float(target)))
    return samples


class Adam:
    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def _predict(model, sample):
    z, _, _ = model_forward(model, sample.W, sample.X0)
    return THETA_LOW + THETA_SPAN * expit(z)


def _sample_terms(model, sample, batch_size):
    z, gcin_cache, head_cache = model_forward(model, sample.W, sample.X0)
    s = expit(z)
    residual = THETA_LOW + THETA_SPAN * s - sample.target
    dz = 2.0 * residual / batch_size * THETA_SPAN * s * (1.0 - s)
    head_grads, d_feature = mlp_backward(model.head, head_cache, np.array([[dz]]))
    gcin_grads = gcin_backward(model.gcin, gcin_cache, d_feature[0])
    return residual * residual, gcin_grads + head_grads


def batch_loss(model, samples):
    return mse_loss([_predict(model, s) for s in samples], [s.target for s in samples])


def loss_and_gradients(model, samples, n_jobs=1):
    """MSE over `samples` and its gradient, aligned with model.arrays().

    Per-sample terms may run on threads; they are summed in sample order.
    """
    terms = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_sample_terms)(model, s, len(samples)) for s in samples
    )
    loss = 0.0
    grads = [np.zeros_like(a) for a in model.arrays()]
    for squared, sample_grads in terms:
        loss += squared
        for total, g in zip(grads, sample_grads):
            total += g
    return loss / len(samples), grads


def split_samples(samples, cfg):
    """Seeded validation split: floor(fraction * n) samples, at most n - 1."""
    rng = np.random.default_rng([cfg.seed, len(samples)])
    order = rng.permutation(len(samples))
    n_val = min(int(np.floor(cfg.validation_fraction * len(samples))), len(samples) - 1)
    validation = [samples[i] for i in np.sort(order[:n_val])]
    training = [samples[i] for i in np.sort(order[n_val:])]
    return training, validation


def train(samples, cfg=None, model=None, n_jobs=1, gcin=None, head=None):
    cfg = cfg or TrainConfig.from_settings()
    if len(samples) < 2:
        raise ValueError(f"training needs at least 2 labeled matrices, got {len(samples)}")
    bad = [s.matrix_id for s in samples if not 0.0 < s.target < 1.0]
    if bad:
        raise ValueError(f"theta labels must lie in (0, 1): {bad}")

    training, validation = split_samples(samples, cfg)
    model = model or init_model(cfg.seed, gcin, head)
    optimizer = Adam(model.arrays(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)

    def evaluate(epoch):
        try:
            train_loss = batch_loss(model, training)
            val_loss = batch_loss(model, validation) if validation else None
        except NonFiniteActivation as e:
            raise NonFiniteLoss(epoch, None) from e
        if not np.isfinite(train_loss) or (val_loss is not None and not np.isfinite(val_loss)):
            raise NonFiniteLoss(epoch, None)
        return train_loss, val_loss

    train_loss, val_loss = evaluate(0)
    curve = [{"epoch": 0, "train_loss": train_loss, "val_loss": val_loss}]
    best_score = val_loss if validation else train_loss
    best_epoch, best = 0, model.snapshot()
    logger.info(
        f"Training on {len(training)} matrices ({len(validation)} held out), initial loss {train_loss:.6f}"
    )

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(training))
        for batch, start in enumerate(range(0, len(training), cfg.batch_size), start=1):
            members = [training[i] for i in order[start:start + cfg.batch_size]]
            try:
                loss, grads = loss_and_gradients(model, members, n_jobs)
            except NonFiniteActivation as e:
                raise NonFiniteLoss(epoch, batch) from e
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise NonFiniteLoss(epoch, batch)
            optimizer.step(grads)

        train_loss, val_loss = evaluate(epoch)
        curve.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        score = val_loss if validation else train_loss
        if score < best_score:
            best_score, best_epoch, best = score, epoch, model.snapshot()
        logger.debug(f"epoch {epoch}: train {train_loss:.6f}, validation {val_loss}")

    model.restore(best)
    model.metadata.update(
        {
            "config": asdict(cfg),
            "best_epoch": best_epoch,
            "best_loss": best_score,
            "train_ids": [s.matrix_id for s in training],
            "validation_ids": [s.matrix_id for s in validation],
            "loss_curve": curve,
        }
    )
    logger.info(f"Training finished: best epoch {best_epoch}, loss {best_score:.6f}")
    return model


def loss_curve_frame(model):
    return pd.DataFrame(model.metadata.get("loss_curve", []), columns=LOSS_CURVE_COLUMNS)
