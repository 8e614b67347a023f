"""One-hidden-layer autoencoder embeddings for users and items.

Encoder ``y = tanh(x W_enc + b_enc)``, decoder ``x_hat = y W_dec + b_dec``,
trained jointly on every user and item feature vector by mini-batch Adam
on the mean squared reconstruction error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DivergenceError, ValidationError
from .table import EmbeddingTable

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AutoencoderConfig:
    dim: int = 128
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("dim, epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass(frozen=True, eq=False)
class AutoencoderModel:
    W_enc: np.ndarray
    b_enc: np.ndarray
    W_dec: np.ndarray
    b_dec: np.ndarray
    loss_history: tuple
    initial_loss: float

    activation = "tanh"

    def encode(self, X):
        return np.tanh(np.asarray(X, dtype=np.float64) @ self.W_enc + self.b_enc)

    def decode(self, Y):
        return Y @ self.W_dec + self.b_dec

    def reconstruction_loss(self, X):
        X = np.asarray(X, dtype=np.float64)
        return float(np.mean((self.decode(self.encode(X)) - X) ** 2))


def _params_list(params):
    return [params["W_enc"], params["b_enc"], params["W_dec"], params["b_dec"]]


def autoencoder_loss_grad(params, X):
    """Mean squared reconstruction error over all entries of ``X`` and its gradient.

    ``params`` is a dict with ``W_enc (m, d)``, ``b_enc (d,)``, ``W_dec (d, m)``
    and ``b_dec (m,)``. The gradient is a dict with the same keys.
    """
    W1, b1, W2, b2 = _params_list(params)
    H = np.tanh(X @ W1 + b1)
    R = H @ W2 + b2 - X
    n = X.size
    loss = float(np.sum(R * R) / n)
    dOut = 2.0 * R / n
    gW2 = H.T @ dOut
    gb2 = dOut.sum(axis=0)
    dH = (dOut @ W2.T) * (1.0 - H * H)
    gW1 = X.T @ dH
    gb1 = dH.sum(axis=0)
    return loss, {"W_enc": gW1, "b_enc": gb1, "W_dec": gW2, "b_dec": gb2}


def _stack_features(features):
    if isinstance(features, dict):
        ids = [str(k) for k in features]
        rows = [np.asarray(features[k], dtype=np.float64).ravel() for k in features]
    else:
        ids, rows = [str(k) for k, _ in features], [np.asarray(v, dtype=np.float64).ravel() for _, v in features]
    if not rows:
        raise ValidationError("no feature vectors given")
    dims = {r.shape[0] for r in rows}
    if len(dims) != 1:
        raise ValidationError(f"feature vectors have inconsistent dimensions {sorted(dims)}")
    X = np.vstack(rows)
    if not np.all(np.isfinite(X)):
        raise ValidationError("feature vectors must be finite")
    return ids, X


def train_autoencoder(features, cfg):
    """Fit the autoencoder and embed every input row.

    Parameters
    ----------
    features : dict id -> vector
        User and item feature vectors sharing one input dimension.
    cfg : AutoencoderConfig

    Returns
    -------
    model : AutoencoderModel
    table : EmbeddingTable
        Encoder outputs keyed by the input ids.
    """
    ids, X = _stack_features(features)
    n, m = X.shape
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dim
    params = {
        "W_enc": rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, d)),
        "b_enc": np.zeros(d),
        "W_dec": rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, m)),
        "b_dec": np.zeros(m),
    }
    keys = list(params)
    mom = {k: np.zeros_like(v) for k, v in params.items()}
    vel = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0
    initial, _ = autoencoder_loss_grad(params, X)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = X[order[start:start + cfg.batch_size]]
            _, grad = autoencoder_loss_grad(params, batch)
            step += 1
            for k in keys:
                mom[k] = beta1 * mom[k] + (1 - beta1) * grad[k]
                vel[k] = beta2 * vel[k] + (1 - beta2) * grad[k] ** 2
                mhat = mom[k] / (1 - beta1**step)
                vhat = vel[k] / (1 - beta2**step)
                params[k] = params[k] - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        loss, _ = autoencoder_loss_grad(params, X)
        if not np.isfinite(loss):
            raise DivergenceError(f"autoencoder loss became non-finite in epoch {epoch}")
        history.append(loss)
        _logger.debug("autoencoder epoch %d loss %.6g", epoch, loss)

    model = AutoencoderModel(
        params["W_enc"], params["b_enc"], params["W_dec"], params["b_dec"], tuple(history), float(initial)
    )
    return model, EmbeddingTable(tuple(ids), model.encode(X), "node")
