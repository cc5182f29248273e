"""Minibatch Adam on mean squared error with best-on-test snapshotting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DatasetError, DivergenceError
from .mlp import MLPModel


@dataclass
class TrainConfig:
    batch: int = 32
    learning_rate: float = 1e-3
    epochs: int = 60
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch < 1 or self.epochs < 1 or not self.learning_rate > 0:
            raise ConfigError("batch, epochs and learning_rate must be positive", key="train")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("invalid Adam moments", key="train")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train keys {sorted(unknown)}", key=sorted(unknown)[0])
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    model: MLPModel
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    best_epoch: int = 0


def mse(model: MLPModel, X, Y, chunk: int = 8192) -> float:
    total = 0.0
    for i in range(0, len(X), chunk):
        d = model.forward(X[i : i + chunk]) - Y[i : i + chunk]
        total += float(np.sum(d * d))
    return total / (len(X) * Y.shape[1])


def mlp_train(
    model: MLPModel,
    X,
    Y,
    config: TrainConfig = TrainConfig(),
    X_test=None,
    Y_test=None,
) -> TrainResult:
    """Train a copy of ``model``; the returned model is the best epoch snapshot.

    "Best" is the lowest test MSE when a test split is given, otherwise the
    lowest training MSE. Epoch order is shuffled from ``config.seed``.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if len(X) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if len(X) != len(Y) or X.shape[1] != model.n_in or Y.shape[1] != model.n_out:
        raise DatasetError("dataset shape does not match the model")
    has_test = X_test is not None and len(X_test) > 0
    net = model.copy()
    params = net.weights + net.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(config.seed)
    c = config
    step = 0
    result = TrainResult(net.copy())
    best = np.inf
    for epoch in range(c.epochs):
        order = rng.permutation(len(X))
        for i in range(0, len(X), c.batch):
            idx = order[i : i + c.batch]
            loss, gw, gb = net.loss_and_grads(X[idx], Y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}")
            step += 1
            lr_t = c.learning_rate * np.sqrt(1 - c.beta2**step) / (1 - c.beta1**step)
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= c.beta1
                mi += (1 - c.beta1) * g
                vi *= c.beta2
                vi += (1 - c.beta2) * g * g
                p -= lr_t * mi / (np.sqrt(vi) + c.adam_eps)
        tr = mse(net, X, Y)
        if not np.isfinite(tr):
            raise DivergenceError(f"training loss became non-finite at epoch {epoch}")
        result.train_loss.append(tr)
        score = tr
        if has_test:
            score = mse(net, np.asarray(X_test, float), np.asarray(Y_test, float))
            result.test_loss.append(score)
        if score < best:
            best = score
            result.model = net.copy()
            result.best_epoch = epoch
    return result
