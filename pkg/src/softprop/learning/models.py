"""The two regressors: marker pose -> node set (kinesthesia) and pose features -> wrench."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DatasetError
from ..io import atomic_write_text
from .dataset import Dataset
from .mlp import MLPModel
from .normalizer import Normalizer
from .train import TrainConfig, mlp_train

KINESTHESIA_HIDDEN = (150, 200, 150)
WRENCH_HIDDEN = (1000, 100, 50)


@dataclass
class TrainedModel:
    mlp: MLPModel
    normalizer: Normalizer
    feature_set: str
    seed: int
    kind: str = "wrench"

    def predict(self, X, return_flags: bool = False):
        """Denormalised prediction; inputs outside the training range are clamped and flagged."""
        X = np.asarray(X, float)
        Z, flags = self.normalizer.inputs.transform_clamped(X)
        Y = self.normalizer.outputs.inverse(self.mlp.forward(Z))
        return (Y, flags) if return_flags else Y

    __call__ = predict

    def to_dict(self) -> dict:
        d = self.mlp.to_dict()
        d.update(normalizer=self.normalizer.to_dict(), feature_set=self.feature_set, seed=self.seed, kind=self.kind)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        return cls(MLPModel.from_dict(d), Normalizer.from_dict(d["normalizer"]), d["feature_set"], int(d["seed"]), d.get("kind", "wrench"))

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_dict(), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_regressor(X, Y, hidden, config: TrainConfig, X_test=None, Y_test=None, feature_set="D", kind="wrench"):
    norm = Normalizer.fit(X, Y)
    Xn, Yn = norm.inputs.transform(X), norm.outputs.transform(Y)
    Xt = Yt = None
    if X_test is not None and len(X_test):
        Xt = norm.inputs.transform_clamped(X_test)[0]
        Yt = norm.outputs.transform(Y_test)
    model = MLPModel.initialized([X.shape[1], *hidden, Y.shape[1]], seed=config.seed)
    res = mlp_train(model, Xn, Yn, config, Xt, Yt)
    return TrainedModel(res.model, norm, feature_set, config.seed, kind), res


def train_wrench(
    train: Dataset, feature_set: str = "D+Dd", config: TrainConfig = TrainConfig(), test: Optional[Dataset] = None, hidden=WRENCH_HIDDEN
):
    if len(train) == 0:
        raise DatasetError("empty training split")
    X, Y = train.features(feature_set), train.wrench
    Xt = test.features(feature_set) if test is not None else None
    Yt = test.wrench if test is not None else None
    return fit_regressor(X, Y, hidden, config, Xt, Yt, feature_set, "wrench")


def train_kinesthesia(train: Dataset, config: TrainConfig = TrainConfig(), test: Optional[Dataset] = None, hidden=KINESTHESIA_HIDDEN):
    if train.nodes is None:
        raise DatasetError("kinesthesia training needs node-set labels")
    if len(train) == 0:
        raise DatasetError("empty training split")
    Xt = test.D if test is not None else None
    Yt = test.nodes if test is not None else None
    return fit_regressor(train.D, train.nodes, hidden, config, Xt, Yt, "D", "kinesthesia")


def positional_error(pred_nodes, true_nodes):
    """Mean node distance per sample (mm): sum_i |N̂_i - N_i| / n_nodes."""
    p = np.asarray(pred_nodes).reshape(len(pred_nodes), -1, 3)
    t = np.asarray(true_nodes).reshape(len(true_nodes), -1, 3)
    return np.linalg.norm(p - t, axis=2).mean(axis=1)
