"""Regression metrics for wrench predictors."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import DatasetError

WRENCH_CHANNELS = ("Fx", "Fy", "Fz", "Tx", "Ty", "Tz")
FORCE_IDX = [0, 1, 2]
DIRECTION_MIN_FORCE_N = 0.5


@dataclass
class EvalMetrics:
    mae: list
    r2: list
    magnitude_mae_N: float
    direction_mae_deg: Optional[float]
    direction_samples: int
    loop_area_gap: Optional[float] = None
    latency_ms: Optional[float] = None

    @property
    def force_mae(self) -> float:
        return float(np.mean([self.mae[i] for i in FORCE_IDX]))

    def to_dict(self):
        d = asdict(self)
        d["force_mae"] = self.force_mae
        d["channels"] = list(WRENCH_CHANNELS[: len(self.mae)])
        return d


def mae(pred, label):
    return np.mean(np.abs(np.asarray(pred) - np.asarray(label)), axis=0)


def r2(pred, label):
    label = np.asarray(label, float)
    ss_res = np.sum((np.asarray(pred) - label) ** 2, axis=0)
    ss_tot = np.sum((label - label.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 - ss_res / ss_tot
    # a constant label channel: perfect if residual vanishes, else undefined -> 0
    return np.where(ss_tot > 0, out, np.where(ss_res == 0, 1.0, 0.0))


def planar_force_errors(pred, label, min_force: float = DIRECTION_MIN_FORCE_N):
    """Magnitude MAE of F_xy over all samples, direction MAE over samples with |F_xy| above ``min_force``."""
    pred, label = np.asarray(pred), np.asarray(label)
    mp = np.hypot(pred[:, 0], pred[:, 1])
    ml = np.hypot(label[:, 0], label[:, 1])
    mag = float(np.mean(np.abs(mp - ml)))
    keep = ml > min_force
    if not np.any(keep):
        return mag, None, 0
    ang = np.arctan2(pred[keep, 1], pred[keep, 0]) - np.arctan2(label[keep, 1], label[keep, 0])
    ang = np.abs((ang + np.pi) % (2 * np.pi) - np.pi)
    return mag, float(np.degrees(ang).mean()), int(keep.sum())


def loop_area(x, y) -> float:
    """Signed shoelace area of the closed polygon through ``(x, y)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def loop_area_gap(disp, pred, label, channels=FORCE_IDX) -> float:
    """Sum over channels of |area(pred vs disp) − area(label vs disp)| in N·mm."""
    pred, label = np.atleast_2d(pred), np.atleast_2d(label)
    return float(sum(abs(loop_area(disp, pred[:, c]) - loop_area(disp, label[:, c])) for c in channels))


def inference_latency_ms(predict, x, repeats: int = 200) -> float:
    """Median wall time of a single-sample prediction."""
    x = np.asarray(x, float)
    predict(x)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict(x)
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def evaluate(predict, X, Y, loop=None, latency_repeats: int = 0) -> EvalMetrics:
    """Score ``predict`` on (X, Y).

    ``loop`` is an optional ``(displacement, X_loop, Y_loop)`` triple from a
    scripted cyclic run used for the hysteresis loop-area gap.
    """
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if len(X) == 0:
        raise DatasetError("evaluation split is empty")
    P = np.asarray(predict(X))
    mag, dirn, nd = planar_force_errors(P, Y)
    gap = None
    if loop is not None:
        d, Xl, Yl = loop
        gap = loop_area_gap(d, predict(np.asarray(Xl, float)), Yl)
    lat = inference_latency_ms(predict, X[0], latency_repeats) if latency_repeats else None
    return EvalMetrics(mae(P, Y).tolist(), r2(P, Y).tolist(), mag, dirn, nd, gap, lat)
