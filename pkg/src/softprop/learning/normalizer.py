"""Per-channel min/max scaling to [-1, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError


@dataclass
class Scaler:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, float)
        self.hi = np.asarray(self.hi, float)
        if self.lo.shape != self.hi.shape or not np.all(self.hi > self.lo):
            raise DomainError("scaler needs max > min on every channel")

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, float)
        if X.ndim != 2 or len(X) == 0:
            raise DomainError("cannot fit a scaler on an empty array")
        lo, hi = X.min(axis=0), X.max(axis=0)
        # a constant channel gets a unit half-width so it maps to 0
        flat = hi - lo <= 1e-12 * np.maximum(1.0, np.abs(hi))
        lo = np.where(flat, lo - 1.0, lo)
        hi = np.where(flat, hi + 1.0, hi)
        return cls(lo, hi)

    def transform(self, X):
        return 2.0 * (np.asarray(X, float) - self.lo) / (self.hi - self.lo) - 1.0

    def transform_clamped(self, X):
        """Transform, clamp to [-1, 1] and report which rows were out of range."""
        Z = self.transform(X)
        out = np.any((Z < -1.0) | (Z > 1.0), axis=-1)
        return np.clip(Z, -1.0, 1.0), out

    def inverse(self, Z):
        return (np.asarray(Z, float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo

    def to_dict(self):
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["min"], d["max"])


@dataclass
class Normalizer:
    inputs: Scaler
    outputs: Scaler

    @classmethod
    def fit(cls, X, Y) -> "Normalizer":
        return cls(Scaler.fit(X), Scaler.fit(Y))

    def to_dict(self):
        return {"inputs": self.inputs.to_dict(), "outputs": self.outputs.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Scaler.from_dict(d["inputs"]), Scaler.from_dict(d["outputs"]))
