"""Dense feed-forward network in plain numpy (float64)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, SoftPropError

ACTIVATIONS = ("relu", "tanh")


class GradientCheckError(SoftPropError):
    def __init__(self, message, deviation):
        super().__init__(message)
        self.deviation = deviation


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


@dataclass
class MLPModel:
    """``weights[l]`` has shape (n_in, n_out); hidden layers use ``activation``, the output is linear."""

    layer_sizes: list
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)
    activation: str = "relu"

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise DomainError("need at least an input and an output layer of positive size")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        if not self.weights:
            self.weights = [np.zeros((a, b)) for a, b in zip(self.layer_sizes, self.layer_sizes[1:])]
            self.biases = [np.zeros(b) for b in self.layer_sizes[1:]]
        self.weights = [np.asarray(w, float) for w in self.weights]
        self.biases = [np.asarray(b, float).ravel() for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[l], self.layer_sizes[l + 1]) or b.shape != (self.layer_sizes[l + 1],):
                raise DomainError(f"layer {l} shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DomainError(f"layer {l} has non-finite parameters")

    @classmethod
    def initialized(cls, layer_sizes, seed: int = 0, activation: str = "relu") -> "MLPModel":
        """He-style uniform fan-in initialisation, zero biases."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for a, b in zip(layer_sizes, layer_sizes[1:]):
            lim = np.sqrt(6.0 / a)
            ws.append(rng.uniform(-lim, lim, size=(a, b)))
            bs.append(np.zeros(b))
        return cls(list(layer_sizes), ws, bs, activation)

    @property
    def n_in(self):
        return self.layer_sizes[0]

    @property
    def n_out(self):
        return self.layer_sizes[-1]

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MLPModel":
        return MLPModel(self.layer_sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def forward(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.n_in:
            raise DomainError(f"expected {self.n_in} inputs, got {h.shape[1]}")
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l < last:
                h = _act(self.activation, h)
        return h[0] if single else h

    __call__ = forward

    def forward_cache(self, X):
        zs, acts = [], [X]
        h = X
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            zs.append(z)
            h = _act(self.activation, z) if l < last else z
            acts.append(h)
        return zs, acts

    def loss_and_grads(self, X, Y):
        """Mean squared error over all outputs and its parameter gradients."""
        zs, acts = self.forward_cache(X)
        diff = acts[-1] - Y
        loss = float(np.mean(diff * diff))
        delta = 2.0 * diff / diff.size
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            gw[l] = acts[l].T @ delta
            gb[l] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ self.weights[l].T) * _act_grad(self.activation, zs[l - 1], acts[l])
        return loss, gw, gb

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPModel":
        return cls(d["layer_sizes"], d["weights"], d["biases"], d.get("activation", "relu"))


def mlp_forward(model: MLPModel, x):
    return model.forward(x)


def gradient_check(model: MLPModel, x, y, eps: float = 1e-5, threshold: float = 1e-6, seed: int = 0, raise_on_fail=True):
    """Norm-wise relative deviation between backprop and central differences.

    Inputs whose hidden pre-activations sit within a few ``eps`` of a ReLU kink
    are nudged (seeded) until every unit is clear of it.
    """
    X = np.atleast_2d(np.asarray(x, float)).copy()
    Y = np.atleast_2d(np.asarray(y, float))
    rng = np.random.default_rng(seed)
    if model.activation == "relu":
        for _ in range(100):
            zs, _ = model.forward_cache(X)
            margin = min((np.abs(z).min() for z in zs[:-1]), default=np.inf)
            if margin > 1e3 * eps:
                break
            X = X + rng.normal(scale=1e-2, size=X.shape)
    _, gw, gb = model.loss_and_grads(X, Y)
    analytic, numeric = [], []
    probe = model.copy()
    for params, grads in ((probe.weights, gw), (probe.biases, gb)):
        for p, g in zip(params, grads):
            flat = p.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                lp = probe.loss_and_grads(X, Y)[0]
                flat[i] = old - eps
                lm = probe.loss_and_grads(X, Y)[0]
                flat[i] = old
                numeric.append((lp - lm) / (2 * eps))
            analytic.append(g.ravel())
    a = np.concatenate(analytic)
    n = np.asarray(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    dev = 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)
    if raise_on_fail and dev > threshold:
        raise GradientCheckError(f"gradient check failed: deviation {dev:.3e} > {threshold:.1e}", dev)
    return dev
