"""Prony-series viscoelastic models.

Relaxation (Wiechert) form::

    E_rel(t) = k_e + sum_j k_j exp(-t / tau_j)          [N/mm]

Creep (Kelvin) form::

    C_crp(t) = m_g + sum_j m_j (1 - exp(-t / tau_j))    [mm/N]

Besides evaluation this module integrates the internal-variable form of the
relaxation model under arbitrary strain histories and identifies parameters
from sampled curves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError, FitError, ModeError
from .lm import levenberg_marquardt


class Mode(str, Enum):
    RELAXATION = "Relaxation"
    CREEP = "Creep"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).strip().lower()
        for m in cls:
            if m.value.lower() == key:
                return m
        raise ModeError(f"unknown mode {value!r}")


@dataclass(frozen=True)
class PronySeries:
    mode: Mode
    base: float
    branch_coeffs: tuple = ()
    branch_times: tuple = ()
    residual_rms: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        coeffs = tuple(float(c) for c in self.branch_coeffs)
        taus = tuple(float(t) for t in self.branch_times)
        object.__setattr__(self, "branch_coeffs", coeffs)
        object.__setattr__(self, "branch_times", taus)
        if len(coeffs) != len(taus):
            raise DomainError("branch_coeffs and branch_times differ in length")
        if not self.base > 0:
            raise DomainError(f"base must be positive, got {self.base}")
        if any(c < 0 for c in coeffs):
            raise DomainError("branch coefficients must be non-negative")
        if any(not t > 0 for t in taus):
            raise DomainError("branch times must be positive")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise DomainError("branch times must be strictly increasing")

    @property
    def n_branches(self) -> int:
        return len(self.branch_coeffs)

    @property
    def instantaneous(self) -> float:
        """Value at t = 0 for relaxation, t -> inf for creep is :attr:`equilibrium`."""
        if self.mode is Mode.RELAXATION:
            return self.base + sum(self.branch_coeffs)
        return self.base

    @property
    def equilibrium(self) -> float:
        if self.mode is Mode.RELAXATION:
            return self.base
        return self.base + sum(self.branch_coeffs)

    def scaled(self, factor: float) -> "PronySeries":
        """Same kernel with every stiffness (or compliance) multiplied by ``factor``."""
        return replace(
            self,
            base=self.base * factor,
            branch_coeffs=tuple(c * factor for c in self.branch_coeffs),
            residual_rms=None,
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "base": self.base,
            "coeffs": list(self.branch_coeffs),
            "taus": list(self.branch_times),
            "residual_rms": self.residual_rms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PronySeries":
        return cls(
            mode=d["mode"],
            base=d["base"],
            branch_coeffs=tuple(d.get("coeffs", ())),
            branch_times=tuple(d.get("taus", ())),
            residual_rms=d.get("residual_rms"),
        )


def canonical(mode, base, coeffs, taus, residual_rms=None, rtol=1e-6) -> PronySeries:
    """Sort branches by time and merge branches whose times coincide."""
    order = np.argsort(taus, kind="stable")
    merged_c, merged_t = [], []
    for i in order:
        c, t = float(coeffs[i]), float(taus[i])
        if merged_t and abs(t - merged_t[-1]) <= rtol * merged_t[-1]:
            w = merged_c[-1] + c
            # coefficient-weighted time keeps the merged branch representative
            merged_t[-1] = (merged_t[-1] * merged_c[-1] + t * c) / w if w > 0 else merged_t[-1]
            merged_c[-1] = w
        else:
            merged_c.append(c)
            merged_t.append(t)
    return PronySeries(mode, base, tuple(merged_c), tuple(merged_t), residual_rms)


# Published constants of the fitted finger models.
PAPER_RELAXATION = PronySeries(Mode.RELAXATION, 1.03, (0.15, 0.13, 0.11), (1.0, 12.1, 109.5))
PAPER_CREEP = PronySeries(Mode.CREEP, 0.97, (0.10, 0.11, 0.15), (3.1, 22.8, 206.2))


def _check_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("time must be non-negative")
    return arr


def eval_relaxation_modulus(p: PronySeries, t):
    """Relaxation modulus in N/mm. Accepts scalar or array ``t`` (``inf`` allowed)."""
    if p.mode is not Mode.RELAXATION:
        raise ModeError("eval_relaxation_modulus needs a Relaxation series")
    arr = _check_time(t)
    out = np.full(arr.shape, p.base)
    for k, tau in zip(p.branch_coeffs, p.branch_times):
        out = out + k * np.exp(-arr / tau)
    return float(out) if out.ndim == 0 else out


def eval_creep_compliance(p: PronySeries, t):
    """Creep compliance in mm/N. Accepts scalar or array ``t`` (``inf`` allowed)."""
    if p.mode is not Mode.CREEP:
        raise ModeError("eval_creep_compliance needs a Creep series")
    arr = _check_time(t)
    out = np.full(arr.shape, p.base)
    for m, tau in zip(p.branch_coeffs, p.branch_times):
        out = out + m * -np.expm1(-arr / tau)
    return float(out) if out.ndim == 0 else out


def evaluate(p: PronySeries, t):
    if p.mode is Mode.RELAXATION:
        return eval_relaxation_modulus(p, t)
    return eval_creep_compliance(p, t)


# ---------------------------------------------------------------------------
# time-domain integration


@dataclass(frozen=True)
class ViscoState:
    branch_states: tuple
    last_strain: float = 0.0
    time: float = 0.0

    @classmethod
    def rest(cls, p: PronySeries) -> "ViscoState":
        return cls(tuple(0.0 for _ in range(p.n_branches)), 0.0, 0.0)


def branch_factors(p: PronySeries, dt: float):
    """Per-branch decay ``exp(-dt/tau)`` and ramp gain ``tau/dt (1 - exp(-dt/tau))``."""
    taus = np.asarray(p.branch_times, dtype=float)
    decay = np.exp(-dt / taus)
    x = dt / taus
    # -expm1(-x)/x without cancellation for tiny x
    gain = np.where(x > 1e-8, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1.0 - 0.5 * x)
    return decay, gain


def step_visco(p: PronySeries, s: ViscoState, strain: float, dt: float):
    """Advance one step assuming strain varies linearly over ``dt``.

    Returns the new state and the total stress ``k_e*strain + sum(q_j)``.
    The recurrence is exact for piecewise-linear strain histories.
    """
    if p.mode is not Mode.RELAXATION:
        raise ModeError("step_visco integrates Relaxation series only")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    decay, gain = branch_factors(p, dt)
    q = np.asarray(s.branch_states, dtype=float)
    k = np.asarray(p.branch_coeffs, dtype=float)
    q_new = decay * q + k * gain * (strain - s.last_strain)
    stress = p.base * strain + float(q_new.sum())
    return ViscoState(tuple(q_new.tolist()), float(strain), s.time + dt), stress


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class CurveSamples:
    times: np.ndarray
    values: np.ndarray
    mode: Mode

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if t.shape != v.shape or t.ndim != 1:
            raise FitError("times and values must be 1-D and of equal length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] < 0):
            raise FitError("times must be non-negative and strictly increasing")
        if np.any(v <= 0):
            raise FitError("values must be positive")


def sample_curve(p: PronySeries, times) -> CurveSamples:
    times = np.asarray(times, dtype=float)
    return CurveSamples(times, evaluate(p, times), p.mode)


def _softplus(u):
    return np.logaddexp(0.0, u)


def _softplus_inv(y):
    y = np.maximum(y, 1e-12)
    return np.where(y > 30, y, np.log(np.expm1(np.minimum(y, 30))))


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def fit_prony(samples: CurveSamples, n_branches: int, max_iter: int = 200, ftol: float = 1e-8) -> PronySeries:
    """Least-squares Prony fit.

    Positivity is built in: the base and branch coefficients are
    softplus-parameterised and log-times are squashed into two decades
    beyond the sampled span on either side, so a branch the data cannot
    resolve stays finite. The problem is solved with damped Gauss-Newton. ``residual_rms`` on the result holds
    the RMS of the final residuals.
    """
    if n_branches < 1:
        raise FitError("n_branches must be >= 1")
    t, y = samples.times, samples.values
    n = t.size
    n_params = 2 * n_branches + 1
    if n <= n_params:
        raise FitError(f"{n} samples cannot determine {n_params} parameters")
    positive = t[t > 0]
    decades = math.log10(positive[-1] / positive[0]) if positive.size >= 2 else 0.0
    if decades < 2 and n < 50:
        raise FitError("samples must span two decades of time or contain at least 50 points")

    mode = samples.mode
    sign = 1.0 if mode is Mode.RELAXATION else -1.0
    spread = float(abs(y[0] - y[-1]))
    scale = float(np.max(np.abs(y)))
    if spread <= 1e-12 * scale and float(np.ptp(y)) <= 1e-12 * scale:
        # purely elastic data
        taus = _seed_taus(t, n_branches)
        return canonical(mode, float(np.mean(y)), [0.0] * n_branches, taus, residual_rms=float(np.std(y)))

    base0 = float(y[-1] if mode is Mode.RELAXATION else y[0])
    c0 = max(spread / n_branches, 1e-6 * scale)
    taus0 = _seed_taus(t, n_branches)
    lo, hi = math.log(positive[0]) - 2 * math.log(10), math.log(positive[-1]) + 2 * math.log(10)
    u0 = (np.log(taus0) - lo) / (hi - lo)
    x0 = np.concatenate([[_softplus_inv(base0)], np.full(n_branches, _softplus_inv(c0)), np.log(u0 / (1 - u0))])

    def unpack(x):
        return _softplus(x[0]), _softplus(x[1 : 1 + n_branches]), np.exp(lo + (hi - lo) * _sigmoid(x[1 + n_branches :]))

    def residuals(x):
        b, c, tau = unpack(x)
        e = np.exp(-t[:, None] / tau[None, :])
        if mode is Mode.RELAXATION:
            model = b + e @ c
        else:
            model = b + (1.0 - e) @ c
        return model - y

    def jacobian(x):
        b, c, tau = unpack(x)
        e = np.exp(-t[:, None] / tau[None, :])
        J = np.empty((n, n_params))
        J[:, 0] = _sigmoid(x[0])
        J[:, 1 : 1 + n_branches] = (e if mode is Mode.RELAXATION else 1.0 - e) * _sigmoid(x[1 : 1 + n_branches])
        # d/dlog(tau) of c*exp(-t/tau) is c*exp(-t/tau)*t/tau; creep flips sign
        sg = _sigmoid(x[1 + n_branches :])
        dlog = (hi - lo) * sg * (1 - sg)
        J[:, 1 + n_branches :] = sign * c * e * (t[:, None] / tau[None, :]) * dlog
        return J

    try:
        res = levenberg_marquardt(residuals, x0, jacobian, max_iter=max_iter, ftol=ftol)
    except ConvergenceError as exc:
        b, c, tau = unpack(exc.best.x)
        best = canonical(mode, b, c, tau, residual_rms=exc.residual)
        raise ConvergenceError(str(exc), best=best, residual=exc.residual) from None
    b, c, tau = unpack(res.x)
    rms = float(np.sqrt(np.mean(res.residuals**2)))
    return canonical(mode, float(b), c, tau, residual_rms=rms)


def _seed_taus(t, n_branches):
    positive = t[t > 0]
    lo, hi = float(positive[0]), float(positive[-1])
    frac = (np.arange(n_branches) + 0.5) / n_branches
    return lo * (hi / lo) ** frac


# ---------------------------------------------------------------------------
# persistence

CURVE_SCHEMA = "softprop:curve v1.0"


def read_curve_csv(path, mode) -> CurveSamples:
    from .io import read_csv_rows

    header, rows = read_csv_rows(path, expected_kind="curve")
    if header[:2] != ["t_s", "value"]:
        raise FitError(f"{path}: expected header 't_s,value', got {','.join(header)}")
    arr = np.asarray(rows, dtype=float).reshape(-1, 2)
    return CurveSamples(arr[:, 0], arr[:, 1], mode)


def write_curve_csv(path, samples: CurveSamples) -> None:
    from .io import write_csv

    write_csv(path, ["t_s", "value"], np.column_stack([samples.times, samples.values]), kind="curve")


def save_prony_json(path, p: PronySeries) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, json.dumps(p.to_dict(), indent=2) + "\n")


def load_prony_json(path) -> PronySeries:
    with open(path) as fh:
        return PronySeries.from_dict(json.load(fh))
