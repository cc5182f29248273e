"""Grasp formulas, friction estimation, relaxation-compensated slip prediction and controllers.

Finger contact forces come from a lumped viscoelastic finger: the normal
force is the hereditary response of a relaxation series (N/mm) to the squeeze
depth history, integrated with the exact piecewise-linear recurrence. Sensed
wrenches pass through a pluggable wrench source so that the same scenarios can
run on ideal, noisy or learned force estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import directed_hausdorff

from .errors import DomainError, SoftPropError
from .io import write_csv
from .viscoelastic import PAPER_RELAXATION, PronySeries, ViscoState, eval_relaxation_modulus, step_visco

GRAVITY = 9.81  # m/s^2
PHASES = ("pre-contact", "sliding", "lifted", "gripped", "slipping")
TIMELINE_HEADER = ["t_s", "Fg", "Fs", "Fg_prime", "mu_hat", "phase"]
MIN_SLIDING_FORCE_N = 0.5  # F_g below this is too noisy for F_s/F_g


class EstimationWindowError(SoftPropError, ValueError):
    """No usable sliding window for friction estimation."""


class ContactLostError(SoftPropError, RuntimeError):
    """Contour following lost contact; ``partial`` holds the trajectory so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------- formulas
def gripping_force(W1, W2, beta_deg: float = 0.0) -> float:
    """F_g = (F1_x + F2_x) cos(beta), each wrench in its own finger frame."""
    return float((np.asarray(W1)[0] + np.asarray(W2)[0]) * np.cos(np.radians(beta_deg)))


def shear_force(W1, W2) -> float:
    """F_s = F1_y - F2_y."""
    return float(np.asarray(W1)[1] - np.asarray(W2)[1])


def compensate_relaxation(Fg_t3: float, p: PronySeries, t, t3: float):
    """Gripping force after the fingers stop at ``t3``: F_g(t3) E_rel(t - t3) / E_rel(0)."""
    t = np.asarray(t, float)
    if np.any(t < t3):
        raise DomainError("compensation is defined for t >= t3 only")
    out = Fg_t3 * eval_relaxation_modulus(p, t - t3) / p.instantaneous
    return float(out) if np.ndim(out) == 0 else out


def predict_slip_time(Fg_t3: float, Fs: float, mu: float, p: PronySeries, t3: float = 0.0) -> Optional[float]:
    """First t >= t3 where F_s / F_g'(t) exceeds ``mu``; ``None`` if the grip never fails."""
    if Fg_t3 <= 0 or mu * Fg_t3 <= Fs:
        return float(t3)
    if mu * Fg_t3 * p.equilibrium / p.instantaneous >= Fs:
        return None
    g = lambda s: mu * Fg_t3 * eval_relaxation_modulus(p, s) / p.instantaneous - Fs
    hi = 1.0
    while g(hi) > 0:
        hi *= 2.0
    return float(t3 + brentq(g, 0.0, hi, xtol=1e-9))


def estimate_friction(Fg, Fs, sliding, min_force: float = MIN_SLIDING_FORCE_N) -> float:
    """Mean of F_s/F_g over sliding-phase samples with F_g above ``min_force``."""
    Fg, Fs, sliding = np.asarray(Fg, float), np.asarray(Fs, float), np.asarray(sliding, bool)
    keep = sliding & (Fg > min_force)
    if not keep.any():
        raise EstimationWindowError("no sliding samples with measurable gripping force")
    return float(np.mean(Fs[keep] / Fg[keep]))


# ------------------------------------------------------------ finger model
class ViscoFinger:
    """Normal contact force of one soft finger for a squeeze-depth history (mm)."""

    def __init__(self, p: PronySeries = PAPER_RELAXATION):
        self.p = p
        self.state = ViscoState.rest(p)

    def step(self, depth_mm: float, dt: float) -> float:
        self.state, f = step_visco(self.p, self.state, max(depth_mm, 0.0), dt)
        return max(f, 0.0)


@dataclass
class WrenchSource:
    """Sensed wrench = true wrench + i.i.d. Gaussian noise; ``dropouts`` lists tick indices with no estimate."""

    noise_N: float = 0.0
    seed: int = 0
    dropouts: Sequence[int] = ()

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self._drop = set(int(i) for i in self.dropouts)

    def __call__(self, tick: int, W):
        W = np.asarray(W, float)
        noise = self.rng.normal(0.0, self.noise_N, W.shape) if self.noise_N > 0 else 0.0
        return None if tick in self._drop else W + noise


def finger_wrenches(Fn: float, Fy: float):
    """Mirrored finger frames: both x axes point at the object, y up for finger 1, down for finger 2."""
    W1 = np.array([Fn, Fy / 2, 0, 0, 0, 0], float)
    W2 = np.array([Fn, -Fy / 2, 0, 0, 0, 0], float)
    return W1, W2


# ------------------------------------------------------------- lift scenario
@dataclass
class GraspScenario:
    mass_g: float = 306.0
    mu_true: float = 0.3
    beta_deg: float = 0.0
    close_speed_mm_per_s: float = 10.0
    lift_speed_mm_per_s: float = 5.0  # recorded only; the point mass rides with the fingers
    gap_mm: float = 1.0  # per-finger free travel before contact
    grip_target_N: float = 11.0  # the gripper stops closing once sensed F_g reaches this
    duration_s: float = 40.0
    rate_hz: float = 330.0
    noise_N: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mass_g < 0:
            raise DomainError("object mass must be non-negative")
        if self.mu_true < 0:
            raise DomainError("friction coefficient must be non-negative")
        if not (self.close_speed_mm_per_s > 0 and self.rate_hz > 0 and self.duration_s > 0):
            raise DomainError("speeds, rate and duration must be positive")

    @property
    def gravity_N(self) -> float:
        return self.mass_g * 1e-3 * GRAVITY

    @classmethod
    def from_dict(cls, d: dict) -> "GraspScenario":
        return cls(**d)


@dataclass
class GraspState:
    t: float
    W1: np.ndarray
    W2: np.ndarray
    Fg: float
    Fs: float
    mu_hat: float
    Fg_prime: float
    phase: str
    Fg_true: float = 0.0


@dataclass
class LiftResult:
    timeline: list
    t1: Optional[float]
    t2: Optional[float]
    t3: Optional[float]
    outcome: str  # "lifted", "slipped", "never lifted", "no contact"
    mu_hat: Optional[float]
    slip_time_sim: Optional[float]  # first step where the true grip fails
    slip_time_predicted: Optional[float]  # from sensed F_g(t3), F_s and mu_hat
    Fs_lifted: Optional[float] = None
    Fg_t3: Optional[float] = None

    def column(self, name):
        return np.array([getattr(s, name) for s in self.timeline])


def simulate_lift(sc: GraspScenario, p: PronySeries = PAPER_RELAXATION, source: Optional[Callable] = None) -> LiftResult:
    """Close the fingers while lifting until F_g reaches the target, then hold the width.

    The object is a point mass on the ground: while the fingers slide past it
    they carry the kinetic shear mu*F_g; it lifts once mu*F_g >= G and then
    the fingers carry exactly G, until the relaxing grip can no longer hold it.
    """
    source = source or WrenchSource(sc.noise_N, sc.seed)
    dt = 1.0 / sc.rate_hz
    n = int(round(sc.duration_s * sc.rate_hz)) + 1
    G, mu, cb = sc.gravity_N, sc.mu_true, np.cos(np.radians(sc.beta_deg))
    finger = ViscoFinger(p)
    phase, depth = "pre-contact", 0.0
    t1 = t2 = t3 = t_slip = None
    fg_t3 = None
    ratios, lifted_fs = [], []
    timeline, last = [], None
    for i in range(n):
        t = i * dt
        if t3 is None:
            depth = sc.close_speed_mm_per_s * t - sc.gap_mm
        fn = finger.step(depth, dt) if i else 0.0
        Fg_true = 2 * fn * cb
        if phase == "pre-contact" and depth >= 0:
            phase, t1 = "sliding", t
        if phase == "sliding" and mu * Fg_true >= G:
            phase, t2 = "lifted", t
        if phase in ("lifted", "gripped") and mu * Fg_true < G:
            phase, t_slip = "slipping", t
        if phase == "sliding":
            Fy = mu * Fg_true
        elif phase in ("lifted", "gripped"):
            Fy = G
        elif phase == "slipping":
            Fy = mu * Fg_true
        else:
            Fy = 0.0
        W1, W2 = finger_wrenches(fn, Fy)
        s1, s2 = source(2 * i, W1), source(2 * i + 1, W2)
        if s1 is None or s2 is None:
            s1, s2 = last if last is not None else (W1 * 0, W2 * 0)
        last = (s1, s2)
        Fg, Fs = gripping_force(s1, s2, sc.beta_deg), shear_force(s1, s2)
        if phase == "sliding" and Fg > MIN_SLIDING_FORCE_N:
            ratios.append(Fs / Fg)
        if phase == "lifted":
            lifted_fs.append(Fs)
        if t3 is None and phase != "pre-contact" and Fg >= sc.grip_target_N:
            t3, fg_t3 = t, Fg
            if phase == "lifted":
                phase = "gripped"
        mu_hat = float(np.mean(ratios)) if ratios else float("nan")
        Fg_prime = compensate_relaxation(fg_t3, p, t, t3) if t3 is not None else Fg
        timeline.append(GraspState(t, s1, s2, Fg, Fs, mu_hat, Fg_prime, phase, Fg_true))

    mu_hat = float(np.mean(ratios)) if ratios else None
    fs_lift = float(np.mean(lifted_fs)) if lifted_fs else None
    predicted = None
    if t3 is not None and mu_hat is not None and fs_lift is not None:
        predicted = predict_slip_time(fg_t3, fs_lift, mu_hat, p, t3)
    if t1 is None:
        outcome = "no contact"
    elif t2 is None:
        outcome = "never lifted"
    elif t_slip is not None:
        outcome = "slipped"
    else:
        outcome = "lifted"
    return LiftResult(timeline, t1, t2, t3, outcome, mu_hat, t_slip, predicted, fs_lift, fg_t3)


def write_timeline_csv(path, result: LiftResult) -> None:
    rows = [[s.t, s.Fg, s.Fs, s.Fg_prime, s.mu_hat, s.phase] for s in result.timeline]
    write_csv(path, TIMELINE_HEADER, rows, kind="grasp_timeline")


# ------------------------------------------------------ friction-cone control
@dataclass
class ConeCommand:
    delta_mm: float  # per-finger squeeze change this tick (positive closes)
    commanded_Fg: float
    alarm: bool


@dataclass
class FrictionConeController:
    """Proportional width control on the relative cone-margin error.

    The target ratio is ``mu_safe * margin``. Errors within ``deadband``
    (relative) leave the width alone; otherwise the squeeze changes by
    ``gain_mm`` per unit relative error, limited to ``step_mm`` per tick. A
    closing step is shortened so the predicted F_g never exceeds ``max_force_N``,
    and a grip already above the cap is opened.
    """

    mu_safe: float = 0.3
    margin: float = 0.8
    deadband: float = 0.02
    gain_mm: float = 0.05
    step_mm: float = 0.01
    max_force_N: float = 18.0
    stiffness_N_per_mm: float = PAPER_RELAXATION.instantaneous
    beta_deg: float = 0.0

    def __post_init__(self):
        if not (self.mu_safe > 0 and 0 < self.margin <= 1 and self.step_mm > 0 and self.max_force_N > 0):
            raise DomainError("invalid controller parameters")
        self._last_Fg = 0.0

    @property
    def target_ratio(self) -> float:
        return self.mu_safe * self.margin

    def update(self, estimate) -> ConeCommand:
        """``estimate`` is ``(F_g, F_s)`` or ``None`` when no wrench estimate is available."""
        if estimate is None:
            return ConeCommand(0.0, self._last_Fg, True)
        Fg, Fs = estimate
        self._last_Fg = Fg
        if Fg <= 0:
            err = 1.0
        else:
            err = abs(Fs) / Fg / self.target_ratio - 1.0
        delta = 0.0 if abs(err) <= self.deadband else float(np.clip(self.gain_mm * err, -self.step_mm, self.step_mm))
        per_mm = 2 * self.stiffness_N_per_mm * np.cos(np.radians(self.beta_deg))
        if Fg + per_mm * delta > self.max_force_N:  # never close past the cap; open if above it
            delta = max(-self.step_mm, min(delta, (self.max_force_N - Fg) / per_mm))
        return ConeCommand(delta, Fg + per_mm * delta, False)


@dataclass
class Disturbance:
    """Raised-cosine pull on the object along the shear axis."""

    start_s: float
    duration_s: float
    amplitude_N: float

    def __call__(self, t):
        u = (np.asarray(t, float) - self.start_s) / self.duration_s
        inside = (u >= 0) & (u <= 1)
        return np.where(inside, 0.5 * self.amplitude_N * (1 - np.cos(2 * np.pi * np.clip(u, 0, 1))), 0.0)


@dataclass
class ControlTrace:
    t: np.ndarray
    Fg: np.ndarray  # true
    Fs: np.ndarray  # true shear carried
    squeeze_mm: np.ndarray
    commanded_Fg: np.ndarray
    alarm: np.ndarray
    held: np.ndarray  # mu_true * F_g >= F_s

    @property
    def ratio(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.Fg > 0, self.Fs / self.Fg, np.inf)

    def inside_cone_fraction(self, mu_cone: float) -> float:
        return float(np.mean(self.ratio <= mu_cone))


def run_competitive_grasp(
    controller: FrictionConeController,
    gravity_N: float = 3.0,
    mu_true: float = 0.3,
    disturbances: Sequence[Disturbance] = (Disturbance(3.0, 2.0, 1.0), Disturbance(8.0, 1.0, 0.8)),
    duration_s: float = 15.0,
    rate_hz: float = 330.0,
    source: Optional[Callable] = None,
    p: PronySeries = PAPER_RELAXATION,
) -> ControlTrace:
    """Hold an object against scripted pulls; the controller reads one-tick-stale estimates.

    The grasp starts settled at the target ratio: the fingers squeeze to the
    depth whose relaxed force equals ``gravity_N / target_ratio``.
    """
    source = source or WrenchSource()
    dt = 1.0 / rate_hz
    n = int(round(duration_s * rate_hz)) + 1
    cb = np.cos(np.radians(controller.beta_deg))
    finger = ViscoFinger(p)
    depth = gravity_N / controller.target_ratio / (2 * cb * p.equilibrium)
    for _ in range(int(30 * rate_hz / 33)):  # pre-load, let the fast branches settle
        finger.step(depth, 10 * dt)
    out = {k: np.empty(n) for k in ("t", "Fg", "Fs", "sq", "cmd", "alarm", "held")}
    pending = None
    fn = finger.step(depth, dt)
    for i in range(n):
        t = i * dt
        Fg = 2 * fn * cb
        Fs = gravity_N + float(sum(d(t) for d in disturbances))
        W1, W2 = finger_wrenches(fn, Fs)
        s1, s2 = source(2 * i, W1), source(2 * i + 1, W2)
        est = None if s1 is None or s2 is None else (gripping_force(s1, s2, controller.beta_deg), shear_force(s1, s2))
        cmd = controller.update(pending)
        pending = est  # consumed next tick
        depth = max(depth + cmd.delta_mm, 0.0)
        for k, v in zip(out, (t, Fg, Fs, depth, cmd.commanded_Fg, cmd.alarm, mu_true * Fg >= Fs)):
            out[k][i] = v
        fn = finger.step(depth, dt)
    return ControlTrace(out["t"], out["Fg"], out["Fs"], out["sq"], out["cmd"], out["alarm"].astype(bool), out["held"].astype(bool))


# ------------------------------------------------------- contour following
def arc_contour(radius_mm: float = 50.0, sweep_deg: float = 90.0, center=(0.0, 0.0), n: int = 721):
    """Counter-clockwise arc; the disk interior lies to the left of travel."""
    a = np.radians(np.linspace(-90.0, -90.0 + sweep_deg, n))
    return np.column_stack([center[0] + radius_mm * np.cos(a), center[1] + radius_mm * np.sin(a)])


def wall_contour(length_mm: float = 80.0, n: int = 2):
    """Straight wall along +x; the object occupies y > 0."""
    return np.column_stack([np.linspace(0.0, length_mm, n), np.zeros(n)])


@dataclass
class ContourWorld:
    contour: np.ndarray  # (n, 2) mm, object on the left of travel
    force_band: tuple = (3.0, 4.0)
    slide_step_mm: float = 0.1
    normal_gain_mm_per_N: float = 0.3
    max_normal_step_mm: float = 0.1
    contact_threshold_N: float = 0.2
    max_lost_steps: int = 30
    rate_hz: float = 330.0
    noise_N: float = 0.02
    seed: int = 0

    def __post_init__(self):
        self.contour = np.asarray(self.contour, float)
        lo, hi = self.force_band
        if not hi > lo > 0:
            raise DomainError("force band needs F_hi > F_lo > 0")
        if len(self.contour) < 2:
            raise DomainError("contour needs at least two points")
        seg = np.diff(self.contour, axis=0)
        self._seg = seg
        self._len = np.linalg.norm(seg, axis=1)
        if np.any(self._len <= 0):
            raise DomainError("contour has repeated points")
        self._cum = np.concatenate([[0.0], np.cumsum(self._len)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def closest(self, p):
        """Closest contour point, its arc position, and the signed penetration (positive inside)."""
        a = self.contour[:-1]
        u = np.clip(np.einsum("ij,ij->i", p - a, self._seg) / self._len**2, 0.0, 1.0)
        c = a + u[:, None] * self._seg
        d = np.linalg.norm(p - c, axis=1)
        j = int(np.argmin(d))
        cross = self._seg[j, 0] * (p[1] - a[j, 1]) - self._seg[j, 1] * (p[0] - a[j, 0])
        return c[j], self._cum[j] + u[j] * self._len[j], float(d[j] if cross > 0 else -d[j])

    def outward_normal(self, p, c, pen):
        v = c - p if pen > 0 else p - c
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            return v / nv
        j = int(np.argmin(np.linalg.norm(self.contour[:-1] - c, axis=1)))
        s = self._seg[min(j, len(self._seg) - 1)]
        return np.array([s[1], -s[0]]) / np.linalg.norm(s)

    def sample(self, s0: float, s1: float, step: float = 0.1):
        s = np.arange(s0, s1 + step / 2, step)
        j = np.clip(np.searchsorted(self._cum, s, side="right") - 1, 0, len(self._seg) - 1)
        u = (s - self._cum[j]) / self._len[j]
        return self.contour[j] + u[:, None] * self._seg[j]


@dataclass
class Reconstruction:
    points: np.ndarray  # (m, 2) reconstructed contour, mm
    t: np.ndarray
    base: np.ndarray  # (m, 2) sensor base positions, mm
    force: np.ndarray  # sensed |F_xy|, N
    in_contact: np.ndarray
    s_range: tuple = (0.0, 0.0)
    aborted: bool = False

    def band_fraction(self, band) -> float:
        f = self.force[self.in_contact]
        return float(np.mean((f >= band[0]) & (f <= band[1]))) if len(f) else 0.0


def hausdorff(a, b) -> float:
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))


def reconstruction_error(world: ContourWorld, rec: Reconstruction) -> float:
    """Hausdorff distance between the reconstruction and the traversed stretch of the contour."""
    truth = world.sample(*rec.s_range)
    return hausdorff(rec.points[rec.in_contact], truth)


def contour_follow(
    world: ContourWorld,
    source: Optional[Callable] = None,
    p: PronySeries = PAPER_RELAXATION,
    start_s_mm: float = 2.0,
    end_margin_mm: float = 2.0,
    max_steps: int = 100000,
) -> Reconstruction:
    """Slide along the contour keeping |F_xy| in the force band.

    Each tick moves ``slide_step_mm`` along the sensed tangent and corrects the
    normal offset proportionally to the force error about the band centre.
    The surface point is the sensor base displaced along the sensed normal by
    the deflection |F| / E_rel(0).
    """
    source = source or WrenchSource(world.noise_N, world.seed)
    dt = 1.0 / world.rate_hz
    finger = ViscoFinger(p)
    mid = 0.5 * sum(world.force_band)
    c0 = world.sample(start_s_mm, start_s_mm)[0]
    seg = world.sample(start_s_mm, start_s_mm + 0.2)
    tan = seg[-1] - seg[0]
    tan /= np.linalg.norm(tan)
    n_out = np.array([tan[1], -tan[0]])
    base = c0 - n_out * mid / p.equilibrium  # initial contact established at the band centre
    for _ in range(60):  # settle the indentation before sliding
        finger.step(mid / p.equilibrium, 0.1)
    rec_pts, ts, bases, forces, contact = [], [], [], [], []
    lost, s_first, s_last, n_hat = 0, None, start_s_mm, n_out
    aborted = False
    for i in range(max_steps):
        c, s, pen = world.closest(base)
        f = finger.step(pen, dt)
        n_true = world.outward_normal(base, c, pen)
        W = np.array([*(f * n_true), 0.0, 0.0, 0.0, 0.0])
        sensed = source(i, W)
        F = sensed[:2] if sensed is not None else np.zeros(2)
        fm = float(np.linalg.norm(F))
        touching = fm > world.contact_threshold_N
        ts.append(i * dt)
        bases.append(base.copy())
        forces.append(fm)
        contact.append(touching)
        if touching:
            lost = 0
            n_hat = F / fm
            rec_pts.append(base + n_hat * fm / p.instantaneous)
            if s_first is None:
                s_first = s
            s_last = s
            tan = np.array([-n_hat[1], n_hat[0]])
            dn = float(np.clip(world.normal_gain_mm_per_N * (fm - mid), -world.max_normal_step_mm, world.max_normal_step_mm))
            base = base + world.slide_step_mm * tan + dn * n_hat
        else:
            rec_pts.append(base.copy())
            lost += 1
            if lost > world.max_lost_steps:
                aborted = True
                break
            base = base - world.max_normal_step_mm * n_hat
        if s >= world.length - end_margin_mm:
            break
    rec = Reconstruction(
        np.array(rec_pts), np.array(ts), np.array(bases), np.array(forces), np.array(contact, bool),
        (float(s_first if s_first is not None else start_s_mm), float(s_last)), aborted,
    )
    if aborted:
        raise ContactLostError(f"contact lost for more than {world.max_lost_steps} steps", partial=rec)
    return rec


def write_reconstruction_csv(path, rec: Reconstruction, trace_path=None) -> None:
    pts = rec.points[rec.in_contact]
    write_csv(path, ["x_mm", "y_mm"], pts.tolist(), kind="reconstruction")
    if trace_path is not None:
        rows = [[t, b[0], b[1], f, bool(c)] for t, b, f, c in zip(rec.t, rec.base, rec.force, rec.in_contact)]
        write_csv(trace_path, ["t_s", "x_mm", "y_mm", "F_N", "in_contact"], rows, kind="force_trace")
