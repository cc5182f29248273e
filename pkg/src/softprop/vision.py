"""Synthetic in-finger camera and marker tracking.

The camera sits in the base looking up (+z) at a square fiducial marker on
the underside of the first-layer plate. Corners are projected through a
pinhole model with Gaussian pixel noise; the pose is recovered by planar PnP
(homography initialisation, then damped Gauss-Newton on the reprojection
error). Rotations are reported as intrinsic X-Y-Z Euler angles in degrees.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import EstimationError, TimingError, VisibilityError

# pixel noise per resolution, tuned so pose jitter lands near the tracking
# stability table (positional ~0.01-0.02 mm, angular ~0.1-0.5 deg)
PIXEL_NOISE = {(640, 360): 0.06, (1280, 720): 0.07, (1920, 1080): 0.08}
RESOLUTIONS = tuple(PIXEL_NOISE)


@dataclass(frozen=True)
class CameraModel:
    fx: float = 290.0
    fy: float = 290.0
    cx: float = 320.0
    cy: float = 180.0
    width: int = 640
    height: int = 360
    fps: float = 330.0
    pixel_noise_sigma: float = PIXEL_NOISE[(640, 360)]
    # camera centre in the finger base frame (mm); optical axis along +z
    position_mm: tuple = (0.0, 0.0, -18.0)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.width > 0 and self.height > 0 and self.fps > 0):
            raise ValueError("camera intrinsics must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.pixel_noise_sigma < 0:
            raise ValueError("pixel_noise_sigma must be >= 0")

    @classmethod
    def for_resolution(cls, width=640, height=360, noise=None, **kw) -> "CameraModel":
        """Intrinsics scaled from the 640x360 default (fx = fy = 290 px)."""
        f = 290.0 * width / 640.0
        sigma = PIXEL_NOISE.get((width, height), PIXEL_NOISE[(640, 360)]) if noise is None else noise
        return cls(fx=f, fy=f, cx=width / 2, cy=height / 2, width=width, height=height, pixel_noise_sigma=sigma, **kw)

    @property
    def K(self):
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])


@dataclass(frozen=True)
class MarkerSpec:
    side: float = 16.0

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("marker side must be positive")

    @property
    def corners(self):
        """Corner coordinates in the marker frame, fixed counter-clockwise winding."""
        h = self.side / 2
        return np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]])


def canonical_angles(deg):
    """Wrap angles into (-180, 180]."""
    a = np.mod(np.asarray(deg, dtype=float) + 180.0, 360.0) - 180.0
    return np.where(a <= -180.0, a + 360.0, a)


def rotation_to_euler_deg(R):
    return canonical_angles(Rotation.from_matrix(R).as_euler("XYZ", degrees=True))


def euler_deg_to_rotation(angles):
    return Rotation.from_euler("XYZ", angles, degrees=True).as_matrix()


def _hat(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def project_points(cam: CameraModel, P):
    """Pinhole projection of camera-frame points ``P`` (n, 3)."""
    return np.column_stack([cam.fx * P[:, 0] / P[:, 2] + cam.cx, cam.fy * P[:, 1] / P[:, 2] + cam.cy])


def project_marker(cam: CameraModel, spec: MarkerSpec, R, t, rng=None):
    """Pixel coordinates (4, 2) of the marker corners for pose ``(R, t)`` in the camera frame."""
    P = spec.corners @ np.asarray(R).T + np.asarray(t)
    if np.any(P[:, 2] <= 0):
        raise VisibilityError("marker behind the camera")
    uv = project_points(cam, P)
    if np.any(uv < 0) or np.any(uv[:, 0] > cam.width) or np.any(uv[:, 1] > cam.height):
        raise VisibilityError("marker outside the image")
    if cam.pixel_noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        uv = uv + rng.normal(0.0, cam.pixel_noise_sigma, uv.shape)
    return uv


def _homography(src, dst):
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, s, Vt = np.linalg.svd(np.asarray(rows))
    return Vt[-1].reshape(3, 3), s


def _pose_from_homography(cam, spec, corners):
    norm = (np.asarray(corners) - [cam.cx, cam.cy]) / [cam.fx, cam.fy]
    H, _ = _homography(spec.corners[:, :2], norm)
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 0.5 * (np.linalg.norm(h1) + np.linalg.norm(h2))
    if lam <= 0:
        raise EstimationError("degenerate homography")
    if h3[2] / lam < 0:
        lam = -lam
    r1, r2 = h1 / lam, h2 / lam
    M = np.column_stack([r1, r2, np.cross(r1, r2)])
    U, _, Vt = np.linalg.svd(M)
    R = U @ np.diag([1, 1, np.linalg.det(U @ Vt)]) @ Vt
    return R, h3 / lam


def _rotvec_to_matrix(w):
    th = float(np.sqrt(w @ w))
    K = _hat(w)
    if th < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + (np.sin(th) / th) * K + ((1 - np.cos(th)) / th**2) * K @ K


def _refine(cam, spec, corners, R, t, max_iter=50):
    """Damped Gauss-Newton on reprojection error with multiplicative rotation updates."""
    X = spec.corners
    obs = np.asarray(corners, dtype=float).ravel()
    f = np.array([cam.fx, cam.fy])
    c = np.array([cam.cx, cam.cy])
    lam = 1e-6

    def residual(R_, t_):
        P = X @ R_.T + t_
        if np.any(P[:, 2] <= 0):
            return None, P
        return (f * P[:, :2] / P[:, 2:3] + c).ravel() - obs, P

    r, P = residual(R, t)
    if r is None:
        return R, t, np.inf
    cost = float(r @ r)
    J = np.zeros((4, 2, 6))
    for _ in range(max_iter):
        # d(uv)/dP per corner, then dP/dw = -[P - t]x for a left-multiplied rotation
        iz = 1.0 / P[:, 2]
        duv = np.zeros((4, 2, 3))
        duv[:, 0, 0] = f[0] * iz
        duv[:, 1, 1] = f[1] * iz
        duv[:, :, 2] = -f * P[:, :2] * iz[:, None] ** 2
        Q = P - t
        dPdw = np.zeros((4, 3, 3))
        dPdw[:, 0, 1], dPdw[:, 0, 2] = Q[:, 2], -Q[:, 1]
        dPdw[:, 1, 0], dPdw[:, 1, 2] = -Q[:, 2], Q[:, 0]
        dPdw[:, 2, 0], dPdw[:, 2, 1] = Q[:, 1], -Q[:, 0]
        J[:, :, :3] = duv @ dPdw
        J[:, :, 3:] = duv
        Jm = J.reshape(8, 6)
        A, g = Jm.T @ Jm, Jm.T @ r
        dA = np.diag(np.diag(A) + 1e-12)
        improved = False
        while lam < 1e10:
            step = np.linalg.solve(A + lam * dA, -g)
            Rn = _rotvec_to_matrix(step[:3]) @ R
            tn = t + step[3:]
            rn, Pn = residual(Rn, tn)
            if rn is not None and float(rn @ rn) < cost:
                improved = True
                break
            lam *= 10
        if not improved:
            break
        new_cost = float(rn @ rn)
        done = cost - new_cost <= 1e-12 * cost or np.max(np.abs(step)) < 1e-9
        R, t, r, P, cost = Rn, tn, rn, Pn, new_cost
        lam = max(lam / 10, 1e-12)
        if done or cost < 1e-26:
            break
    return R, t, float(np.sqrt(cost / 8))


def estimate_pose_pnp(cam: CameraModel, spec: MarkerSpec, corners, prev=None, max_rms_px: float = 5.0):
    """Recover ``(R, t, rms_px)`` of the marker in the camera frame.

    Both planar-ambiguity branches are refined; the lower reprojection error
    wins, near-ties go to the branch closer to ``prev`` (an ``(R, t)`` pair).
    """
    c = np.asarray(corners, dtype=float)
    if c.shape != (4, 2) or not np.all(np.isfinite(c)):
        raise EstimationError("need four finite corner points")
    # collinearity: every corner triangle must have non-trivial area
    span = np.max(np.ptp(c, axis=0))
    for i in range(4):
        a, b, d = c[i], c[(i + 1) % 4], c[(i + 2) % 4]
        area = 0.5 * abs((b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]))
        if area <= 1e-6 * span**2:
            raise EstimationError("degenerate (collinear) corners")
    R0, t0 = _pose_from_homography(cam, spec, c)
    cands = [_refine(cam, spec, c, R0, t0)]
    # mirror the tilt about the viewing ray for the second branch
    v = t0 / np.linalg.norm(t0)
    flip = _rotvec_to_matrix(np.pi * v) @ R0 @ np.diag([-1.0, -1.0, 1.0])
    cands.append(_refine(cam, spec, c, flip, t0))
    cands.sort(key=lambda x: x[2])
    best = cands[0]
    if prev is not None and cands[1][2] - best[2] <= 1e-3 + 0.05 * best[2]:
        def dist(cd):
            return np.linalg.norm(Rotation.from_matrix(cd[0] @ prev[0].T).as_rotvec()) + 1e-3 * np.linalg.norm(cd[1] - prev[1])

        best = min(cands, key=dist)
    if not np.isfinite(best[2]) or best[2] > max_rms_px:
        raise EstimationError(f"pose estimate did not converge (reprojection rms {best[2]:.3g} px)")
    return best


@dataclass
class MarkerPose:
    """6D pose vector relative to the initial pose: (Dx, Dy, Dz mm, Drx, Dry, Drz deg)."""

    D: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.D, dtype=float).copy()
        d[3:] = canonical_angles(d[3:])
        self.D = d

    @classmethod
    def relative(cls, R, t, R0, t0) -> "MarkerPose":
        return cls(np.concatenate([np.asarray(t) - np.asarray(t0), rotation_to_euler_deg(np.asarray(R) @ np.asarray(R0).T)]))


@dataclass
class PoseTracker:
    """Per-session tracker: captures the initial pose once and tie-breaks on the previous frame.

    Each frame is first refined from the previous pose; the full two-branch
    solve runs only when that warm start ends above ``warm_gate_px``.
    """

    cam: CameraModel
    spec: MarkerSpec = field(default_factory=MarkerSpec)
    p0: Optional[tuple] = None
    prev: Optional[tuple] = None
    warm_gate_px: float = 0.5

    def update(self, corners):
        R = t = None
        if self.prev is not None and self.warm_gate_px > 0:
            R, t, rms = _refine(self.cam, self.spec, np.asarray(corners, dtype=float), *self.prev)
            if not rms <= self.warm_gate_px:
                R = None
        if R is None:
            R, t, rms = estimate_pose_pnp(self.cam, self.spec, corners, self.prev)
        if self.p0 is None:
            self.p0 = (R, t)
        self.prev = (R, t)
        return MarkerPose.relative(R, t, *self.p0), rms


def marker_transform(cam: CameraModel, R_marker, c_marker):
    """Camera-frame pose of a marker whose centre sits at ``c_marker`` (base frame)."""
    return np.asarray(R_marker), np.asarray(c_marker, dtype=float) - np.asarray(cam.position_mm, dtype=float)


# ---------------------------------------------------------------------------
# motion features


@dataclass
class MotionFeatures:
    t: np.ndarray
    D: np.ndarray  # (n, 6)
    D_dot: np.ndarray  # (n, 6) per second
    D_ddot: np.ndarray  # (n, 6) per second^2
    delta_t: float
    window: int  # frames per differencing window
    warmup: np.ndarray  # True where features are zero-filled


def _wrapped_diff(a, b):
    d = a - b
    d[..., 3:] = canonical_angles(d[..., 3:])
    return d


def compute_motion_features(times, poses, delta_t: float = 0.015) -> MotionFeatures:
    """Causal backward differences over a ``delta_t`` window.

    The window is ``round(delta_t * fps)`` frames (5 frames at 330 fps) and the
    derivative divides by the realised window length. The first window
    (two windows for acceleration) is zero-filled and flagged as warm-up.
    """
    t = np.asarray(times, dtype=float)
    D = np.asarray(poses, dtype=float).reshape(len(t), 6)
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    n = len(t)
    if n >= 2:
        dts = np.diff(t)
        period = float(np.median(dts))
        if period <= 0 or np.max(np.abs(dts - period)) > 1e-6 * max(period, 1e-12) + 1e-9:
            raise TimingError("timestamps are not uniformly spaced")
        w = int(round(delta_t / period))
        if w < 1 or abs(w * period - delta_t) > 0.1 * period:
            raise TimingError("delta_t is not a multiple of the frame period")
    else:
        period, w = delta_t, 1
    h = w * period
    D_dot = np.zeros_like(D)
    D_ddot = np.zeros_like(D)
    if n > w:
        D_dot[w:] = _wrapped_diff(D[w:].copy(), D[:-w]) / h
    if n > 2 * w:
        D_ddot[2 * w :] = (D_dot[2 * w :] - D_dot[w:-w]) / h
    warm = np.zeros(n, dtype=bool)
    warm[: min(n, 2 * w)] = True
    return MotionFeatures(t, D, D_dot, D_ddot, h, w, warm)


class StreamingFeatures:
    """Frame-by-frame version of :func:`compute_motion_features` for a live camera stream."""

    def __init__(self, window: int = 5, period: float = 1 / 330.0):
        if window < 1 or not period > 0:
            raise ValueError("window and period must be positive")
        self.w, self.h = int(window), window * period
        self._D = deque(maxlen=self.w + 1)
        self._Dd = deque(maxlen=self.w + 1)
        self.n = 0

    def push(self, D):
        """Return the 18-vector (D, D_dot, D_ddot); derivatives are zero during warm-up."""
        D = np.asarray(D, dtype=float)
        self.n += 1
        self._D.append(D)
        Dd = _wrapped_diff(D.copy(), self._D[0]) / self.h if len(self._D) > self.w else np.zeros(6)
        self._Dd.append(Dd)
        Ddd = (Dd - self._Dd[0]) / self.h if self.n > 2 * self.w else np.zeros(6)
        return np.concatenate([D, Dd, Ddd])


POSE_COLUMNS = ["t_s", "Dx", "Dy", "Dz", "Drx", "Dry", "Drz", "ok_flag"]


def write_pose_csv(path, times, poses, ok):
    from .io import write_csv

    rows = [[t, *p, int(o)] for t, p, o in zip(times, poses, ok)]
    write_csv(path, POSE_COLUMNS, rows, kind="pose")


def read_pose_csv(path):
    from .io import read_csv_array

    header, arr = read_csv_array(path, expected_kind="pose")
    if header != POSE_COLUMNS:
        raise ValueError(f"{path}: unexpected pose header {header}")
    return arr[:, 0], arr[:, 1:7], arr[:, 7].astype(bool)
