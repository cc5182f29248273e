import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softprop.errors import EstimationError, TimingError, VisibilityError
from softprop.vision import (
    RESOLUTIONS,
    CameraModel,
    MarkerPose,
    MarkerSpec,
    PoseTracker,
    StreamingFeatures,
    compute_motion_features,
    estimate_pose_pnp,
    euler_deg_to_rotation,
    project_marker,
    read_pose_csv,
    rotation_to_euler_deg,
    write_pose_csv,
)

SPEC = MarkerSpec()
EXACT = CameraModel(pixel_noise_sigma=0.0)
# jitter bounds: three times the 640x360 row of the fluctuation table
TABLE_640_MM = np.array([0.014, 0.017, 0.022])
TABLE_640_DEG = np.array([0.573, 0.514, 0.080])


def test_fronto_parallel_corners_are_symmetric():
    uv = project_marker(EXACT, SPEC, np.eye(3), [0.0, 0.0, 45.0])
    np.testing.assert_allclose(uv.mean(axis=0), [EXACT.cx, EXACT.cy], atol=1e-12)
    np.testing.assert_allclose(uv[0] + uv[2], 2 * np.array([EXACT.cx, EXACT.cy]), atol=1e-12)


def test_projection_matches_scalar_pinhole():
    R = euler_deg_to_rotation([10.0, -5.0, 30.0])
    t = np.array([2.0, -3.0, 45.0])
    uv = project_marker(EXACT, SPEC, R, t)
    for corner, (u, v) in zip(SPEC.corners, uv):
        x, y, z = R @ corner + t
        assert u == pytest.approx(290.0 * x / z + 320.0, abs=1e-9)
        assert v == pytest.approx(290.0 * y / z + 180.0, abs=1e-9)


def test_visibility_errors():
    with pytest.raises(VisibilityError):
        project_marker(EXACT, SPEC, np.eye(3), [0.0, 0.0, -5.0])
    with pytest.raises(VisibilityError):
        project_marker(EXACT, SPEC, np.eye(3), [200.0, 0.0, 45.0])


def test_collinear_corners_rejected():
    with pytest.raises(EstimationError):
        estimate_pose_pnp(EXACT, SPEC, [[0, 0], [10, 0], [20, 0], [30, 0]])


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel(fx=-1.0)
    with pytest.raises(ValueError):
        CameraModel(cx=700.0)


def random_pose(rng):
    R = euler_deg_to_rotation(rng.uniform([-25, -25, -180], [25, 25, 180]))
    t = rng.uniform([-6, -6, 35], [6, 6, 60])
    return R, t


def test_noiseless_round_trip_1000_poses():
    rng = np.random.default_rng(0)
    worst_t = worst_r = 0.0
    for _ in range(1000):
        R, t = random_pose(rng)
        Re, te, _ = estimate_pose_pnp(EXACT, SPEC, project_marker(EXACT, SPEC, R, t))
        worst_t = max(worst_t, np.abs(te - t).max())
        worst_r = max(worst_r, np.abs(rotation_to_euler_deg(Re @ R.T)).max())
    assert worst_t < 1e-6
    assert worst_r < 1e-6


def jitter(width, height, frames=1000, seed=0):
    cam = CameraModel.for_resolution(width, height)
    rng = np.random.default_rng(seed)
    tracker = PoseTracker(cam, SPEC)
    t = np.array([0.0, 0.0, 45.0])
    D = np.array([tracker.update(project_marker(cam, SPEC, np.eye(3), t, rng))[0].D for _ in range(frames)])
    return D.std(axis=0)


def test_jitter_is_on_the_order_of_the_table():
    s = jitter(640, 360)
    assert np.all(s[:3] <= 3 * TABLE_640_MM)
    assert np.all(s[3:] <= 3 * TABLE_640_DEG)


def test_jitter_decreases_with_resolution():
    s = [jitter(w, h) for w, h in RESOLUTIONS]
    pos = [x[:3].mean() for x in s]
    ang = [x[3:].mean() for x in s]
    assert pos[0] > pos[1] > pos[2]
    assert ang[0] > ang[1] > ang[2]


def test_noisy_tracking_never_fails():
    cam = CameraModel.for_resolution(640, 360)
    rng = np.random.default_rng(1)
    tracker = PoseTracker(cam, SPEC)
    for k in range(0, 8000, 8):
        # a slow wobble keeps the pose changing frame to frame
        R = euler_deg_to_rotation([8 * np.sin(k / 300), 6 * np.cos(k / 410), 3 * np.sin(k / 500)])
        t = np.array([3 * np.sin(k / 700), 2 * np.cos(k / 900), 45 - 4 * np.sin(k / 1000)])
        tracker.update(project_marker(cam, SPEC, R, t, rng))


def test_full_turn_gives_identical_pose():
    a = MarkerPose(np.array([1.0, 2.0, 3.0, 10.0, -20.0, 170.0]))
    b = MarkerPose(np.array([1.0, 2.0, 3.0, 370.0, -380.0, -190.0]))
    np.testing.assert_allclose(a.D, b.D, atol=1e-12)
    assert MarkerPose(np.array([0, 0, 0, -180.0, 0, 0])).D[3] == 180.0


def test_pose_csv_round_trip(tmp_path):
    t = np.arange(5) / 330.0
    P = np.random.default_rng(0).normal(size=(5, 6))
    ok = np.array([1, 1, 0, 1, 1], bool)
    write_pose_csv(tmp_path / "p.csv", t, P, ok)
    t2, P2, ok2 = read_pose_csv(tmp_path / "p.csv")
    np.testing.assert_allclose(t2, t, rtol=1e-15)
    np.testing.assert_allclose(P2, P, rtol=1e-15)
    assert np.array_equal(ok2, ok)


# -- motion features ------------------------------------------------------------------

T = np.arange(200) / 330.0


def test_constant_series_has_zero_rates():
    mf = compute_motion_features(T, np.tile([1.0, 2, 3, 4, 5, 6], (200, 1)))
    assert np.all(mf.D_dot == 0) and np.all(mf.D_ddot == 0)
    assert mf.window == 5
    assert mf.warmup[:10].all() and not mf.warmup[10:].any()


def test_linear_ramp_rate_is_exact():
    D = np.zeros((200, 6))
    D[:, 0] = 2.0 * T
    mf = compute_motion_features(T, D)
    np.testing.assert_allclose(mf.D_dot[5:, 0], 2.0, rtol=1e-9)
    assert np.all(mf.D_dot[:5] == 0)


def test_quadratic_acceleration():
    D = np.zeros((200, 6))
    D[:, 0] = T**2
    mf = compute_motion_features(T, D)
    # backward differences of a quadratic are exact up to rounding
    np.testing.assert_allclose(mf.D_ddot[10:, 0], 2.0, rtol=1e-6)


def test_non_uniform_timestamps_rejected():
    t = T.copy()
    t[50] += 1e-4
    with pytest.raises(TimingError):
        compute_motion_features(t, np.zeros((200, 6)))
    with pytest.raises(TimingError):
        compute_motion_features(T, np.zeros((200, 6)), delta_t=0.0137)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_streaming_matches_batch(seed):
    D = np.random.default_rng(seed).normal(size=(40, 6))
    mf = compute_motion_features(T[:40], D)
    sf = StreamingFeatures(window=5, period=1 / 330.0)
    rows = np.array([sf.push(d) for d in D])
    np.testing.assert_allclose(rows, np.hstack([mf.D, mf.D_dot, mf.D_ddot]), rtol=1e-12, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-25, 25), min_size=2, max_size=2),
    st.floats(-180, 180),
    st.lists(st.floats(-6, 6), min_size=2, max_size=2),
    st.floats(35, 60),
)
def test_round_trip_property(tilt, yaw, xy, z):
    R = euler_deg_to_rotation([tilt[0], tilt[1], yaw])
    t = np.array([xy[0], xy[1], z])
    Re, te, _ = estimate_pose_pnp(EXACT, SPEC, project_marker(EXACT, SPEC, R, t))
    assert np.abs(te - t).max() < 1e-6
