import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from softprop.errors import DomainError
from softprop.grasp import (
    ContactLostError,
    ContourWorld,
    Disturbance,
    EstimationWindowError,
    FrictionConeController,
    GraspScenario,
    WrenchSource,
    arc_contour,
    compensate_relaxation,
    contour_follow,
    estimate_friction,
    gripping_force,
    predict_slip_time,
    reconstruction_error,
    run_competitive_grasp,
    shear_force,
    simulate_lift,
    wall_contour,
    write_timeline_csv,
)
from softprop.io import read_csv_rows
from softprop.viscoelastic import PAPER_RELAXATION, eval_relaxation_modulus

P = PAPER_RELAXATION


def W(fx=0.0, fy=0.0):
    return np.array([fx, fy, 0, 0, 0, 0], float)


# ------------------------------------------------------------------ formulas
def test_gripping_force_examples():
    assert gripping_force(W(5), W(5)) == 10.0
    assert gripping_force(W(5), W(5), 60.0) == pytest.approx(10.0 * math.cos(math.pi / 3), abs=1e-12)
    assert gripping_force(W(0, 3), W(0, -1)) == 0.0


def test_shear_force_examples():
    assert shear_force(W(0, 2), W(0, -2)) == 4.0
    assert shear_force(W(1, 1.5), W(2, 1.5)) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=4, max_size=4), st.floats(0, 89))
def test_formulas_match_scalar_algebra(f, beta):
    a, b = W(f[0], f[1]), W(f[2], f[3])
    assert gripping_force(a, b, beta) == pytest.approx((f[0] + f[2]) * math.cos(math.radians(beta)), abs=1e-9)
    assert shear_force(a, b) == pytest.approx(f[1] - f[3], abs=1e-12)


def test_compensation_limits():
    assert compensate_relaxation(10.0, P, 2.0, 2.0) == pytest.approx(10.0, rel=1e-12)
    ke, ks = 1.03, 1.03 + 0.15 + 0.13 + 0.11
    assert compensate_relaxation(10.0, P, 1e6, 0.0) == pytest.approx(10.0 * ke / ks, rel=1e-9)
    with pytest.raises(DomainError):
        compensate_relaxation(10.0, P, 1.0, 2.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 30), st.lists(st.floats(0, 500), min_size=2, max_size=20))
def test_compensation_nonincreasing(fg, ts):
    t = np.sort(np.asarray(ts))
    assert np.all(np.diff(compensate_relaxation(fg, P, t, 0.0)) <= 1e-12)


def test_slip_time_is_the_ratio_root():
    fg, fs, mu, t3 = 11.0, 3.0, 0.3, 1.5
    ts = predict_slip_time(fg, fs, mu, P, t3)
    # independent oracle: bracket the ratio crossing on a dense grid, then bisect
    ratio = lambda t: fs / (fg * (1.03 + 0.15 * np.exp(-t / 1.0) + 0.13 * np.exp(-t / 12.1) + 0.11 * np.exp(-t / 109.5)) / 1.42)
    grid = np.linspace(0, 200, 200001)
    j = int(np.argmax(ratio(grid) > mu))
    root = brentq(lambda s: ratio(s) - mu, grid[j - 1], grid[j])
    assert ts == pytest.approx(t3 + root, abs=1e-6)


def test_slip_time_edge_cases():
    assert predict_slip_time(11.0, 2.0, 0.3, P) is None  # relaxed grip still holds
    assert predict_slip_time(11.0, 4.0, 0.3, P, 2.0) == 2.0  # fails immediately


# --------------------------------------------------------- friction estimate
def test_estimate_friction_window():
    fg = np.array([0.1, 2.0, 4.0, 6.0])
    fs = np.array([5.0, 0.6, 1.2, 1.8])
    assert estimate_friction(fg, fs, [True, True, True, False]) == pytest.approx(0.3)
    with pytest.raises(EstimationWindowError):
        estimate_friction(fg, fs, [False] * 4)
    with pytest.raises(EstimationWindowError):
        estimate_friction(fg, fs, [True, False, False, False])


def short(**kw):
    return GraspScenario(duration_s=kw.pop("duration_s", 4.0), **kw)


def test_lift_mu_03_with_noise():
    r = simulate_lift(short(noise_N=0.02))
    assert 0.27 <= r.mu_hat <= 0.33
    assert r.t1 < r.t2 < r.t3


def test_lift_frictionless_and_high_friction():
    r0 = simulate_lift(short(mu_true=0.0))
    assert abs(r0.mu_hat) < 1e-9 and r0.outcome == "never lifted"
    r6 = simulate_lift(short(mu_true=0.6))
    assert r6.mu_hat == pytest.approx(0.6, rel=0.1)
    assert r6.t2 < simulate_lift(short()).t2


def test_liftoff_time_matches_cone_inequality():
    sc = short(noise_N=0.0)
    r = simulate_lift(sc)
    fg = r.column("Fg_true")
    t = r.column("t")
    first = t[np.argmax(sc.mu_true * fg >= sc.gravity_N)]
    assert r.t2 == first


def test_weightless_object_lifts_at_contact():
    r = simulate_lift(short(mass_g=0.0))
    assert r.t2 == r.t1


def test_heavy_object_never_lifts():
    r = simulate_lift(short(mass_g=5000.0))
    assert r.outcome == "never lifted" and r.t2 is None


def test_lifted_shear_equals_gravity():
    sc = short(noise_N=0.0)
    r = simulate_lift(sc)
    lifted = r.column("phase") == "lifted"
    np.testing.assert_allclose(r.column("Fs")[lifted], sc.gravity_N, rtol=1e-12)


def test_slip_prediction_matches_sim_within_1s():
    r = simulate_lift(GraspScenario(duration_s=6.0))
    assert r.outcome == "slipped"
    assert abs(r.slip_time_predicted - r.slip_time_sim) <= 1.0


def test_phases_monotone_and_slip_consistent():
    # exact on noise-free wrenches; a noisy shear sample can dip below the estimate
    r = simulate_lift(GraspScenario(duration_s=6.0, noise_N=0.0))
    order = {p: i for i, p in enumerate(["pre-contact", "sliding", "lifted", "gripped", "slipping"])}
    ph = [order[s.phase] for s in r.timeline]
    assert all(b >= a for a, b in zip(ph, ph[1:]))
    for s in r.timeline:
        if s.phase == "slipping":
            assert s.Fs / s.Fg_prime > r.mu_hat


def test_timeline_csv(tmp_path):
    r = simulate_lift(short(duration_s=0.5))
    write_timeline_csv(tmp_path / "tl.csv", r)
    header, rows = read_csv_rows(tmp_path / "tl.csv")
    assert header == ["t_s", "Fg", "Fs", "Fg_prime", "mu_hat", "phase"]
    assert len(rows) == len(r.timeline)


def test_scenario_validation():
    with pytest.raises(DomainError):
        GraspScenario(mass_g=-1.0)
    with pytest.raises(DomainError):
        GraspScenario(close_speed_mm_per_s=0.0)


# --------------------------------------------------------------- controller
def test_controller_keeps_cone_and_cap():
    ctl = FrictionConeController()
    tr = run_competitive_grasp(ctl, source=WrenchSource(0.02, 0))
    assert tr.inside_cone_fraction(ctl.mu_safe) >= 0.99
    assert tr.commanded_Fg.max() <= ctl.max_force_N
    assert tr.held.all()


def test_controller_ceiling_under_large_pull():
    ctl = FrictionConeController(max_force_N=16.0)
    tr = run_competitive_grasp(ctl, disturbances=(Disturbance(1.0, 2.0, 6.0),), duration_s=4.0)
    assert tr.commanded_Fg.max() <= 16.0 + 1e-9
    assert tr.Fg.max() <= 16.0 + 0.1  # one tick of staleness


def test_controller_settles_without_disturbance():
    tr = run_competitive_grasp(FrictionConeController(), disturbances=(), duration_s=5.0)
    steps = np.diff(tr.squeeze_mm[-330:])
    assert np.all(np.abs(steps) <= FrictionConeController().step_mm + 1e-12)
    assert np.count_nonzero(steps) <= 1


def test_missing_estimate_holds_with_alarm():
    ctl = FrictionConeController()
    ctl.update((10.0, 2.4))
    cmd = ctl.update(None)
    assert cmd.alarm and cmd.delta_mm == 0.0 and cmd.commanded_Fg == 10.0
    tr = run_competitive_grasp(ctl, source=WrenchSource(dropouts=range(200, 240)), duration_s=1.0)
    assert tr.alarm.sum() > 0


def test_controller_validation():
    with pytest.raises(DomainError):
        FrictionConeController(margin=1.5)


# ---------------------------------------------------------- reconstruction
def test_arc_reconstruction():
    w = ContourWorld(arc_contour(50.0))
    rec = contour_follow(w)
    assert reconstruction_error(w, rec) <= 2.0
    assert rec.band_fraction(w.force_band) >= 0.95


def test_wall_reconstruction_is_straight():
    w = ContourWorld(wall_contour(40.0))
    rec = contour_follow(w)
    pts = rec.points[rec.in_contact]
    assert np.ptp(pts[:, 1]) < 0.5
    assert reconstruction_error(w, rec) < 1.0


def test_contact_loss_aborts_with_partial():
    w = ContourWorld(wall_contour(40.0), noise_N=0.0)
    with pytest.raises(ContactLostError) as e:
        contour_follow(w, source=WrenchSource(dropouts=range(50, 5000)))
    assert e.value.partial is not None and len(e.value.partial.t) > 50


def test_world_validation():
    with pytest.raises(DomainError):
        ContourWorld(wall_contour(), force_band=(4.0, 3.0))
    with pytest.raises(DomainError):
        ContourWorld(np.zeros((1, 2)))
