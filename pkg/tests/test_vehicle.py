import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scm_transfer.errors import ConfigError, InconsistentMotion
from scm_transfer.vehicle import (
    POLY7_COEFFS,
    Command,
    CommandBounds,
    LearnerSpec,
    Pose,
    Warp,
    denormalize_command,
    inverse_teacher_command,
    normalize_command,
    step_learner,
    step_teacher,
    wrap_angle,
)

TABLE2_LEARNER = CommandBounds(0.05, 0.3, -math.pi / 16, math.pi / 12)
ALL_WARPS = [Warp("identity"), Warp("cubic"), Warp("shifted_cubic"), Warp("polynomial7")]

finite = st.floats(-5, 5, allow_nan=False)
angle = st.floats(-math.pi, math.pi)


def test_wrap_angle_range():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert Pose(0, 0, 7.0).theta == pytest.approx(7.0 - 2 * math.pi)


def test_step_teacher_examples():
    p = step_teacher(Pose(0, 0, 0), Command(1, 0), 1.0)
    assert (p.x, p.y, p.theta) == (1.0, 0.0, 0.0)
    p = step_teacher(Pose(0, 0, 0), Command(0, math.pi), 1.0)
    assert (p.x, p.y) == (0.0, 0.0) and p.theta == pytest.approx(math.pi)
    p = step_teacher(Pose(0, 0, math.pi / 2), Command(2, 0.1), 0.5)
    assert p.x == pytest.approx(0.0, abs=1e-15)
    assert p.y == pytest.approx(1.0, abs=1e-15)
    assert p.theta == pytest.approx(math.pi / 2 + 0.05, abs=1e-15)


def test_step_teacher_rejects_bad_dt():
    with pytest.raises(ValueError):
        step_teacher(Pose(0, 0, 0), Command(1, 0), 0.0)


def test_bounds_validation():
    with pytest.raises(ConfigError):
        CommandBounds(1.0, 0.5, -1, 1)
    with pytest.raises(ConfigError):
        CommandBounds.from_list([0, 1, 0])


def test_normalize_round_trip():
    u = Command(0.2, 0.1)
    n = normalize_command(u, TABLE2_LEARNER)
    back = denormalize_command(n, TABLE2_LEARNER)
    assert back.v == pytest.approx(u.v) and back.omega == pytest.approx(u.omega)


def test_cubic_warp_example_value():
    spec = LearnerSpec(TABLE2_LEARNER, Warp("cubic"), Warp("shifted_cubic"))
    eff = spec.effective_command(Command(0.175, 0.0))
    n = normalize_command(Command(0.175, 0.0), TABLE2_LEARNER)
    assert n[0] == pytest.approx(0.5)
    assert eff.v == pytest.approx(0.05 + 0.125 * 0.25, abs=1e-15)
    assert eff.v == pytest.approx(0.08125, abs=1e-15)


def test_cubic_upper_bound_fixed():
    spec = LearnerSpec(TABLE2_LEARNER, Warp("cubic"), Warp("cubic"))
    eff = spec.effective_command(Command(0.3, math.pi / 12))
    assert eff.v == pytest.approx(0.3, abs=1e-12)
    assert eff.omega == pytest.approx(math.pi / 12, abs=1e-12)


def test_shifted_cubic_midpoint_fixed():
    assert float(Warp("shifted_cubic")(0.5)) == 0.5


@pytest.mark.parametrize("warp", ALL_WARPS, ids=lambda w: w.kind)
def test_warp_endpoints(warp):
    # the degree-7 fit is not endpoint-exact at 1 (h(1) = sum of coefficients)
    top = min(1.0, sum(POLY7_COEFFS)) if warp.kind == "polynomial7" else 1.0
    assert float(warp(0.0)) == pytest.approx(0.0, abs=1e-9)
    assert float(warp(1.0)) == pytest.approx(top, abs=1e-9)


@pytest.mark.parametrize("warp", ALL_WARPS, ids=lambda w: w.kind)
def test_warp_maps_unit_interval_into_itself(warp):
    n = np.linspace(0, 1, 1001)
    h = warp(n)
    assert np.all((h >= -1e-12) & (h <= 1 + 1e-12))
    assert np.all(np.diff(h) >= -1e-12)


def test_poly7_values():
    assert sum(POLY7_COEFFS) == pytest.approx(0.99, abs=1e-12)
    h = Warp("polynomial7")
    assert float(h(0.5)) == pytest.approx(sum(c * 0.5**p for p, c in enumerate(POLY7_COEFFS, 1)), abs=1e-12)


def test_unknown_warp_rejected():
    with pytest.raises(ConfigError):
        Warp("quartic")


@pytest.mark.parametrize("warp", ALL_WARPS[:3], ids=lambda w: w.kind)
def test_endpoint_preservation_of_effective_commands(warp):
    spec = LearnerSpec(TABLE2_LEARNER, warp, warp)
    for v in (TABLE2_LEARNER.v_min, TABLE2_LEARNER.v_max):
        for w in (TABLE2_LEARNER.omega_min, TABLE2_LEARNER.omega_max):
            e = spec.effective_command(Command(v, w))
            assert abs(e.v - v) <= 1e-9 and abs(e.omega - w) <= 1e-9


def test_commands_clamped_before_warping():
    spec = LearnerSpec(TABLE2_LEARNER, Warp("cubic"), Warp("cubic"))
    e = spec.effective_command(Command(5.0, -5.0))
    assert e.v == pytest.approx(0.3) and e.omega == pytest.approx(-math.pi / 16)


@settings(max_examples=100, deadline=None)
@given(finite, finite, angle, st.floats(0, 2), st.floats(-2, 2))
def test_identity_learner_equals_teacher(x, y, th, v, w):
    spec = LearnerSpec(CommandBounds(0.0, 2.0, -2.0, 2.0), dt=0.1)
    p = Pose(x, y, th)
    a, b = step_learner(p, Command(v, w), spec), step_teacher(p, Command(v, w), 0.1)
    assert (a.x, a.y, a.theta) == (b.x, b.y, b.theta)


def test_noise_statistics():
    spec = LearnerSpec(CommandBounds(0.0, 1.0, -1.0, 1.0), noise_sigma=0.1, dt=0.1)
    rng = np.random.default_rng(0)
    p = Pose(0, 0, 0)
    dx, dy = [], []
    for _ in range(10000):
        q = step_learner(p, Command(0.0, 0.0), spec, rng)
        dx.append(q.x)
        dy.append(q.y)
    assert abs(np.std(dx) - 0.1) <= 0.005
    assert abs(np.std(dy) - 0.1) <= 0.005
    assert abs(np.mean(dx)) <= 0.005 and abs(np.mean(dy)) <= 0.005


def test_noisy_learner_needs_rng():
    spec = LearnerSpec(CommandBounds(0.0, 1.0, -1.0, 1.0), noise_sigma=0.1)
    with pytest.raises(ValueError):
        step_learner(Pose(0, 0, 0), Command(0.5, 0), spec)


def test_inverse_examples():
    u = inverse_teacher_command(Pose(0, 0, 0), Pose(0.5, 0, 0), 1.0)
    assert (u.v, u.omega) == (0.5, 0.0)
    u = inverse_teacher_command(Pose(0, 0, 0), Pose(0, 0, 0.1), 0.1)
    assert u.v == 0.0 and u.omega == pytest.approx(1.0, abs=1e-15)


def test_inverse_rejects_lateral_motion():
    with pytest.raises(InconsistentMotion):
        inverse_teacher_command(Pose(0, 0, 0), Pose(0, 0.5, 0), 1.0)
    # within three sigma of the noise model the step is accepted
    inverse_teacher_command(Pose(0, 0, 0), Pose(0.5, 0.02, 0), 1.0, noise_sigma=0.01)


@settings(max_examples=200, deadline=None)
@given(finite, finite, angle, st.floats(-2, 2), st.floats(-3, 3), st.sampled_from([0.05, 0.1, 1.0]))
def test_inverse_recovers_command(x, y, th, v, w, dt):
    p0 = Pose(x, y, th)
    u = inverse_teacher_command(p0, step_teacher(p0, Command(v, w), dt), dt)
    assert u.v == pytest.approx(v, abs=1e-9)
    assert u.omega == pytest.approx(w, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(angle, st.floats(0, 1), st.floats(-0.7, 0.7), st.integers(2, 12))
def test_inverse_recovers_held_command(th, v, w, steps):
    p = p0 = Pose(0.3, -0.2, th)
    for _ in range(steps):
        p = step_teacher(p, Command(v, w), 0.1)
    u = inverse_teacher_command(p0, p, 0.1, steps=steps)
    assert u.v == pytest.approx(v, abs=1e-9)
    assert u.omega == pytest.approx(w, abs=1e-9)
