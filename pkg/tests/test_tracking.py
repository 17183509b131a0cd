import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zpm.attitude import cross, kinematic_matrix, kinematic_matrix_rate, rotation_o_to_b
from zpm.dynamics import StationState, orbit_rate_body
from zpm.tracking import (
    CmgLimits,
    TrackerGains,
    command_torque,
    command_torque_array,
    feedback,
    limit_command,
    limit_command_array,
    mrp_acceleration,
    transformed_control,
)

from conftest import random_mrps

H_MAX, HDOT_MAX = 19524.0, 271.16


def test_gains_and_poles():
    g = TrackerGains()
    assert g.k_p == pytest.approx(-1e-4) and g.k_d == pytest.approx(-0.01414)
    poles = g.poles()
    assert np.all(poles.real < 0)
    expect = -0.707 * 0.01 + 1j * 0.01 * np.sqrt(1 - 0.707**2)
    assert np.allclose(sorted(poles, key=lambda z: z.imag), [expect.conjugate(), expect])
    with pytest.raises(ValueError):
        TrackerGains(omega_n=0.0)
    with pytest.raises(ValueError):
        CmgLimits(h_max=-1.0)


def test_feedback_examples():
    g = TrackerGains()
    assert np.array_equal(feedback(np.zeros(3), np.zeros(3), g), np.zeros(3))
    assert np.allclose(feedback(np.array([1.0, 0, 0]), np.zeros(3), g), [-1e-4, 0, 0])
    a, b = np.array([1.0, 2, 3]), np.array([-4.0, 5, 6])
    assert np.array_equal(transformed_control(a, np.zeros(3)), a)
    assert np.array_equal(transformed_control(np.zeros(3), b), b)
    assert np.array_equal(transformed_control(a, b), a + b)


def test_kinematic_rate_matches_fd(rng):
    s = random_mrps(rng, 50, 0.9)
    sd = rng.normal(size=(50, 3)) * 1e-2
    h = 1e-6
    fd = (kinematic_matrix(s + h * sd) - kinematic_matrix(s - h * sd)) / (2 * h)
    assert np.allclose(kinematic_matrix_rate(s, sd), fd, atol=1e-9)


def test_rotation_rate_transport(rng, params):
    # dR/dt = -[w_rel x] R along a propagated rotation
    s = random_mrps(rng, 20, 0.8)
    w = rng.normal(size=(20, 3)) * 1e-2
    w_rel = w - orbit_rate_body(s, params.orbit_rate)
    sd = np.einsum("nij,nj->ni", kinematic_matrix(s), w_rel)
    h = 1e-6
    fd = (rotation_o_to_b(s + h * sd) - rotation_o_to_b(s - h * sd)) / (2 * h)
    R = rotation_o_to_b(s)
    ana = -np.einsum("nij,njk->nik", _skew(w_rel), R)
    assert np.allclose(fd, ana, atol=1e-8)


def _skew(v):
    z = np.zeros(v.shape[:-1])
    return np.stack([
        np.stack([z, -v[..., 2], v[..., 1]], -1),
        np.stack([v[..., 2], z, -v[..., 0]], -1),
        np.stack([-v[..., 1], v[..., 0], z], -1),
    ], -2)


def test_feedback_linearization_round_trip(rng, model, params):
    n = 1000
    s = random_mrps(rng, n, 1.0)
    w = rng.normal(size=(n, 3)) * 5e-3
    v = rng.normal(size=(n, 3)) * 1e-5
    t = rng.uniform(0, 6000, n)
    u = command_torque_array(s, w, t, v, model, params)
    back = mrp_acceleration(s, w, t, u, model, params)
    err = np.linalg.norm(back - v, axis=1) / np.linalg.norm(v, axis=1)
    assert err.max() < 1e-9


def test_equilibrium_matches_nominal_torque(nominal, model, params):
    for i in (10, 1500, 3000, 5990):
        s = nominal.sample(nominal.t[i])
        st_ = StationState(s.sigma, s.omega, s.h_cmg, nominal.t[i])
        u = command_torque(st_, s.sigma_ddot, model, params)
        assert np.max(np.abs(u - nominal.u[i])) < 1e-6


def test_identity_structure(model, params):
    # sigma = 0, omega = w_o, v = 0: only environment, gyroscopic and frame-rate terms remain
    w_o = orbit_rate_body(np.zeros(3), params.orbit_rate)
    u = command_torque_array(np.zeros(3), w_o, 0.0, np.zeros(3), model, params)
    from zpm.environment import environmental_torque_body

    tau = environmental_torque_body(np.zeros(3), 0.0, model)
    assert np.allclose(u, tau - cross(w_o, params.inertia @ w_o), atol=1e-12)


def test_limiter_passthrough():
    h = np.array([1000.0, 0, 0])
    u = np.array([1.0, 2.0, 3.0])
    out = limit_command_array(u, np.zeros(3), h, H_MAX, HDOT_MAX)
    assert np.array_equal(out.u, u) and not out.rate_clamped and not out.envelope_clamped


def test_limiter_rate():
    h = np.array([1000.0, 0, 0])
    w = np.array([0.0, 1e-3, 0.0])
    wxh = np.cross(w, h)
    u = wxh + np.array([0.0, 2 * HDOT_MAX, 0.0])
    out = limit_command_array(u, w, h, H_MAX, HDOT_MAX)
    assert np.linalg.norm(out.u - wxh) == pytest.approx(HDOT_MAX, rel=1e-14)
    assert out.rate_clamped


def test_limiter_envelope():
    h = np.array([H_MAX, 0.0, 0.0])
    out = limit_command_array(np.array([100.0, 50.0, 0.0]), np.zeros(3), h, H_MAX, HDOT_MAX)
    assert out.envelope_clamped
    assert out.u @ h == pytest.approx(0.0, abs=1e-9)
    inward = limit_command_array(np.array([-100.0, 50.0, 0.0]), np.zeros(3), h, H_MAX, HDOT_MAX)
    assert not inward.envelope_clamped


def test_limiter_zoh_keeps_envelope():
    h = np.array([H_MAX - 10.0, 0.0, 0.0])
    out = limit_command_array(np.array([200.0, 100.0, 0.0]), np.zeros(3), h, H_MAX, HDOT_MAX, dt=1.0)
    assert out.envelope_clamped
    assert np.linalg.norm(h + out.u) <= H_MAX * (1 + 1e-12)


def test_limit_command_state_wrapper():
    st_ = StationState(np.zeros(3), np.zeros(3), np.array([H_MAX, 0, 0]))
    out = limit_command(np.array([10.0, 0, 0]), st_, CmgLimits())
    assert np.allclose(out.u, 0.0)


vec = arrays(np.float64, 3, elements=st.floats(-1.0, 1.0))


@settings(max_examples=300, deadline=None)
@given(vec, vec, vec, st.floats(0.5, 1.2), st.sampled_from([0.0, 1.0]))
def test_limiter_properties(u_dir, h_dir, w, h_frac, dt):
    u = u_dir * 600.0
    h = h_dir / max(np.linalg.norm(h_dir), 1e-3) * H_MAX * h_frac
    w = w * 1e-3
    wxh = np.cross(w, h)
    once = limit_command_array(u, w, h, H_MAX, HDOT_MAX, dt)
    twice = limit_command_array(once.u, w, h, H_MAX, HDOT_MAX, dt)
    assert np.allclose(once.u, twice.u, rtol=1e-10, atol=1e-9)
    assert np.linalg.norm(once.u - wxh) <= max(np.linalg.norm(u - wxh), 0.0) * (1 + 1e-12) + 1e-9
    assert np.linalg.norm(once.u - wxh) <= HDOT_MAX * (1 + 1e-12)
