import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from headneck_al.kinematics import encode_features
from headneck_al.model import (
    FrameMismatchError, ModelParams, State, Wrench, cog_position, features_and_derivatives, features_batch,
    forward_dynamics, generalized_contact_force, gravity_torque, project_contact_wrench, relative_state,
    relative_state_batch,
)

P = ModelParams()


def test_default_parameters():
    assert P.head_mass == 4.5
    assert P.q_max - P.q_min == pytest.approx(0.4, abs=1e-15)
    assert P.total_inertia == pytest.approx(0.02 + 4.5 * 0.15**2)
    np.testing.assert_array_equal(P.plane_normal, [-1.0, 0.0, 0.0])


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        ModelParams(head_mass=0.0)
    with pytest.raises(ValueError):
        ModelParams(q_min=0.5, q_max=0.4)
    with pytest.raises(ValueError):
        ModelParams(joint_axis=np.array([1.0, 0.0, 0.0]))


def test_cog_geometry():
    np.testing.assert_allclose(cog_position(0.0, P), [0.0, 0.0, 0.15])
    np.testing.assert_allclose(cog_position(np.pi / 2, P), [0.15, 0.0, 0.0], atol=1e-15)


def test_head_sphere_touches_plane_at_contact_angle():
    center = cog_position(P.contact_angle, P)
    assert P.plane_offset - center[0] == pytest.approx(P.head_radius, abs=1e-15)


def test_gravity_torque_is_negative_potential_gradient():
    # V(q) = m g L cos q for an upright pendulum
    q = np.linspace(-0.5, 0.5, 11)
    step = 1e-6
    V = lambda x: P.head_mass * P.gravity * P.cog_offset * np.cos(x)
    np.testing.assert_allclose(gravity_torque(q, P), -(V(q + step) - V(q - step)) / (2 * step), rtol=1e-8, atol=1e-10)


def test_static_balance_torque():
    q0 = 0.232
    tau = -P.head_mass * P.gravity * P.cog_offset * np.sin(q0)
    assert forward_dynamics(State(q0, 0.0), tau, 0.0, P) == pytest.approx(0.0, abs=1e-14)


def test_energy_is_conserved_without_torque_or_contact():
    def rhs(_, y):
        return [y[1], forward_dynamics(State(y[0], y[1]), 0.0, 0.0, P)]
    sol = solve_ivp(rhs, (0.0, 0.5), [0.1, 0.0], rtol=1e-11, atol=1e-12, dense_output=True)
    q, qd = sol.y
    E = 0.5 * P.total_inertia * qd**2 + P.head_mass * P.gravity * P.cog_offset * np.cos(q)
    assert np.max(np.abs(E - E[0])) < 1e-8 * abs(E[0])


def test_project_contact_wrench_examples():
    # force along world x at the COG produces L cos q joint torque
    q = 0.2
    w = Wrench(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    assert project_contact_wrench(q, w, P) == pytest.approx(P.cog_offset * np.cos(q))
    # pure moment about y passes through
    assert project_contact_wrench(q, Wrench(np.zeros(3), np.array([0.0, 2.0, 0.0])), P) == pytest.approx(2.0)
    with pytest.raises(FrameMismatchError):
        project_contact_wrench(q, Wrench(np.zeros(3), np.zeros(3), frame="world"), P)


def test_compressive_headrest_force_opposes_tilt():
    # the headrest pushes along its outward normal, back toward the head
    w = Wrench(10.0 * P.plane_normal, np.zeros(3))
    assert project_contact_wrench(0.35, w, P) < 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.5, 0.8), st.floats(-5, 5),
       st.lists(st.floats(-50, 50), min_size=6, max_size=6))
def test_vectorised_projection_matches_scalar(q, qdot, wrench):
    F, M = np.array(wrench[:3]), np.array(wrench[3:])
    f, _, dF, dM = generalized_contact_force(np.array([q]), F[None], M[None], P)
    assert f[0] == pytest.approx(project_contact_wrench(q, Wrench(F, M), P), rel=1e-12, abs=1e-12)
    assert f[0] == pytest.approx(dF[0] @ F + dM[0] @ M, rel=1e-12, abs=1e-12)


def test_projection_q_derivative_matches_finite_differences():
    rng = np.random.default_rng(0)
    q = rng.uniform(0, 0.5, 20)
    F, M = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    _, df, _, _ = generalized_contact_force(q, F, M, P)
    h = 1e-6
    fp = generalized_contact_force(q + h, F, M, P)[0]
    fm = generalized_contact_force(q - h, F, M, P)[0]
    np.testing.assert_allclose(df, (fp - fm) / (2 * h), rtol=1e-7, atol=1e-9)


def test_batch_relative_state_matches_frame_algebra():
    q = np.linspace(0.0, 0.45, 7)
    qd = np.linspace(-3.0, 3.0, 7)
    r, v, T, w = relative_state_batch(q, qd, P)
    for i in range(7):
        rk = relative_state(q[i], qd[i], P)
        np.testing.assert_allclose(r[i], rk.r_rel, atol=1e-15)
        np.testing.assert_allclose(v[i], rk.v_rel, atol=1e-15)
        np.testing.assert_allclose(T[i], rk.T_rel, atol=1e-15)
        np.testing.assert_allclose(w[i], rk.omega_rel, atol=1e-15)
    X = features_batch(q, qd, P)
    np.testing.assert_allclose(X[3], encode_features(relative_state(q[3], qd[3], P)), atol=1e-15)


def test_relative_angle_feature_equals_q_squared_for_aligned_headrest():
    q = np.array([0.05, 0.2, 0.4])
    np.testing.assert_allclose(features_batch(q, 0.0, P)[:, 17], q**2, rtol=1e-10)


def test_feature_derivatives_match_finite_differences():
    rng = np.random.default_rng(5)
    q = rng.uniform(-0.3, 0.6, 100)
    qd = rng.uniform(-5, 5, 100)
    _, dq, dqd = features_and_derivatives(q, qd, P)
    h = 1e-6
    fq = (features_batch(q + h, qd, P) - features_batch(q - h, qd, P)) / (2 * h)
    fqd = (features_batch(q, qd + h, P) - features_batch(q, qd - h, P)) / (2 * h)
    scale = max(1.0, np.max(np.abs(fq)))
    assert np.max(np.abs(dq - fq)) / scale < 1e-5
    assert np.max(np.abs(dqd - fqd)) / max(1.0, np.max(np.abs(fqd))) < 1e-5
