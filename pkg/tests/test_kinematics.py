import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from headneck_al.kinematics import (
    N_FEATURES, Frame, InvalidFrameError, RelativeKinematics, encode_features, encode_features_batch,
    feature_jacobian, hat, relative_angle, relative_kinematics, rot_y,
)

ZERO_TWIST = (np.zeros(3), np.zeros(3))


def random_rk(rng, scale=1.0):
    R = Rotation.from_rotvec(rng.uniform(-1, 1, 3) * rng.uniform(0, np.pi) / np.sqrt(3)).as_matrix()
    return RelativeKinematics(rng.uniform(-scale, scale, 3), rng.uniform(-scale, scale, 3), R,
                              rng.uniform(-scale, scale, 3))


def perturbed(rk, dx):
    """Apply the increment ``[dr, dv, dw, dtheta]`` used as Jacobian columns."""
    return RelativeKinematics(rk.r_rel + dx[0:3], rk.v_rel + dx[3:6], rk.T_rel @ expm(hat(dx[9:12])),
                              rk.omega_rel + dx[6:9])


# -- relative_kinematics --------------------------------------------------------------


def test_identical_frames_give_zero_relative_state():
    f = Frame(np.array([0.3, -0.1, 0.5]), rot_y(0.4))
    rk = relative_kinematics(f, ZERO_TWIST, f, ZERO_TWIST)
    np.testing.assert_allclose(rk.r_rel, 0.0, atol=1e-15)
    np.testing.assert_allclose(rk.v_rel, 0.0, atol=1e-15)
    np.testing.assert_allclose(rk.T_rel, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(rk.omega_rel, 0.0, atol=1e-15)


def test_world_headrest_passes_position_and_velocity_through():
    p, v = np.array([0.1, 0.2, 0.3]), np.array([-1.0, 0.5, 2.0])
    rk = relative_kinematics(Frame(p, np.eye(3)), (v, np.zeros(3)), Frame.identity(), ZERO_TWIST)
    np.testing.assert_array_equal(rk.r_rel, p)
    np.testing.assert_array_equal(rk.v_rel, v)


def test_head_rotated_about_headrest_y():
    hr = Frame(np.array([1.0, 2.0, 3.0]), np.eye(3))
    head = Frame(np.array([1.0, 2.0, 3.0]), rot_y(0.3))
    rk = relative_kinematics(head, ZERO_TWIST, hr, ZERO_TWIST)
    c, s = np.cos(0.3), np.sin(0.3)
    np.testing.assert_allclose(rk.T_rel, [[c, 0, s], [0, 1, 0], [-s, 0, c]], atol=1e-15)
    np.testing.assert_allclose(rk.r_rel, 0.0, atol=1e-15)


def test_relative_kinematics_matches_hand_formulas_with_moving_headrest():
    rng = np.random.default_rng(3)
    R_hr = Rotation.random(random_state=4).as_matrix()
    R_h = Rotation.random(random_state=5).as_matrix()
    p_hr, p_h = rng.normal(size=3), rng.normal(size=3)
    v_hr, w_hr, v_h, w_h = rng.normal(size=(4, 3))
    rk = relative_kinematics(Frame(p_h, R_h), (v_h, w_h), Frame(p_hr, R_hr), (v_hr, w_hr))
    d = p_h - p_hr
    np.testing.assert_allclose(rk.r_rel, R_hr.T @ d, atol=1e-14)
    np.testing.assert_allclose(rk.v_rel, R_hr.T @ (v_h - v_hr - np.cross(w_hr, d)), atol=1e-14)
    np.testing.assert_allclose(rk.T_rel, R_hr.T @ R_h, atol=1e-14)
    np.testing.assert_allclose(rk.omega_rel, R_hr.T @ (w_h - w_hr), atol=1e-14)


def test_non_orthonormal_rotation_is_rejected():
    with pytest.raises(InvalidFrameError):
        Frame(np.zeros(3), np.diag([1.0, 1.0, 1.001]))
    with pytest.raises(InvalidFrameError):
        Frame(np.zeros(3), np.diag([1.0, -1.0, 1.0]))  # reflection


# -- relative_angle ---------------------------------------------------------------------


def test_relative_angle_examples():
    assert relative_angle(np.eye(3)) == 0.0
    axis = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])
    assert relative_angle(Rotation.from_rotvec(0.3 * axis).as_matrix()) == pytest.approx(0.3, abs=1e-12)
    assert relative_angle(np.diag([1.0, -1.0, -1.0])) == pytest.approx(np.pi, abs=1e-15)


def test_relative_angle_recovers_axis_angle_for_1000_rotations():
    rng = np.random.default_rng(11)
    axes = rng.normal(size=(1000, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    thetas = rng.uniform(0.0, np.pi, 1000)
    for axis, theta in zip(axes, thetas):
        R = Rotation.from_rotvec(theta * axis).as_matrix()
        assert abs(relative_angle(R) - theta) < 1e-9 or theta < 1e-7


# -- encode_features --------------------------------------------------------------------


def test_identity_encoding():
    x = encode_features(RelativeKinematics.zero())
    assert x.shape == (N_FEATURES,) == (19,)
    expected = np.zeros(19)
    expected[6] = expected[10] = 1.0  # entries 7 and 10 in one-based numbering
    np.testing.assert_array_equal(x, expected)


def test_square_of_position():
    rk = RelativeKinematics(np.array([3.0, 4.0, 0.0]), np.zeros(3), np.eye(3), np.zeros(3))
    assert encode_features(rk)[15] == 25.0


def test_alpha_square_entry_for_y_rotation():
    rk = RelativeKinematics(np.zeros(3), np.zeros(3), rot_y(0.3), np.zeros(3))
    assert encode_features(rk)[17] == pytest.approx(0.09, abs=1e-14)


def test_t6_is_first_two_columns_column_major():
    R = Rotation.random(random_state=7).as_matrix()
    x = encode_features(RelativeKinematics(np.zeros(3), np.zeros(3), R, np.zeros(3)))
    np.testing.assert_array_equal(x[6:12], np.concatenate([R[:, 0], R[:, 1]]))


def test_third_column_never_enters_features():
    R = Rotation.random(random_state=8).as_matrix()
    rk = RelativeKinematics(np.ones(3), np.ones(3), R, np.ones(3))
    x = encode_features(rk)
    # bypass validation to feed a corrupted third column
    broken = RelativeKinematics.__new__(RelativeKinematics)
    object.__setattr__(broken, "r_rel", rk.r_rel)
    object.__setattr__(broken, "v_rel", rk.v_rel)
    object.__setattr__(broken, "omega_rel", rk.omega_rel)
    T = R.copy()
    T[:, 2] = [5.0, -3.0, 0.7]
    object.__setattr__(broken, "T_rel", T)
    np.testing.assert_array_equal(encode_features(broken), x)


def test_encode_is_deterministic_and_batch_consistent():
    rng = np.random.default_rng(1)
    rks = [random_rk(rng) for _ in range(20)]
    single = np.array([encode_features(rk) for rk in rks])
    again = np.array([encode_features(rk) for rk in rks])
    assert np.array_equal(single, again)
    batch = encode_features_batch(np.array([rk.r_rel for rk in rks]), np.array([rk.v_rel for rk in rks]),
                                  np.array([rk.T_rel for rk in rks]), np.array([rk.omega_rel for rk in rks]))
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(0.0, np.pi))
def test_alpha_square_stays_in_range(axis, theta):
    a = np.array(axis)
    if np.linalg.norm(a) < 1e-3:
        a = np.array([0.0, 0.0, 1.0])
    R = Rotation.from_rotvec(theta * a / np.linalg.norm(a)).as_matrix()
    x = encode_features(RelativeKinematics(np.zeros(3), np.zeros(3), R, np.zeros(3)))
    assert 0.0 <= x[17] <= np.pi**2 + 1e-12


# -- feature_jacobian -------------------------------------------------------------------


def test_jacobian_examples_at_identity():
    J = feature_jacobian(RelativeKinematics.zero())
    assert J.shape == (19, 12)
    np.testing.assert_array_equal(J[15], 0.0)
    np.testing.assert_array_equal(J[0, 0:3], [1.0, 0.0, 0.0])


def fd_jacobian(rk, step=1e-6):
    J = np.zeros((19, 12))
    for k in range(12):
        e = np.zeros(12)
        e[k] = step
        J[:, k] = (encode_features(perturbed(rk, e)) - encode_features(perturbed(rk, -e))) / (2 * step)
    return J


def relative_error(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0)


def test_feature_jacobian_matches_finite_differences_at_100_states():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        rk = random_rk(rng)
        worst = max(worst, relative_error(feature_jacobian(rk), fd_jacobian(rk)))
    assert worst < 1e-5


def test_alpha_square_derivative_is_smooth_through_identity():
    rk = RelativeKinematics(np.zeros(3), np.zeros(3), expm(hat(np.array([1e-9, 0.0, 0.0]))), np.zeros(3))
    J = feature_jacobian(rk)
    assert np.all(np.isfinite(J))
    # d(alpha^2) vanishes at the identity
    assert np.max(np.abs(J[17])) < 1e-7
