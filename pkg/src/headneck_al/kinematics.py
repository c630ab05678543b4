"""Frames, relative kinematics and the 19-entry feature encoding.

Feature order (used everywhere, including stored normalizer statistics)::

    0-2   r_rel
    3-5   v_rel
    6-11  first two columns of T_rel, column-major (t11 t21 t31 t12 t22 t32)
    12-14 omega_rel
    15    |r_rel|^2
    16    |v_rel|^2
    17    |alpha_rel|^2
    18    |omega_rel|^2

All relative quantities are expressed in the current headrest frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_FEATURES = 19
ORTHO_TOL = 1e-12


class InvalidFrameError(ValueError):
    """Raised when a rotation matrix is not a proper orthonormal matrix."""


def hat(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> None:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidFrameError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidFrameError("rotation is not orthonormal with det +1")


@dataclass(frozen=True)
class Frame:
    """Rigid frame: origin in world coordinates, columns of ``rotation`` are the axes."""

    origin: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        check_rotation(self.rotation)

    @classmethod
    def identity(cls) -> "Frame":
        return cls(np.zeros(3), np.eye(3))


@dataclass(frozen=True)
class RelativeKinematics:
    r_rel: np.ndarray
    v_rel: np.ndarray
    T_rel: np.ndarray
    omega_rel: np.ndarray

    def __post_init__(self):
        for name, shape in (("r_rel", (3,)), ("v_rel", (3,)), ("T_rel", (3, 3)), ("omega_rel", (3,))):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(shape))

    @classmethod
    def zero(cls) -> "RelativeKinematics":
        return cls(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3))


def relative_kinematics(head: Frame, head_twist, headrest: Frame, headrest_twist) -> RelativeKinematics:
    """Kinematics of the head frame relative to the headrest frame.

    Twists are ``(v, omega)`` pairs in world coordinates; ``v`` is the velocity
    of the frame origin.
    """
    check_rotation(head.rotation)
    check_rotation(headrest.rotation)
    v_h, w_h = (np.asarray(a, dtype=float) for a in head_twist)
    v_r, w_r = (np.asarray(a, dtype=float) for a in headrest_twist)
    Rt = headrest.rotation.T
    d = head.origin - headrest.origin
    return RelativeKinematics(
        r_rel=Rt @ d,
        v_rel=Rt @ (v_h - v_r - np.cross(w_r, d)),
        T_rel=Rt @ head.rotation,
        omega_rel=Rt @ (w_h - w_r),
    )


def relative_angle(T_rel: np.ndarray) -> float:
    c = (np.trace(T_rel) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def _trace_from_columns(c1, c2):
    # T33 of a proper rotation is (c1 x c2)_z, so the third column is never read
    return c1[..., 0] + c2[..., 1] + c1[..., 0] * c2[..., 1] - c1[..., 1] * c2[..., 0]


def encode_features(rk: RelativeKinematics) -> np.ndarray:
    tr = _trace_from_columns(rk.T_rel[:, 0], rk.T_rel[:, 1])
    alpha = float(np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0)))
    return np.concatenate(
        [
            rk.r_rel,
            rk.v_rel,
            rk.T_rel[:, 0],
            rk.T_rel[:, 1],
            rk.omega_rel,
            [rk.r_rel @ rk.r_rel, rk.v_rel @ rk.v_rel, alpha * alpha, rk.omega_rel @ rk.omega_rel],
        ]
    )


def _alpha_sq_trace_factor(T_rel: np.ndarray) -> float:
    # d(alpha^2) = -(alpha / sin(alpha)) d(trace); the ratio tends to 1 at alpha = 0
    alpha = relative_angle(T_rel)
    if alpha < 1e-6:
        return -(1.0 + alpha * alpha / 6.0)
    s = np.sin(alpha)
    if s < 1e-12:
        return 0.0
    return -alpha / s


def feature_jacobian(rk: RelativeKinematics) -> np.ndarray:
    """Partial derivatives of the features, shape (19, 12).

    Columns are ``[r_rel, v_rel, omega_rel, dtheta]`` where ``dtheta`` is a
    body-side rotation increment, ``T_rel -> T_rel @ expm(hat(dtheta))``.
    """
    J = np.zeros((N_FEATURES, 12))
    I3 = np.eye(3)
    J[0:3, 0:3] = I3
    J[3:6, 3:6] = I3
    J[12:15, 6:9] = I3
    J[15, 0:3] = 2.0 * rk.r_rel
    J[16, 3:6] = 2.0 * rk.v_rel
    J[18, 6:9] = 2.0 * rk.omega_rel
    T = rk.T_rel
    factor = _alpha_sq_trace_factor(T)
    for k in range(3):
        dT = T @ hat(I3[k])
        J[6:9, 9 + k] = dT[:, 0]
        J[9:12, 9 + k] = dT[:, 1]
        J[17, 9 + k] = factor * np.trace(dT)
    return J


def encode_features_batch(r_rel, v_rel, T_rel, omega_rel) -> np.ndarray:
    """Vectorised :func:`encode_features` over leading axis ``n``."""
    r_rel, v_rel, omega_rel = (np.asarray(a, dtype=float) for a in (r_rel, v_rel, omega_rel))
    T_rel = np.asarray(T_rel, dtype=float)
    tr = _trace_from_columns(T_rel[:, :, 0], T_rel[:, :, 1])
    alpha = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    return np.column_stack(
        [
            r_rel,
            v_rel,
            T_rel[:, :, 0],
            T_rel[:, :, 1],
            omega_rel,
            np.einsum("ni,ni->n", r_rel, r_rel),
            np.einsum("ni,ni->n", v_rel, v_rel),
            alpha * alpha,
            np.einsum("ni,ni->n", omega_rel, omega_rel),
        ]
    )
