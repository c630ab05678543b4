"""One-DOF head-neck pendulum interacting with a fixed headrest.

The neck is a revolute joint at the world origin rotating about world y.
``q = 0`` puts the head COG straight above the joint; positive ``q`` tilts the
head toward the headrest, which sits on the +x side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import Frame, RelativeKinematics, encode_features_batch, relative_kinematics, rot_y

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])
HEADREST = "headrest"


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    head_mass: float = 4.5
    cog_inertia: float = 0.02
    cog_offset: float = 0.15
    head_radius: float = 0.09
    gravity: float = 9.81
    q_min: float = 0.02
    q_max: float = 0.42
    tau_max: float = 30.0
    contact_angle: float = 0.30
    joint_axis: np.ndarray = field(default_factory=lambda: Y_HAT.copy())
    plane_offset: float | None = None
    headrest: Frame | None = None

    def __post_init__(self):
        for name in ("head_mass", "cog_inertia", "cog_offset", "head_radius", "gravity", "tau_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.q_min < self.q_max:
            raise ValueError("need 0 < q_min < q_max")
        axis = np.asarray(self.joint_axis, dtype=float)
        if not np.allclose(axis, Y_HAT):
            raise ValueError("only a joint axis along world y is supported")
        object.__setattr__(self, "joint_axis", axis)
        L, a = self.cog_offset, self.contact_angle
        if self.plane_offset is None:
            # first contact of the sphere with the plane at q = contact_angle
            object.__setattr__(self, "plane_offset", L * np.sin(a) + self.head_radius)
        if self.headrest is None:
            object.__setattr__(self, "headrest", Frame([self.plane_offset, 0.0, L * np.cos(a)], np.eye(3)))

    @property
    def total_inertia(self) -> float:
        return self.cog_inertia + self.head_mass * self.cog_offset**2

    @property
    def plane_normal(self) -> np.ndarray:
        """Outward normal of the headrest front face (points at the head), headrest frame."""
        return np.array([-1.0, 0.0, 0.0])


@dataclass(frozen=True)
class State:
    q: float
    qdot: float = 0.0


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    moment: np.ndarray
    frame: str = HEADREST

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float).reshape(3))


def cog_position(q, params: ModelParams):
    q = np.asarray(q, dtype=float)
    L = params.cog_offset
    return np.stack([L * np.sin(q), np.zeros_like(q), L * np.cos(q)], axis=-1)


def cog_jacobian(q, params: ModelParams):
    """Linear velocity of the COG per unit qdot."""
    q = np.asarray(q, dtype=float)
    L = params.cog_offset
    return np.stack([L * np.cos(q), np.zeros_like(q), -L * np.sin(q)], axis=-1)


def head_frame(q: float, params: ModelParams):
    """Head frame at the COG plus its velocity Jacobians ``(J_v, J_omega)``."""
    frame = Frame(cog_position(q, params), rot_y(q))
    return frame, cog_jacobian(q, params), params.joint_axis.copy()


def gravity_torque(q, params: ModelParams):
    return params.head_mass * params.gravity * params.cog_offset * np.sin(q)


def project_contact_wrench(q: float, w: Wrench, params: ModelParams) -> float:
    """Generalized joint force of a wrench acting at (and about) the head COG."""
    if w.frame != HEADREST:
        raise FrameMismatchError(f"wrench must be expressed in the headrest frame, got {w.frame!r}")
    R = params.headrest.rotation
    J_v = cog_jacobian(q, params)
    return float(J_v @ (R @ w.force) + params.joint_axis @ (R @ w.moment))


def forward_dynamics(s: State, tau: float, f_cm: float, params: ModelParams) -> float:
    return (tau + gravity_torque(s.q, params) + f_cm) / params.total_inertia


def relative_state(q: float, qdot: float, params: ModelParams) -> RelativeKinematics:
    frame, J_v, J_w = head_frame(q, params)
    zero = np.zeros(3)
    return relative_kinematics(frame, (J_v * qdot, J_w * qdot), params.headrest, (zero, zero))


def relative_state_batch(q, qdot, params: ModelParams):
    """Arrays ``(r_rel, v_rel, T_rel, omega_rel)`` for vectors of ``q`` and ``qdot``."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qdot = np.broadcast_to(np.asarray(qdot, dtype=float), q.shape)
    Rt = params.headrest.rotation.T
    r = (cog_position(q, params) - params.headrest.origin) @ Rt.T
    v = (cog_jacobian(q, params) * qdot[:, None]) @ Rt.T
    c, s = np.cos(q), np.sin(q)
    Ry = np.zeros((q.size, 3, 3))
    Ry[:, 0, 0] = c
    Ry[:, 0, 2] = s
    Ry[:, 1, 1] = 1.0
    Ry[:, 2, 0] = -s
    Ry[:, 2, 2] = c
    T = np.einsum("ij,njk->nik", Rt, Ry)
    w = (qdot[:, None] * params.joint_axis[None, :]) @ Rt.T
    return r, v, T, w


def features_batch(q, qdot, params: ModelParams) -> np.ndarray:
    return encode_features_batch(*relative_state_batch(q, qdot, params))


def features_and_derivatives(q, qdot, params: ModelParams):
    """Features of the 1-DOF model with analytic ``d/dq`` and ``d/dqdot``.

    Returns three ``(n, 19)`` arrays.  The relative angle equals ``q`` only for
    an axis-aligned headrest, so the angle term is differentiated through the
    trace like the general feature Jacobian.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qdot = np.broadcast_to(np.asarray(qdot, dtype=float), q.shape)
    r, v, T, w = relative_state_batch(q, qdot, params)
    X = encode_features_batch(r, v, T, w)
    Rt = params.headrest.rotation.T
    L = params.cog_offset
    c, s = np.cos(q), np.sin(q)
    Jv = np.stack([L * c, np.zeros_like(q), -L * s], axis=-1) @ Rt.T
    dJv = np.stack([-L * s, np.zeros_like(q), -L * c], axis=-1) @ Rt.T
    axis = Rt @ params.joint_axis
    n = q.size
    dq = np.zeros((n, 19))
    dqd = np.zeros((n, 19))
    dq[:, 0:3] = Jv
    dv_dq = dJv * qdot[:, None]
    dq[:, 3:6] = dv_dq
    dqd[:, 3:6] = Jv
    # d(Ry)/dq = Ry @ hat(y)
    hy = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    dT = T @ hy
    dq[:, 6:9] = dT[:, :, 0]
    dq[:, 9:12] = dT[:, :, 1]
    dqd[:, 12:15] = axis
    dq[:, 15] = 2.0 * np.einsum("ni,ni->n", r, Jv)
    dq[:, 16] = 2.0 * np.einsum("ni,ni->n", v, dv_dq)
    dqd[:, 16] = 2.0 * np.einsum("ni,ni->n", v, Jv)
    dqd[:, 18] = 2.0 * np.einsum("ni,ni->n", w, np.broadcast_to(axis, w.shape))
    alpha_sq = X[:, 17]
    alpha = np.sqrt(alpha_sq)
    sin_a = np.sin(alpha)
    small = alpha < 1e-6
    factor = np.where(small, -(1.0 + alpha_sq / 6.0), -alpha / np.where(small | (sin_a < 1e-12), 1.0, sin_a))
    factor = np.where(~small & (sin_a < 1e-12), 0.0, factor)
    dq[:, 17] = factor * np.einsum("nii->n", dT)
    return X, dq, dqd


def generalized_contact_force(q, force, moment, params: ModelParams):
    """Vectorised projection of headrest-frame wrenches onto the joint.

    Returns ``(f_cm, df_dq_explicit, dfcm_dF, dfcm_dM)`` where the explicit
    ``q`` derivative holds the wrench fixed.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    R = params.headrest.rotation
    Jv = cog_jacobian(q, params)
    L = params.cog_offset
    dJv = np.stack([-L * np.sin(q), np.zeros_like(q), -L * np.cos(q)], axis=-1)
    Fw = np.asarray(force) @ R.T
    Mw = np.asarray(moment) @ R.T
    dF = Jv @ R  # row n: J_v^T R
    dM = np.broadcast_to(params.joint_axis @ R, dF.shape)
    f = np.einsum("ni,ni->n", Jv, Fw) + Mw @ params.joint_axis
    df_dq = np.einsum("ni,ni->n", dJv, Fw)
    return f, df_dq, dF, dM
