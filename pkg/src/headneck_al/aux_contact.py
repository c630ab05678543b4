"""Penalty contact of a single head point against the headrest plane.

Only used to bootstrap the data pool.  The force law is evaluated in
millimetres and newtons so that the usual parameter values apply verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PRELIMINARY, SampleTable
from .model import ModelParams, relative_state_batch
from .kinematics import rot_y

M_TO_MM = 1000.0


@dataclass(frozen=True)
class AuxParams:
    stiffness: float = 6.0  # N/mm^2
    damping: float = 0.1  # N s/mm^2
    p_ref: float = 2.0  # mm
    r_sp: tuple | None = None  # head frame [m]; None -> first-contact point
    normal: tuple = (-1.0, 0.0, 0.0)  # headrest frame, pointing out of the headrest

    def __post_init__(self):
        if not (self.stiffness > 0 and self.damping >= 0 and self.p_ref > 0):
            raise ValueError("need k > 0, d0 >= 0, p_ref > 0")
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ValueError("aux contact normal must be a unit vector")

    def contact_point(self, params: ModelParams) -> np.ndarray:
        """``r_sp`` in the head frame.

        Defaults to the sphere point that touches the plane first, i.e. the
        point facing the headrest at ``q = contact_angle``.
        """
        if self.r_sp is not None:
            return np.asarray(self.r_sp, dtype=float)
        toward = -params.headrest.rotation @ np.asarray(self.normal, dtype=float)
        return rot_y(params.contact_angle).T @ (params.head_radius * toward)


def aux_force(p, pdot, params: AuxParams, r_sp=None):
    """Scalar force ``f`` [N], force vector and moment about the head COG.

    ``p`` in mm, ``pdot`` in mm/s, ``r_sp`` in metres in the force's frame;
    the moment is in N m.
    """
    n = np.asarray(params.normal, dtype=float)
    f = p * p * params.stiffness + pdot * params.damping * (1.0 - np.exp(-abs(p) / params.p_ref))
    F = f * n if (p > 0 and f > 0) else np.zeros(3)
    arm = np.zeros(3) if r_sp is None else np.asarray(r_sp, dtype=float)
    return f, F, np.cross(arm, F)


@dataclass(frozen=True)
class LhsSpec:
    K: int = 2000
    q_range: tuple = (0.02, 0.42)
    qdot_range: tuple = (-5.0, 5.0)
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("LHS needs K >= 2")
        if not (self.q_range[0] < self.q_range[1] and self.qdot_range[0] < self.qdot_range[1]):
            raise ValueError("LHS ranges must be non-degenerate")


def lhs_unit(K: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """One point per stratum per dimension on ``[0, 1)^dims``."""
    out = np.empty((K, dims))
    for j in range(dims):
        out[:, j] = (rng.permutation(K) + rng.uniform(size=K)) / K
    return out


def lhs_sample(spec: LhsSpec) -> np.ndarray:
    """``(K, 2)`` array of ``(q, qdot)`` states."""
    u = lhs_unit(spec.K, 2, np.random.default_rng(spec.seed))
    lo = np.array([spec.q_range[0], spec.qdot_range[0]])
    hi = np.array([spec.q_range[1], spec.qdot_range[1]])
    return lo + u * (hi - lo)


def aux_wrench_at_states(q, qdot, aux: AuxParams, model: ModelParams):
    """Penetration [mm], its rate [mm/s], force and moment arrays for each state."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qdot = np.broadcast_to(np.asarray(qdot, dtype=float), q.shape)
    r, v, T, w = relative_state_batch(q, qdot, model)
    n = np.asarray(aux.normal, dtype=float)
    r_sp_head = aux.contact_point(model)
    F = np.zeros((q.size, 3))
    M = np.zeros((q.size, 3))
    p_mm = np.zeros(q.size)
    pdot_mm = np.zeros(q.size)
    for i in range(q.size):
        arm = T[i] @ r_sp_head
        point = r[i] + arm
        # headrest plane passes through the headrest origin
        p_mm[i] = -(point @ n) * M_TO_MM
        pdot_mm[i] = -((v[i] + np.cross(w[i], arm)) @ n) * M_TO_MM
        _, F[i], M[i] = aux_force(p_mm[i], pdot_mm[i], aux, arm)
    return p_mm, pdot_mm, F, M


def preliminary_dataset(spec: LhsSpec, aux: AuxParams, model: ModelParams, chunk_size: int = 401) -> SampleTable:
    """LHS states labelled by the penalty model, grouped into pseudo-trajectories.

    Consecutive blocks of ``chunk_size`` samples share a trajectory id so the
    trajectory-wise split can treat them like replayed trajectories.
    """
    states = lhs_sample(spec)
    q, qdot = states[:, 0], states[:, 1]
    r, v, T, w = relative_state_batch(q, qdot, model)
    _, _, F, M = aux_wrench_at_states(q, qdot, aux, model)
    ids = np.array([f"prelim-{i // chunk_size:03d}" for i in range(spec.K)], dtype=object)
    return SampleTable.from_kinematics(ids, np.zeros(spec.K), r, v, T, w, F, M, PRELIMINARY)
