"""Ground-truth contact wrenches from a nonlinear viscoelastic foam bed.

The headrest cushion is a grid of independent foam columns normal to the
headrest front face (a Winkler bed).  The head is a rigid sphere about its
COG.  Each column whose axis pierces the sphere is compressed by the depth of
the sphere along that axis; its normal force follows a piecewise-linear
stress-strain curve plus a strain-rate damping term and never pulls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ORACLE, SampleTable
from .model import ModelParams, relative_state_batch

SAMPLE_STEP = 0.0025
REPLAY_DURATION = 1.0
N_REPLAY_SAMPLES = 401
MAX_STRAIN = 0.95


@dataclass(frozen=True)
class FoamBed:
    n_u: int = 40
    n_w: int = 40
    width: float = 0.24
    height: float = 0.24
    thickness: float = 0.06
    strain_knots: tuple = (0.0, 0.1, 0.6, 0.9)
    stress_knots: tuple = (0.0, 200e3, 300e3, 2400e3)
    damping: float = 40000.0
    normal: tuple = (-1.0, 0.0, 0.0)

    def __post_init__(self):
        eps = np.asarray(self.strain_knots, dtype=float)
        sig = np.asarray(self.stress_knots, dtype=float)
        if eps.shape != sig.shape or eps.size < 2:
            raise ValueError("stress-strain curve needs matching knot arrays of length >= 2")
        if eps[0] != 0.0 or sig[0] != 0.0:
            raise ValueError("stress-strain curve must start at (0, 0)")
        if np.any(np.diff(eps) <= 0) or eps[-1] > MAX_STRAIN:
            raise ValueError("strain knots must be strictly increasing within [0, 0.95]")
        if np.any(np.diff(sig) < 0):
            raise ValueError("stress must be non-decreasing")
        if self.damping < 0 or self.thickness <= 0 or self.n_u < 1 or self.n_w < 1:
            raise ValueError("invalid foam bed parameters")
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("bed normal must be a unit vector")

    @property
    def node_area(self) -> float:
        return self.width * self.height / (self.n_u * self.n_w)

    @property
    def normal_vector(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def node_positions(self) -> np.ndarray:
        """Cell-centred nodes on the face, headrest frame, shape ``(n_u * n_w, 3)``.

        The face is spanned by the two axes orthogonal to the normal and is
        centred on the headrest origin.
        """
        n = self.normal_vector
        e_u = np.cross(n, [0.0, 0.0, 1.0])
        if np.linalg.norm(e_u) < 1e-9:
            e_u = np.cross(n, [1.0, 0.0, 0.0])
        e_u /= np.linalg.norm(e_u)
        e_w = np.cross(e_u, n)
        u = (np.arange(self.n_u) + 0.5) / self.n_u * self.width - self.width / 2
        w = (np.arange(self.n_w) + 0.5) / self.n_w * self.height - self.height / 2
        uu, ww = np.meshgrid(u, w, indexing="ij")
        return uu.reshape(-1, 1) * e_u + ww.reshape(-1, 1) * e_w

    def stress(self, strain):
        """Piecewise-linear curve, linear extrapolation past the last knot."""
        eps = np.asarray(self.strain_knots, dtype=float)
        sig = np.asarray(self.stress_knots, dtype=float)
        strain = np.asarray(strain, dtype=float)
        out = np.interp(strain, eps, sig)
        slope = (sig[-1] - sig[-2]) / (eps[-1] - eps[-2])
        return np.where(strain > eps[-1], sig[-1] + slope * (strain - eps[-1]), out)


def node_penetration(head_center, radius, node_pos, normal, velocity=None, omega=None):
    """Penetration of the sphere into node columns and its rate.

    Vectorised over a trailing list of nodes.  ``p > 0`` is compression.
    The rate is the speed of the sphere's material point at the column
    surface point, measured into the bed (``-n``).  Returns
    ``(p, pdot, contact_point)``.
    """
    c = np.asarray(head_center, dtype=float)
    nodes = np.atleast_2d(np.asarray(node_pos, dtype=float))
    n = np.asarray(normal, dtype=float)
    d = c - nodes
    axial = -(d @ n)
    lateral = d + np.outer(axial, n)
    ell_sq = np.einsum("ij,ij->i", lateral, lateral)
    inside = ell_sq < radius * radius
    half_chord = np.sqrt(np.where(inside, radius * radius - ell_sq, 0.0))
    p = np.where(inside, axial + half_chord, np.minimum(axial, 0.0) - (np.sqrt(ell_sq) - radius))
    point = nodes - p[:, None] * n
    pdot = np.zeros_like(p)
    if velocity is not None:
        v = np.asarray(velocity, dtype=float)
        w = np.zeros(3) if omega is None else np.asarray(omega, dtype=float)
        vel = v + np.cross(w, point - c)
        pdot = -(vel @ n)
    return p, pdot, point


def node_force(p, pdot, bed: FoamBed):
    """Normal force per node column; zero when separated and never adhesive."""
    p = np.asarray(p, dtype=float)
    pdot = np.asarray(pdot, dtype=float)
    strain = np.clip(p / bed.thickness, 0.0, MAX_STRAIN)
    bracket = bed.stress(strain) + bed.damping * pdot / bed.thickness
    return np.where(p > 0.0, np.maximum(bracket, 0.0) * bed.node_area, 0.0)


@dataclass
class BedContact:
    force: np.ndarray
    moment: np.ndarray
    node_force: np.ndarray
    penetration: np.ndarray
    penetration_rate: np.ndarray
    contact_point: np.ndarray


def bed_wrench(center, velocity, omega, radius, bed: FoamBed, nodes=None) -> BedContact:
    """Total wrench on the sphere (about its centre), headrest frame."""
    nodes = bed.node_positions() if nodes is None else nodes
    n = bed.normal_vector
    p, pdot, point = node_penetration(center, radius, nodes, n, velocity, omega)
    fn = node_force(p, pdot, bed)
    force = fn.sum() * n
    arm = point - np.asarray(center, dtype=float)
    moment = np.cross(arm, n).T @ fn
    return BedContact(force, moment, fn, p, pdot, point)


def damping_power(penetration_rate, penetration, bed: FoamBed) -> float:
    """Viscous dissipation of the compressed columns at one instant [W]."""
    rate = np.asarray(penetration_rate)[np.asarray(penetration) > 0.0]
    return float(np.sum(bed.damping * (rate / bed.thickness) ** 2 * bed.node_area * bed.thickness))


@dataclass
class OracleDataset:
    trajectory_id: str
    samples: SampleTable
    dissipation: np.ndarray

    def __len__(self) -> int:
        return len(self.samples)


def replay_times() -> np.ndarray:
    return np.arange(N_REPLAY_SAMPLES) * SAMPLE_STEP


def replay_states(times, q, qdot, params: ModelParams, bed: FoamBed, trajectory_id: str) -> OracleDataset:
    """Oracle wrenches along given joint states (headrest frame, about the COG)."""
    r, v, T, w = relative_state_batch(q, qdot, params)
    nodes = bed.node_positions()
    n_t = len(times)
    F = np.zeros((n_t, 3))
    M = np.zeros((n_t, 3))
    diss = np.zeros(n_t)
    for k in range(n_t):
        bc = bed_wrench(r[k], v[k], w[k], params.head_radius, bed, nodes)
        F[k], M[k] = bc.force, bc.moment
        diss[k] = damping_power(bc.penetration_rate, bc.penetration, bed)
    table = SampleTable.from_kinematics(trajectory_id, times, r, v, T, w, F, M, ORACLE)
    return OracleDataset(trajectory_id, table, diss)


def replay(traj, bed: FoamBed, params: ModelParams, trajectory_id: str = "traj") -> OracleDataset:
    """Replay the first second of a joint trajectory against the foam bed.

    ``traj`` needs ``times``, ``q`` and ``qdot`` node arrays; states between
    nodes are interpolated linearly.  Produces 401 samples, 0.0025 s apart.
    """
    times = np.asarray(traj.times, dtype=float)
    if times[0] > 1e-12 or times[-1] < REPLAY_DURATION - 1e-9:
        raise ValueError("trajectory must cover [0, 1] s for replay")
    t = replay_times()
    q = np.interp(t, times, np.asarray(traj.q, dtype=float))
    qdot = np.interp(t, times, np.asarray(traj.qdot, dtype=float))
    return replay_states(t, q, qdot, params, bed, trajectory_id)


def dissipated_power(dataset: OracleDataset) -> np.ndarray:
    return dataset.dissipation.copy()
