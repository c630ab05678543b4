"""Multiphase optimal control of the head-neck model by discrete mechanics.

The motion is discretised with the midpoint discrete Lagrangian
``L_d(a, b) = h * (I/2 ((b - a)/h)^2 - V((a + b)/2))`` with
``V(q) = m g L cos q``.  Actuation and contact act as discrete forces
``h/2 (tau_k + f_cm(qbar_k, v_k))`` on both ends of interval ``k``.  The
equality constraints are the discrete Euler-Lagrange equations plus the
discrete Legendre boundary conditions, all divided by ``h`` so they read in
N m.  Decision vector: ``[q_0 .. q_N, tau_0 .. tau_{N-1}]``.

The NLP is solved with an augmented Lagrangian method whose inner problems
use a bound-projected Newton iteration.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from .data import fmt
from .model import ModelParams, State

log = logging.getLogger(__name__)

GRID_TOL = 1e-9


class OcpSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Phase:
    t_start: float
    t_end: float
    w_tau: float
    w_T: float


@dataclass
class OcpSpec:
    t0: float
    tF: float
    h: float
    phases: list
    tau_bound: float
    q_bounds: tuple
    initial_state: State
    params: ModelParams = field(default_factory=ModelParams)
    terminal_rest: bool = True
    contact_model: Callable | None = None
    include_gravity: bool = True

    def __post_init__(self):
        self.phases = [p if isinstance(p, Phase) else Phase(*p) for p in self.phases]

    @property
    def n_intervals(self) -> int:
        return int(round((self.tF - self.t0) / self.h))


def validate(spec: OcpSpec) -> int:
    if spec.h <= 0 or spec.tF <= spec.t0:
        raise OcpSpecError("need h > 0 and tF > t0")
    ratio = (spec.tF - spec.t0) / spec.h
    N = int(round(ratio))
    if abs(ratio - N) > GRID_TOL * max(1.0, ratio):
        raise OcpSpecError("(tF - t0) / h must be an integer")
    if not spec.phases:
        raise OcpSpecError("at least one phase is required")
    t = spec.t0
    for ph in spec.phases:
        if abs(ph.t_start - t) > GRID_TOL:
            raise OcpSpecError("phases must tile [t0, tF] without gaps or overlaps")
        if ph.t_end <= ph.t_start:
            raise OcpSpecError("phase with non-positive duration")
        if ph.w_tau < 0 or ph.w_T < 0:
            raise OcpSpecError("phase weights must be non-negative")
        k = (ph.t_end - spec.t0) / spec.h
        if abs(k - round(k)) > GRID_TOL * max(1.0, k):
            raise OcpSpecError(f"phase boundary {ph.t_end} is not on the time grid")
        t = ph.t_end
    if abs(t - spec.tF) > GRID_TOL:
        raise OcpSpecError("phases must end at tF")
    if spec.tau_bound <= 0 or spec.q_bounds[0] >= spec.q_bounds[1]:
        raise OcpSpecError("invalid bounds")
    return N


def phase_weights(spec: OcpSpec, times) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the phase with ``t_start <= t < t_end``; the last phase also owns ``tF``."""
    times = np.asarray(times, dtype=float)
    w_tau = np.full(times.shape, np.nan)
    w_T = np.full(times.shape, np.nan)
    for ph in spec.phases:
        sel = (times >= ph.t_start - GRID_TOL) & (times < ph.t_end - GRID_TOL)
        w_tau[sel] = ph.w_tau
        w_T[sel] = ph.w_T
    last = spec.phases[-1]
    tail = times >= last.t_end - GRID_TOL
    w_tau[tail] = last.w_tau
    w_T[tail] = last.w_T
    return w_tau, w_T


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        n = len(self.times)
        if len(self.q) != n or len(self.qdot) != n or len(self.tau) != n - 1:
            raise ValueError("trajectory lengths must be (N+1, N+1, N+1, N)")
        if n > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9:
                raise ValueError("trajectory times must be uniform and increasing")

    @property
    def n_intervals(self) -> int:
        return len(self.tau)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    max_constraint_violation: float
    stationarity_norm: float
    objective_value: float
    outer_iterations: int = 0
    message: str = ""


class Nlp:
    """Transcribed problem: objective, constraints, derivatives and bounds."""

    def __init__(self, spec: OcpSpec):
        self.N = validate(spec)
        self.spec = spec
        p = spec.params
        self.h = spec.h
        self.inertia = p.total_inertia
        self.mgl = p.head_mass * p.gravity * p.cog_offset if spec.include_gravity else 0.0
        self.times = spec.t0 + spec.h * np.arange(self.N + 1)
        self.w_tau, self.w_T = phase_weights(spec, self.times[:-1])
        self.n = 2 * self.N + 1
        self.n_con = self.N + 1 if spec.terminal_rest else self.N
        q0 = spec.initial_state.q
        self.lb = np.concatenate([[q0], np.full(self.N, spec.q_bounds[0]), np.full(self.N, -spec.tau_bound)])
        self.ub = np.concatenate([[q0], np.full(self.N, spec.q_bounds[1]), np.full(self.N, spec.tau_bound)])
        self.qdot0 = spec.initial_state.qdot
        self.contact = spec.contact_model
        # node-wise interleaving (q_k, tau_k, c_k) makes the Newton systems banded
        key_x = np.concatenate([3 * np.arange(self.N + 1), 3 * np.arange(self.N) + 1])
        key_c = 3 * np.arange(self.n_con) + 2
        self.order_x = np.argsort(key_x, kind="stable")
        self.order_kkt = np.argsort(np.concatenate([key_x, key_c]), kind="stable")
        self.bw_kkt, self.bw_M = self._band_widths()

    def _band_widths(self):
        """Half band widths of the interleaved KKT matrix and of ``H + mu J'J``.

        Computed once from the sparsity pattern, which does not change
        between iterations.
        """
        N, n = self.N, self.n
        k = np.arange(N)
        H = np.zeros((n, n), dtype=bool)
        H[k, k] = H[k + 1, k + 1] = H[k, k + 1] = H[k + 1, k] = True
        H[N + 1 + k, N + 1 + k] = True
        J = np.zeros((N + 1, n), dtype=bool)
        J[k, k] = J[k, k + 1] = J[k + 1, k] = J[k + 1, k + 1] = True
        J[k, N + 1 + k] = J[k + 1, N + 1 + k] = True
        J = J[: self.n_con]
        m = J.shape[0]
        K = np.zeros((n + m, n + m), dtype=bool)
        K[:n, :n] = H
        K[:n, n:] = J.T
        K[n:, :n] = J
        K[n:, n:] = np.eye(m, dtype=bool)
        M = H | ((J.T.astype(int) @ J.astype(int)) > 0)
        return (_band_width(K[np.ix_(self.order_kkt, self.order_kkt)]),
                _band_width(M[np.ix_(self.order_x, self.order_x)]))

    # -- helpers -----------------------------------------------------------------------

    def split(self, x):
        return x[: self.N + 1], x[self.N + 1:]

    def pack(self, q, tau):
        return np.concatenate([q, tau])

    def _intervals(self, x, derivatives=True):
        q, tau = self.split(x)
        a, b = q[:-1], q[1:]
        qbar = 0.5 * (a + b)
        v = (b - a) / self.h
        if self.contact is None:
            C = Cq = Cv = np.zeros(self.N)
        elif derivatives or not hasattr(self.contact, "value"):
            C, Cq, Cv = self.contact(qbar, v)
        else:
            C, Cq, Cv = self.contact.value(qbar, v), None, None
        return q, tau, qbar, v, C, Cq, Cv

    # -- objective -----------------------------------------------------------------------

    def objective(self, x) -> float:
        q, tau = self.split(x)
        v = np.diff(q) / self.h
        return float(np.sum(self.h * (self.w_tau * tau * tau + self.w_T * 0.5 * self.inertia * v * v)))

    def objective_gradient(self, x) -> np.ndarray:
        q, tau = self.split(x)
        v = np.diff(q) / self.h
        gv = self.w_T * self.inertia * v
        gq = np.zeros(self.N + 1)
        gq[:-1] -= gv
        gq[1:] += gv
        return self.pack(gq, 2.0 * self.h * self.w_tau * tau)

    def objective_hessian(self) -> np.ndarray:
        H = np.zeros((self.n, self.n))
        k = np.arange(self.N)
        c = self.w_T * self.inertia / self.h
        H[k, k] += c
        H[k + 1, k + 1] += c
        H[k, k + 1] -= c
        H[k + 1, k] -= c
        t = self.N + 1 + k
        H[t, t] = 2.0 * self.h * self.w_tau
        return H

    # -- constraints ---------------------------------------------------------------------

    def constraints(self, x) -> np.ndarray:
        q, tau, qbar, v, C, _, _ = self._intervals(x, derivatives=False)
        A = 0.5 * self.h * (self.mgl * np.sin(qbar) + tau + C)
        left = (-self.inertia * v + A) / self.h  # D1 L_d + f^- of interval k
        right = (self.inertia * v + A) / self.h  # D2 L_d + f^+ of interval k
        c = np.zeros(self.N + 1)
        c[:-1] += left
        c[1:] += right
        c[0] += self.inertia * self.qdot0 / self.h
        return c[: self.n_con]

    def _interval_partials(self, x):
        q, tau, qbar, v, C, Cq, Cv = self._intervals(x)
        h = self.h
        Gp = self.mgl * np.cos(qbar)
        dA_da = 0.5 * h * (0.5 * Gp + 0.5 * Cq) - 0.5 * Cv
        dA_db = 0.5 * h * (0.5 * Gp + 0.5 * Cq) + 0.5 * Cv
        return dA_da, dA_db

    def jacobian(self, x) -> np.ndarray:
        dA_da, dA_db = self._interval_partials(x)
        h, I, N = self.h, self.inertia, self.N
        J = np.zeros((N + 1, self.n))
        k = np.arange(N)
        # row k gets (-I v + A)/h, row k+1 gets (I v + A)/h; dv/da = -1/h, dv/db = 1/h
        J[k, k] += (I / h + dA_da) / h
        J[k, k + 1] += (-I / h + dA_db) / h
        J[k + 1, k] += (-I / h + dA_da) / h
        J[k + 1, k + 1] += (I / h + dA_db) / h
        J[k, N + 1 + k] += 0.5
        J[k + 1, N + 1 + k] += 0.5
        return J[: self.n_con]

    def constraint_hessian(self, x, y, fd_step: float = 1e-7) -> np.ndarray:
        """Hessian of ``y @ c(x)``; only the ``q`` block is non-zero (tridiagonal)."""
        yy = np.zeros(self.N + 1)
        yy[: self.n_con] = y
        weight = (yy[:-1] + yy[1:]) / self.h  # multiplies A_k
        q, tau, qbar, v, C, Cq, Cv = self._intervals(x)
        h = self.h
        Gpp = -self.mgl * np.sin(qbar)
        Hqq = Gpp.copy()
        Hqv = np.zeros(self.N)
        Hvv = np.zeros(self.N)
        if self.contact is not None:
            # forward differences of the analytic first derivatives, symmetrised
            _, Cq_p, Cv_p = self.contact(qbar + fd_step, v)
            _, Cq_vp, Cv_vp = self.contact(qbar, v + fd_step)
            Hqq = Hqq + (Cq_p - Cq) / fd_step
            Hvv = (Cv_vp - Cv) / fd_step
            Hqv = 0.5 * ((Cv_p - Cv) + (Cq_vp - Cq)) / fd_step
        # z = (qbar, v) = P (a, b)
        s = 0.5 * h * weight
        haa = s * (0.25 * Hqq - Hqv / h + Hvv / h**2)
        hbb = s * (0.25 * Hqq + Hqv / h + Hvv / h**2)
        hab = s * (0.25 * Hqq - Hvv / h**2)
        H = np.zeros((self.n, self.n))
        k = np.arange(self.N)
        H[k, k] += haa
        H[k + 1, k + 1] += hbb
        H[k, k + 1] += hab
        H[k + 1, k] += hab
        return H

    # -- conversions -------------------------------------------------------------------

    def momenta(self, x) -> np.ndarray:
        """Discrete Legendre momenta at the nodes."""
        q, tau, qbar, v, C, _, _ = self._intervals(x, derivatives=False)
        A = 0.5 * self.h * (self.mgl * np.sin(qbar) + tau + C)
        p = np.empty(self.N + 1)
        p[:-1] = self.inertia * v - A
        p[-1] = self.inertia * v[-1] + A[-1]
        return p

    def trajectory(self, x) -> Trajectory:
        q, tau = self.split(x)
        return Trajectory(self.times.copy(), q.copy(), self.momenta(x) / self.inertia, tau.copy())

    def x_from_trajectory(self, traj: Trajectory) -> np.ndarray:
        if len(traj.q) != self.N + 1 or len(traj.tau) != self.N:
            raise ValueError("warm start dimensions do not match the transcription")
        return self.pack(np.asarray(traj.q, dtype=float), np.asarray(traj.tau, dtype=float))

    def initial_guess(self) -> np.ndarray:
        """Linear ramp from the initial angle to the upper bound, gravity-compensating torque."""
        q0 = self.spec.initial_state.q
        q = np.linspace(q0, self.spec.q_bounds[1], self.N + 1)
        tau = -self.mgl * np.sin(0.5 * (q[:-1] + q[1:]))
        return self.project(self.pack(q, tau))

    def project(self, x) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lb), self.ub)

    def projected_gradient_norm(self, x, g) -> float:
        return float(np.max(np.abs(self.project(x - g) - x))) if len(x) else 0.0

    def least_squares_multipliers(self, x) -> np.ndarray:
        """Multipliers minimising the Lagrangian gradient over the variables off their bounds."""
        free = (x > self.lb + 1e-10) & (x < self.ub - 1e-10)
        J = self.jacobian(x)
        if self.n_con == 0 or not free.any():
            return np.zeros(self.n_con)
        g = self.objective_gradient(x)
        lam, *_ = np.linalg.lstsq(J[:, free].T, -g[free], rcond=None)
        return lam

    def stationarity(self, x, lam=None) -> float:
        """Projected Lagrangian gradient norm, using the better of ``lam`` and least-squares multipliers."""
        g = self.objective_gradient(x)
        J = self.jacobian(x)
        best = self.projected_gradient_norm(x, g + J.T @ self.least_squares_multipliers(x))
        if lam is not None:
            best = min(best, self.projected_gradient_norm(x, g + J.T @ lam))
        return best


def transcribe(spec: OcpSpec) -> Nlp:
    return Nlp(spec)


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    stat_tol: float = 1e-4
    max_outer: int = 40
    max_inner: int = 60
    mu0: float = 10.0
    mu_max: float = 1e12
    armijo: float = 1e-4
    active_eps: float = 1e-12


def _band_width(A) -> int:
    rows, cols = np.nonzero(A)
    return int(np.max(np.abs(rows - cols))) if len(rows) else 0


def _gather_band(A, order, bw):
    """General band storage of ``A[order][:, order]`` as used by ``solve_banded``."""
    n = len(order)
    ab = np.zeros((2 * bw + 1, n))
    for r in range(2 * bw + 1):
        off = r - bw  # row index minus column index
        j = np.arange(max(0, -off), min(n, n - off))
        ab[r, j] = A[order[j + off], order[j]]
    return ab


def _zero_rows_cols(ab, idx, bw):
    """Zero rows and columns ``idx`` of a general band matrix and put 1 on their diagonal."""
    n = ab.shape[1]
    ab[:, idx] = 0.0
    for r in range(2 * bw + 1):
        j = idx - (r - bw)
        ok = (j >= 0) & (j < n)
        ab[r, j[ok]] = 0.0
    ab[bw, idx] = 1.0


def _band_matvec(ab, x, bw):
    n = ab.shape[1]
    y = np.zeros(n)
    for r in range(2 * bw + 1):
        off = r - bw
        j = np.arange(max(0, -off), min(n, n - off))
        y[j + off] += ab[r, j] * x[j]
    return y


def _is_positive_definite_banded(ab) -> bool:
    try:
        scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return False
    return True


class _BoxQp:
    """``min 1/2 d'(H + mu J'J)d + (g_obj + mu J'c)'d`` over the box ``lo <= d <= hi``.

    Steps solve the augmented system ``[[H, J'], [J, -I/mu]]``, whose
    conditioning does not degrade with ``mu``.  Unknowns are interleaved
    per node (``q_k, tau_k, c_k``) so both that system and ``H + mu J'J`` are
    banded; both are kept in band storage.  ``H`` is shifted by ``delta I``
    until ``H + mu J'J`` is positive definite on the free variables.
    """

    def __init__(self, H, J, g_obj, c, mu, nlp):
        self.H, self.J, self.g_obj, self.c, self.mu = H, J, g_obj, c, mu
        self.delta = 0.0
        self.scale = max(float(np.abs(np.diag(H)).max()), 1e-8)
        n, m = H.shape[0], J.shape[0]
        self.n, self.m = n, m
        self.order_x = order_x = nlp.order_x
        self.order_kkt = order_kkt = nlp.order_kkt
        self.bw_kkt, self.bw_M = nlp.bw_kkt, nlp.bw_M
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = J.T
        K[n:, :n] = J
        K[n:, n:] = -np.eye(m) / mu
        self.K_band = _gather_band(K, order_kkt, self.bw_kkt)
        # lower band of the permuted H + mu J'J
        Jp = J[:, order_x]
        self.M_band = np.zeros((self.bw_M + 1, n))
        for off in range(self.bw_M + 1):
            j = np.arange(n - off)
            self.M_band[off, j] = H[order_x[j + off], order_x[j]] + mu * np.einsum(
                "rj,rj->j", Jp[:, off:], Jp[:, : n - off])
        self.pos_x = np.empty(n, dtype=int)
        self.pos_x[order_x] = np.arange(n)
        self.pos_kkt = np.empty(n + m, dtype=int)
        self.pos_kkt[order_kkt] = np.arange(n + m)

    def _solve_free(self, free, d_fixed):
        n, m = self.n, self.m
        fix = ~free
        fix_k = self.pos_kkt[np.flatnonzero(fix)]
        fx = self.pos_x[np.flatnonzero(fix)]
        free_x = free[self.order_x]
        for _ in range(80):
            M = self.M_band.copy()
            M[:, fx] = 0.0
            for off in range(1, self.bw_M + 1):
                j = fx - off
                M[off, j[j >= 0]] = 0.0
            M[0, fx] = 1.0
            M[0] += self.delta * free_x
            if _is_positive_definite_banded(M):
                break
            self.delta = max(4.0 * self.delta, 1e-8 * self.scale)
        else:
            raise np.linalg.LinAlgError("could not convexify the Newton system")
        rhs = np.concatenate([-self.g_obj, -self.c])
        full_fixed = np.zeros(n + m)
        full_fixed[:n][fix] = d_fixed[fix]
        fixed_p = full_fixed[self.order_kkt]
        K = self.K_band.copy()
        K[self.bw_kkt] += self.delta * np.concatenate([free, np.zeros(m, dtype=bool)])[self.order_kkt]
        rhs_p = rhs[self.order_kkt] - _band_matvec(K, fixed_p, self.bw_kkt)
        _zero_rows_cols(K, fix_k, self.bw_kkt)
        rhs_p[fix_k] = fixed_p[fix_k]
        sol_p = scipy.linalg.solve_banded((self.bw_kkt, self.bw_kkt), K, rhs_p, check_finite=False)
        sol = np.empty(n + m)
        sol[self.order_kkt] = sol_p
        return sol[:n], sol[n:]

    def gradient(self, d, w):
        return (self.H + self.delta * np.eye(self.n)) @ d + self.J.T @ w + self.g_obj

    def solve(self, lo, hi, fixed, at_lo, at_hi, max_iter=200):
        at_lo, at_hi = at_lo & ~fixed, at_hi & ~fixed
        d = np.zeros(self.n)
        for _ in range(max_iter):
            d0 = np.zeros(self.n)
            d0[at_lo] = lo[at_lo]
            d0[at_hi] = hi[at_hi]
            d0[fixed] = 0.0
            free = ~(fixed | at_lo | at_hi)
            d, w = self._solve_free(free, d0)
            below = free & (d < lo)
            above = free & (d > hi)
            if below.any() or above.any():
                at_lo |= below
                at_hi |= above
                continue
            z = self.gradient(d, w)
            release = (at_lo & (z < 0)) | (at_hi & (z > 0))
            if not release.any():
                break
            at_lo &= ~release
            at_hi &= ~release
        return np.clip(d, lo, hi), at_lo, at_hi


def _inner(nlp: Nlp, x, lam, mu, omega, opts: SolverOptions, H_f):
    """Minimise the augmented Lagrangian over the box by Newton steps.

    Each step solves the box-constrained quadratic model exactly, so the
    trial points ``x + alpha d`` stay feasible for ``alpha`` in ``[0, 1]``.
    """

    def merit(z):
        c = nlp.constraints(z)
        return nlp.objective(z) + lam @ c + 0.5 * mu * (c @ c)

    fixed = nlp.lb == nlp.ub
    at_lo = at_hi = None
    iters = 0
    for iters in range(1, opts.max_inner + 1):
        c = nlp.constraints(x)
        J = nlp.jacobian(x)
        g_obj = nlp.objective_gradient(x) + J.T @ lam
        g = g_obj + mu * (J.T @ c)
        if nlp.projected_gradient_norm(x, g) <= omega:
            return x, iters - 1
        H_L = H_f + nlp.constraint_hessian(x, lam + mu * c)
        lo, hi = nlp.lb - x, nlp.ub - x
        tight = opts.active_eps
        if at_lo is None:
            at_lo, at_hi = (lo >= -tight) & (g > 0), (hi <= tight) & (g < 0)
        else:
            at_lo, at_hi = at_lo & (lo >= -tight), at_hi & (hi <= tight)
        qp = _BoxQp(H_L, J, g_obj, c, mu, nlp)
        d, at_lo, at_hi = qp.solve(lo, hi, fixed, at_lo, at_hi)
        m0 = merit(x)
        slope = g @ d
        alpha = 1.0
        accepted = False
        for _ in range(50):
            x_new = nlp.project(x + alpha * d)
            if merit(x_new) <= m0 + opts.armijo * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5
        log.debug("inner %d: merit %.15e pg %.2e alpha %.1e slope %.2e", iters, m0,
                  nlp.projected_gradient_norm(x, g), alpha, slope)
        if not accepted or np.array_equal(x_new, x):
            return x, iters
        x = x_new
    return x, iters


def solve(nlp: Nlp, warm_start: Trajectory | None = None, tol: SolverOptions | None = None):
    """Augmented Lagrangian solve; returns ``(Trajectory, SolveReport)``.

    Never raises on non-convergence: the iterate with the smallest constraint
    violation is returned with ``converged = False``.
    """
    opts = tol or SolverOptions()
    if warm_start is not None:
        x = nlp.project(nlp.x_from_trajectory(warm_start))
    else:
        x = nlp.initial_guess()
    H_f = nlp.objective_hessian()
    lam = np.zeros(nlp.n_con)
    mu = opts.mu0
    omega = 1e-2
    eta = 1e-1
    total_inner = 0
    best = None

    def kkt(z, multipliers):
        c = nlp.constraints(z)
        return float(np.max(np.abs(c))) if len(c) else 0.0, nlp.stationarity(z, multipliers)

    outer = 0
    viol, stat = kkt(x, lam)
    for outer in range(1, opts.max_outer + 1):
        x, n_inner = _inner(nlp, x, lam, mu, omega, opts, H_f)
        total_inner += n_inner
        c = nlp.constraints(x)
        viol = float(np.max(np.abs(c))) if len(c) else 0.0
        if viol <= eta or viol <= opts.feas_tol:
            lam = lam + mu * c
            eta = max(eta / mu**0.9, opts.feas_tol)
            omega = max(omega / mu, 0.1 * opts.stat_tol)
        else:
            mu = min(mu * 10.0, opts.mu_max)
            eta = max(0.1 / mu**0.1, opts.feas_tol)
            omega = max(1e-2 / mu, 0.1 * opts.stat_tol)
        viol, stat = kkt(x, lam)
        f = nlp.objective(x)
        if best is None or viol < best[1] or (viol <= opts.feas_tol and stat < best[2]):
            best = (x.copy(), viol, stat, f)
        log.debug("outer %d: viol %.3e stat %.3e mu %.1e inner %d", outer, viol, stat, mu, n_inner)
        if viol <= opts.feas_tol and stat <= opts.stat_tol * (1.0 + abs(f)):
            break
    x_best, viol, stat, f = best if best is not None else (x, viol, stat, nlp.objective(x))
    converged = bool(viol <= opts.feas_tol and stat <= opts.stat_tol * (1.0 + abs(f)))
    report = SolveReport(converged, total_inner, viol, stat, f, outer,
                         "converged" if converged else "iteration limit reached")
    return nlp.trajectory(x_best), report


def default_task(params: ModelParams | None = None, contact_model=None, h: float = 0.01) -> OcpSpec:
    """Move the head from its 0.232 rad rest pose onto the headrest within 2 s."""
    params = params or ModelParams()
    return OcpSpec(
        t0=0.0,
        tF=2.0,
        h=h,
        phases=[Phase(0.0, 1.0, 1e-3, 1e-4), Phase(1.0, 2.0, 1.0, 1.0)],
        tau_bound=30.0,
        q_bounds=(params.q_min, params.q_max),
        initial_state=State(0.232, 0.0),
        params=params,
        terminal_rest=True,
        contact_model=contact_model,
    )


TRAJECTORY_COLUMNS = ["time", "q", "qdot", "tau"]


def write_trajectory_csv(path, traj: Trajectory) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(traj.times)):
            tau = fmt(traj.tau[k]) if k < len(traj.tau) else ""
            w.writerow([fmt(traj.times[k]), fmt(traj.q[k]), fmt(traj.qdot[k]), tau])
    os.replace(tmp, path)


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected trajectory CSV header")
        rows = list(reader)
    t = [float(r[0]) for r in rows]
    q = [float(r[1]) for r in rows]
    qd = [float(r[2]) for r in rows]
    tau = [float(r[3]) for r in rows[:-1]]
    return Trajectory(t, q, qd, tau)
