"""Optimal trajectory tracking as a two-point boundary-value problem.

The tracked system follows the controlled reduced dynamics; the cost
penalizes position error, velocity error, and control effort (weight
epsilon), plus a weighted terminal error (weight omega). Minimizing the
pointwise Hamiltonian eliminates the control (u = -mu/epsilon), leaving a
coupled state-costate flow whose unknown initial costate alpha is fixed by
a terminal residual; root-finding on that residual lives in `shooting`.

Two adjoint variants are provided. 'derived' integrates the exact
negative gradient of the Hamiltonian (finite-difference checked in the
test suite); 'paper-literal' integrates the particle's costate equations
in their as-printed form, which differs from the gradient in three terms
and is kept for side-by-side comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Tuple

import numpy as np

from . import kernels
from .errors import ContractError, SingularProblemError
from .geometry import (
    AdaptedState,
    NonholonomicSystem,
    admissible_velocity,
    constraint_residual,
    controlled_acceleration,
)
from .integrators import Trajectory, VectorField, integrate
from .particle import PARTICLE_NAME, analytic_constants, analytic_flow

Array = np.ndarray
RefSample = Tuple[Array, Array]

ADJOINT_MODES = ("derived", "paper-literal")

KIND_LINE = "builtin-constant-z-line"
KIND_FREE_FLOW = "free-flow"
KIND_TABULATED = "tabulated"


@dataclass(frozen=True)
class Costate:
    """Multipliers conjugate to the base point (lam, n) and fiber (mu, k)."""

    lam: Array
    mu: Array

    def __post_init__(self):
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float))


@dataclass(frozen=True)
class CoupledState:
    """State plus costate, flattened as [q, v, lam, mu] for integration."""

    s: AdaptedState
    p: Costate

    def flatten(self) -> Array:
        return np.concatenate([self.s.q, self.s.v, self.p.lam, self.p.mu])

    @classmethod
    def from_flat(cls, z: Array, n: int, k: int) -> "CoupledState":
        z = np.asarray(z, dtype=float)
        if z.shape != (2 * (n + k),):
            raise ContractError(f"flat coupled state must have length {2 * (n + k)}")
        return cls(
            s=AdaptedState(q=z[:n], v=z[n : n + k]),
            p=Costate(lam=z[n + k : 2 * n + k], mu=z[2 * n + k :]),
        )


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Sampled target curve t -> (q_r, v_r), with its construction kind."""

    kind: str
    sample: Callable[[float], RefSample]


def constant_z_line(x_r: float = 1.0, z_offset: float = 1.0, speed: float = 1.0) -> ReferenceTrajectory:
    """Reference gliding along z at constant speed, pinned to y=0.

    q_r(t) = (x_r, 0, z_offset + speed*t), v_r = (0, speed). Lies on the
    particle's distribution (the constraint coupling vanishes at y=0) and
    solves its free dynamics.
    """

    def sample(t: float) -> RefSample:
        return np.array([x_r, 0.0, z_offset + speed * t]), np.array([0.0, speed])

    return ReferenceTrajectory(kind=KIND_LINE, sample=sample)


def free_flow(s0: AdaptedState) -> ReferenceTrajectory:
    """Reference generated by the particle's closed-form uncontrolled flow."""
    params = analytic_constants(s0)

    def sample(t: float) -> RefSample:
        s = analytic_flow(params, t)
        return s.q, s.v

    return ReferenceTrajectory(kind=KIND_FREE_FLOW, sample=sample)


def tabulated(times: Array, samples: Array) -> ReferenceTrajectory:
    """Reference interpolated linearly from rows (q_r, v_r) on a time grid.

    Queries outside the grid clamp to the end values.
    """
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if times.ndim != 1 or samples.shape[0] != times.shape[0]:
        raise ContractError("tabulated reference needs one sample row per time")
    if np.any(np.diff(times) <= 0):
        raise ContractError("tabulated reference times must increase strictly")
    ncols = samples.shape[1]

    def sample(t: float) -> RefSample:
        row = np.array([np.interp(t, times, samples[:, j]) for j in range(ncols)])
        return row[:3], row[3:]

    return ReferenceTrajectory(kind=KIND_TABULATED, sample=sample)


def reference_distribution_defect(
    sys: NonholonomicSystem, ref: ReferenceTrajectory, times: Array
) -> float:
    """Worst constraint residual of the reference's induced velocity.

    Fiber velocities induce base velocities through the frame, so this is
    zero up to roundoff for any sample whatsoever; it confirms the frame
    algebra, not the reference. See reference_admissibility_defect for the
    check with content.
    """
    worst = 0.0
    for t in np.asarray(times, dtype=float):
        q_r, v_r = ref.sample(float(t))
        qdot = sys.frame.rho(q_r).T @ v_r
        worst = max(worst, float(np.max(np.abs(constraint_residual(sys, q_r, qdot)))))
    return worst


def reference_admissibility_defect(
    sys: NonholonomicSystem,
    ref: ReferenceTrajectory,
    times: Array,
    fd_step: float = 1e-4,
) -> float:
    """Worst kinematic defect |d/dt q_r - rho(q_r)^T v_r| over the times.

    An admissible reference curve must move its base point exactly as its
    fiber velocities dictate; this differentiates the base path centrally
    and compares.
    """
    worst = 0.0
    for t in np.asarray(times, dtype=float):
        q_p, _ = ref.sample(float(t) + fd_step)
        q_m, _ = ref.sample(float(t) - fd_step)
        q_dot = (q_p - q_m) / (2.0 * fd_step)
        q_r, v_r = ref.sample(float(t))
        worst = max(worst, float(np.max(np.abs(q_dot - sys.frame.rho(q_r).T @ v_r))))
    return worst


@dataclass(frozen=True)
class TrackingProblem:
    """A complete tracking instance over a fixed horizon.

    epsilon > 0 weights the control effort (zero is rejected: the
    stationary condition would no longer determine the control), omega > 0
    weights the terminal error. N is the integration step count.

    full_transversality selects the terminal rows of the shooting
    residual. True (default) imposes the gradient of the terminal cost on
    both costates, lam(T) = 2*omega*(q(T)-q_r(T)) and mu(T) =
    2*omega*(v(T)-v_r(T)), which is the condition the minimization
    actually requires; the resulting trajectory matches direct transcription
    of the cost to within discretization error. False keeps the simplified
    as-printed rows lam(T) = -omega*(q(T)-q_r(T)), mu(T) = 0, whose root
    is a non-minimizing extremal kept for comparison.
    """

    sys: NonholonomicSystem
    ref: ReferenceTrajectory
    epsilon: float
    T: float
    s0: AdaptedState
    omega: float = 1.0
    N: int = 4000
    adjoint_mode: str = "derived"
    full_transversality: bool = True

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise SingularProblemError(
                "epsilon must be positive; epsilon = 0 makes the tracking "
                "problem singular (control undetermined by stationarity)"
            )
        if self.omega <= 0.0:
            raise ContractError("omega must be positive")
        if self.T <= 0.0:
            raise ContractError("horizon T must be positive")
        if self.N < 1:
            raise ContractError("step count N must be at least 1")
        if self.adjoint_mode not in ADJOINT_MODES:
            raise ContractError(f"adjoint_mode must be one of {ADJOINT_MODES}")
        if self.s0.q.shape != (self.sys.n,) or self.s0.v.shape != (self.sys.k,):
            raise ContractError("initial state dimensions do not match system")
        if self.ref.kind in (KIND_LINE, KIND_FREE_FLOW):
            # sample away from the endpoints so the FD probe stays in [0, T]
            probe = np.linspace(0.01 * self.T, 0.99 * self.T, 7)
            defect = reference_admissibility_defect(self.sys, self.ref, probe)
            if defect > 1e-6:
                raise ContractError(
                    f"reference is not an admissible curve (kinematic defect {defect:.3e})"
                )

    @property
    def h(self) -> float:
        return self.T / self.N

    @cached_property
    def _ref_table(self) -> Array:
        """Reference samples on the half grid, shape (2N+1, n+k)."""
        half = 0.5 * self.h
        rows = np.empty((2 * self.N + 1, self.sys.n + self.sys.k))
        for j in range(rows.shape[0]):
            q_r, v_r = self.ref.sample(j * half)
            rows[j, : self.sys.n] = q_r
            rows[j, self.sys.n :] = v_r
        return rows


# ---------------------------------------------------------------------------
# Costs and Hamiltonian
# ---------------------------------------------------------------------------


def running_cost(s: AdaptedState, r: RefSample, u: Array, eps: float) -> float:
    """Instantaneous cost (|q-q_r|^2 + |v-v_r|^2 + eps |u|^2) / 2."""
    if eps <= 0.0:
        raise SingularProblemError("eps must be positive")
    q_r, v_r = r
    u = np.asarray(u, dtype=float)
    return 0.5 * (
        float(np.sum((s.q - q_r) ** 2))
        + float(np.sum((s.v - v_r) ** 2))
        + eps * float(np.sum(u**2))
    )


def terminal_cost(sT: AdaptedState, rT: RefSample) -> float:
    """Terminal penalty |q(T)-q_r|^2 + |v(T)-v_r|^2 (no 1/2 factor)."""
    q_r, v_r = rT
    return float(np.sum((sT.q - q_r) ** 2)) + float(np.sum((sT.v - v_r) ** 2))


def hamiltonian(
    sys: NonholonomicSystem,
    s: AdaptedState,
    p: Costate,
    u: Array,
    r: RefSample,
    eps: float,
) -> float:
    """Pointwise Hamiltonian: running cost plus costates paired with dynamics."""
    qdot = admissible_velocity(sys, s)
    vdot = controlled_acceleration(sys, s, u)
    return running_cost(s, r, u, eps) + float(p.lam @ qdot) + float(p.mu @ vdot)


def stationary_control(p: Costate, eps: float) -> Array:
    """Control minimizing the Hamiltonian: u = -mu/eps (exact quadratic)."""
    if eps <= 0.0:
        raise SingularProblemError(
            "eps must be positive: the stationary condition degenerates at eps = 0"
        )
    return -p.mu / eps


def hamiltonian_control_gradient(p: Costate, u: Array, eps: float) -> Array:
    """Gradient of the Hamiltonian in the control: eps*u + mu."""
    return eps * np.asarray(u, dtype=float) + p.mu


# ---------------------------------------------------------------------------
# Adjoint equations
# ---------------------------------------------------------------------------


def _adjoint_derived(
    sys: NonholonomicSystem, s: AdaptedState, p: Costate, r: RefSample
) -> Costate:
    if sys.d_rho is None or sys.d_gamma is None or sys.d_pforce is None:
        raise ContractError(
            "derived adjoint mode needs the system's closed-form derivatives "
            "(d_rho, d_gamma, d_pforce)"
        )
    q, v = s.q, s.v
    q_r, v_r = r
    rho = sys.frame.rho(q)
    gam = sys.christoffel.gamma(q)
    d_rho = sys.d_rho(q)
    d_gam = sys.d_gamma(q)
    d_pf = sys.d_pforce(q)
    # dH/dq_j = (q-q_r)_j + lam_i d_rho[A,i,j] v^A - mu_C (d_gam[C,A,B,j] v^A v^B + d_pf[C,j])
    dH_dq = (
        (q - q_r)
        + np.einsum("i,aij,a->j", p.lam, d_rho, v)
        - np.einsum("c,cabj,a,b->j", p.mu, d_gam, v, v)
        - p.mu @ d_pf
    )
    # dH/dv_A = (v-v_r)_A + lam_i rho[A,i] - mu_C (gam[C,A,B] + gam[C,B,A]) v^B
    dH_dv = (
        (v - v_r)
        + rho @ p.lam
        - np.einsum("c,cab,b->a", p.mu, gam + gam.transpose(0, 2, 1), v)
    )
    return Costate(lam=-dH_dq, mu=-dH_dv)


def _adjoint_paper_literal(
    s: AdaptedState, p: Costate, r: RefSample, eps: float
) -> Costate:
    x, y, z = s.q
    v1, v2 = s.v
    l1, l2, l3 = p.lam
    m1, m2 = p.mu
    q_r, v_r = r
    w = 1.0 + y * y
    f = y / w
    lam_dot = np.array(
        [
            -(x - q_r[0]),
            l1 * v2 - (y - q_r[1]) + eps * v1 * v2 * m2 * (y * y - 1.0) / (w * w),
            -(z - q_r[2]),
        ]
    )
    mu_dot = np.array(
        [
            -l2 - (v1 - v_r[0]) - m2 * f * v2,
            -l3 + l1 * y - (v2 - v_r[1]) - m2 * f * v1,
        ]
    )
    return Costate(lam=lam_dot, mu=mu_dot)


def adjoint_field(
    sys: NonholonomicSystem,
    s: AdaptedState,
    p: Costate,
    r: RefSample,
    eps: float,
    mode: str = "derived",
) -> Costate:
    """Costate time derivative (lam_dot, mu_dot).

    'derived' evaluates -(dH/dq, dH/dv) with the control held at its
    stationary value (whose sensitivity drops out since dH/du = 0 there).
    'paper-literal' is the as-printed variant for the bundled particle;
    it deviates from the gradient in the lam_2 coupling term (an extra
    eps factor and an opposite sign) and in the sign of both mu coupling
    terms.
    """
    if mode == "derived":
        return _adjoint_derived(sys, s, p, r)
    if mode == "paper-literal":
        if sys.name != PARTICLE_NAME:
            raise ContractError("paper-literal adjoint mode is specific to the particle")
        return _adjoint_paper_literal(s, p, r, eps)
    raise ContractError(f"unknown adjoint mode {mode!r}")


# ---------------------------------------------------------------------------
# Coupled flow, shooting residual, cost reporting
# ---------------------------------------------------------------------------


def coupled_field(t: float, z: Array, prob: TrackingProblem) -> Array:
    """Right-hand side of the combined state-costate system, flat layout."""
    n, k = prob.sys.n, prob.sys.k
    cs = CoupledState.from_flat(z, n, k)
    u = stationary_control(cs.p, prob.epsilon)
    r = prob.ref.sample(t)
    qdot = admissible_velocity(prob.sys, cs.s)
    vdot = controlled_acceleration(prob.sys, cs.s, u)
    pdot = adjoint_field(prob.sys, cs.s, cs.p, r, prob.epsilon, prob.adjoint_mode)
    return np.concatenate([qdot, vdot, pdot.lam, pdot.mu])


def integrate_coupled(prob: TrackingProblem, alpha: Array) -> Trajectory:
    """Flow of the coupled system from (s0, alpha) over [0, T].

    Dispatches to the compiled particle kernel when possible, otherwise
    to the generic integrator over `coupled_field`.
    """
    alpha = np.asarray(alpha, dtype=float)
    n, k = prob.sys.n, prob.sys.k
    if alpha.shape != (n + k,):
        raise ContractError(f"alpha must have length {n + k}")
    z0 = np.concatenate([prob.s0.q, prob.s0.v, alpha])
    h = prob.h
    times = h * np.arange(prob.N + 1)
    if prob.sys.name == PARTICLE_NAME:
        states = kernels.rollout_coupled(
            z0,
            h,
            prob.N,
            prob._ref_table,
            prob.epsilon,
            prob.adjoint_mode == "paper-literal",
        )
        return Trajectory(times=times, states=states)
    vf = VectorField(dim=2 * (n + k), f=lambda t, z: coupled_field(t, z, prob))
    return integrate(vf, 0.0, z0, prob.T, prob.N)


def shooting_residual(alpha: Array, prob: TrackingProblem) -> Array:
    """Terminal defect of the coupled flow started at costate alpha.

    With full_transversality (default), the rows are the transversality
    defects lam(T) - 2*omega*(q(T)-q_r(T)) and mu(T) - 2*omega*(v(T)-v_r(T)).
    Otherwise the simplified rows lam(T) + omega*(q(T)-q_r(T)) and mu(T)
    are used verbatim.
    """
    traj = integrate_coupled(prob, alpha)
    return residual_from_trajectory(traj, prob)


def residual_from_trajectory(traj: Trajectory, prob: TrackingProblem) -> Array:
    """Assemble the shooting residual from an already-integrated flow."""
    n, k = prob.sys.n, prob.sys.k
    zT = traj.final_state()
    qT, vT = zT[:n], zT[n : n + k]
    lamT, muT = zT[n + k : 2 * n + k], zT[2 * n + k :]
    q_rT, v_rT = prob.ref.sample(prob.T)
    if prob.full_transversality:
        rows_q = lamT - 2.0 * prob.omega * (qT - q_rT)
        rows_v = muT - 2.0 * prob.omega * (vT - v_rT)
    else:
        rows_q = lamT + prob.omega * (qT - q_rT)
        rows_v = muT.copy()
    return np.concatenate([rows_q, rows_v])


def controls_along(traj: Trajectory, prob: TrackingProblem) -> Array:
    """Stationary control -mu/eps recovered at every grid point."""
    n, k = prob.sys.n, prob.sys.k
    mu = traj.states[:, 2 * n + k :]
    return -mu / prob.epsilon


def total_cost(traj: Trajectory, prob: TrackingProblem) -> float:
    """Composite-trapezoid running cost along a coupled trajectory plus
    the omega-weighted terminal cost."""
    n, k = prob.sys.n, prob.sys.k
    u = controls_along(traj, prob)
    values = np.empty(traj.times.shape[0])
    for i, t in enumerate(traj.times):
        s = AdaptedState(q=traj.states[i, :n], v=traj.states[i, n : n + k])
        values[i] = running_cost(s, prob.ref.sample(float(t)), u[i], prob.epsilon)
    integral = float(np.trapezoid(values, traj.times))
    sT = AdaptedState(q=traj.states[-1, :n], v=traj.states[-1, n : n + k])
    return integral + prob.omega * terminal_cost(sT, prob.ref.sample(prob.T))


def uncontrolled_trajectory(prob: TrackingProblem) -> Trajectory:
    """Free (u = 0) flow of the state alone from s0 on the problem grid."""
    n, k = prob.sys.n, prob.sys.k
    h = prob.h
    times = h * np.arange(prob.N + 1)
    if prob.sys.name == PARTICLE_NAME:
        x0 = np.concatenate([prob.s0.q, prob.s0.v])
        states = kernels.rollout_reduced(x0, h, prob.N)
        return Trajectory(times=times, states=states)

    def f(t, x):
        s = AdaptedState(q=x[:n], v=x[n:])
        return np.concatenate(
            [admissible_velocity(prob.sys, s), controlled_acceleration(prob.sys, s, np.zeros(k))]
        )

    return integrate(VectorField(dim=n + k, f=f), 0.0,
                     np.concatenate([prob.s0.q, prob.s0.v]), prob.T, prob.N)


def uncontrolled_cost(prob: TrackingProblem) -> float:
    """Cost of simply letting the system drift (u = 0) from s0."""
    traj = uncontrolled_trajectory(prob)
    n, k = prob.sys.n, prob.sys.k
    zero_u = np.zeros(k)
    values = np.empty(traj.times.shape[0])
    for i, t in enumerate(traj.times):
        s = AdaptedState(q=traj.states[i, :n], v=traj.states[i, n:])
        values[i] = running_cost(s, prob.ref.sample(float(t)), zero_u, prob.epsilon)
    integral = float(np.trapezoid(values, traj.times))
    sT = AdaptedState(q=traj.states[-1, :n], v=traj.states[-1, n:])
    return integral + prob.omega * terminal_cost(sT, prob.ref.sample(prob.T))


def benchmark_problem(
    epsilon: float = 7.0,
    omega: float = 1.0,
    T: float = 4.0,
    N: int = 4000,
    adjoint_mode: str = "derived",
    full_transversality: bool = True,
) -> TrackingProblem:
    """The bundled benchmark: particle from ((0.5, 0.2, 0.7), (0.5, 0.4))
    tracking the constant-z-line reference (1, 0, t+1, 0, 1)."""
    from .particle import particle_system

    return TrackingProblem(
        sys=particle_system(),
        ref=constant_z_line(x_r=1.0, z_offset=1.0, speed=1.0),
        epsilon=epsilon,
        omega=omega,
        T=T,
        s0=AdaptedState(q=np.array([0.5, 0.2, 0.7]), v=np.array([0.5, 0.4])),
        N=N,
        adjoint_mode=adjoint_mode,
        full_transversality=full_transversality,
    )
