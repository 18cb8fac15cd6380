"""The benchmark system: a free particle on R^3 constrained by xdot + y*zdot = 0.

The distribution is spanned by Y1 = d/dy and Y2 = d/dz - y d/dx, giving
induced coordinates (x, y, z, v1, v2). In this frame the only nonzero
connection coefficient is Gamma^2_12 = y / (1 + y^2) and the restricted
metric is diag(1, 1 + y^2); there is no potential.

Two independent oracles accompany the reduced dynamics:

* the closed-form flow of the uncontrolled equations (with its separate
  zero-v1 branch, where the generic antiderivatives degenerate), and
* the unreduced Lagrange-multiplier dynamics in ambient coordinates
  (x, y, z, vx, vy, vz), tied to the reduced picture by embed/project.

In the closed form, x(t) and z(t) come from direct quadrature of
xdot = -y v2 and zdot = v2; a finite-difference residual test pins down
that the expressions actually solve the reduced equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolationError
from .geometry import (
    AdaptedFrame,
    AdaptedState,
    ChristoffelField,
    NonholonomicSystem,
    PotentialGradient,
    RestrictedMetricField,
)

Array = np.ndarray

PARTICLE_NAME = "nonholonomic-particle"

# |v1(0)| at or below this uses the constant-y branch of the closed form.
C1_SWITCH = 1e-10

# Default admissible constraint defect when projecting ambient states.
DRIFT_TOL = 1e-8


def _rho(q: Array) -> Array:
    y = q[1]
    return np.array([[0.0, 1.0, 0.0], [-y, 0.0, 1.0]])


def _d_rho(q: Array) -> Array:
    d = np.zeros((2, 3, 3))
    d[1, 0, 1] = -1.0  # d rho_2^x / dy
    return d


def _gamma(q: Array) -> Array:
    y = q[1]
    g = np.zeros((2, 2, 2))
    g[1, 0, 1] = y / (1.0 + y * y)
    return g


def _d_gamma(q: Array) -> Array:
    y = q[1]
    w = 1.0 + y * y
    d = np.zeros((2, 2, 2, 3))
    d[1, 0, 1, 1] = (1.0 - y * y) / (w * w)
    return d


def _metric(q: Array) -> Array:
    y = q[1]
    return np.array([[1.0, 0.0], [0.0, 1.0 + y * y]])


def _metric_inv(q: Array) -> Array:
    y = q[1]
    return np.array([[1.0, 0.0], [0.0, 1.0 / (1.0 + y * y)]])


def _annihilator(q: Array) -> Array:
    return np.array([[1.0, 0.0, q[1]]])


def particle_system() -> NonholonomicSystem:
    """Construct the constrained-particle system (n=3, k=2, V=0)."""
    return NonholonomicSystem(
        frame=AdaptedFrame(n=3, k=2, rho=_rho),
        christoffel=ChristoffelField(gamma=_gamma),
        metric=RestrictedMetricField(g=_metric, g_inv=_metric_inv),
        potential=PotentialGradient(dV=lambda q: np.zeros(3)),
        constraint_annihilator=_annihilator,
        d_rho=_d_rho,
        d_gamma=_d_gamma,
        d_pforce=lambda q: np.zeros((2, 3)),
        name=PARTICLE_NAME,
    )


def restricted_energy(s: AdaptedState) -> float:
    """Kinetic energy in the adapted frame: (v1^2 + (1+y^2) v2^2) / 2."""
    y = s.q[1]
    return 0.5 * (s.v[0] ** 2 + (1.0 + y * y) * s.v[1] ** 2)


# ---------------------------------------------------------------------------
# Closed-form flow
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticParams:
    """Integration constants of the uncontrolled flow.

    c1 is the (conserved) first fiber velocity; c2 scales the second one so
    that v2(t) = c2 / sqrt(y(t)^2 + 1).
    """

    c1: float
    c2: float
    x0: float
    y0: float
    z0: float


def analytic_constants(s0: AdaptedState) -> AnalyticParams:
    """Constants reproducing s0 at t=0: c1 = v1(0), c2 = v2(0) sqrt(y0^2+1)."""
    x0, y0, z0 = s0.q
    return AnalyticParams(
        c1=float(s0.v[0]),
        c2=float(s0.v[1]) * float(np.sqrt(y0 * y0 + 1.0)),
        x0=float(x0),
        y0=float(y0),
        z0=float(z0),
    )


def analytic_flow(p: AnalyticParams, t: float) -> AdaptedState:
    """Exact uncontrolled state at time t.

    Generic branch (|c1| > C1_SWITCH):
        y = y0 + c1 t,   v1 = c1,   v2 = c2 / sqrt(y^2 + 1),
        x = x0 + (c2/c1) (sqrt(y0^2+1) - sqrt(y^2+1)),
        z = z0 + (c2/c1) (asinh(y) - asinh(y0)).
    Constant-y branch (|c1| <= C1_SWITCH): y frozen at y0, v2 constant,
    x and z linear in t.
    """
    if abs(p.c1) > C1_SWITCH:
        y = p.y0 + p.c1 * t
        r0 = np.sqrt(p.y0 * p.y0 + 1.0)
        r = np.sqrt(y * y + 1.0)
        x = p.x0 + (p.c2 / p.c1) * (r0 - r)
        z = p.z0 + (p.c2 / p.c1) * (np.arcsinh(y) - np.arcsinh(p.y0))
        return AdaptedState(q=np.array([x, y, z]), v=np.array([p.c1, p.c2 / r]))
    v2 = p.c2 / np.sqrt(p.y0 * p.y0 + 1.0)
    x = p.x0 - p.y0 * v2 * t
    z = p.z0 + v2 * t
    return AdaptedState(q=np.array([x, p.y0, z]), v=np.array([0.0, v2]))


# ---------------------------------------------------------------------------
# Unreduced Lagrange-multiplier dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AmbientState:
    """Ambient position q = (x, y, z) and velocity vq = (vx, vy, vz)."""

    q: Array
    vq: Array

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "vq", np.asarray(self.vq, dtype=float))


def multiplier(s: AmbientState) -> float:
    """Constraint multiplier lambda = -vz vy / (1 + y^2).

    Chosen so d/dt (vx + y vz) vanishes identically along the flow.
    """
    y = s.q[1]
    return -s.vq[2] * s.vq[1] / (1.0 + y * y)


def unreduced_field(s: AmbientState) -> AmbientState:
    """Time derivative of an ambient state under the multiplier dynamics.

    Returned in the same container: .q holds (xdot, ydot, zdot) and .vq
    holds (vxdot, vydot, vzdot) = (lambda, 0, y lambda).
    """
    lam = multiplier(s)
    return AmbientState(q=s.vq.copy(), vq=np.array([lam, 0.0, s.q[1] * lam]))


def embed(s: AdaptedState) -> AmbientState:
    """Ambient representative: (vx, vy, vz) = (-y v2, v1, v2)."""
    y = s.q[1]
    return AmbientState(q=s.q.copy(), vq=np.array([-y * s.v[1], s.v[0], s.v[1]]))


def project(a: AmbientState, drift_tol: float = DRIFT_TOL) -> AdaptedState:
    """Adapted coordinates of an on-constraint ambient state.

    Raises ConstraintViolationError when |vx + y vz| exceeds drift_tol;
    within tolerance the x-velocity component is discarded (it is slaved
    to the others on the constraint surface).
    """
    y = a.q[1]
    defect = a.vq[0] + y * a.vq[2]
    if abs(defect) > drift_tol:
        raise ConstraintViolationError(
            f"ambient velocity violates the constraint: |vx + y vz| = {abs(defect):.3e}"
        )
    return AdaptedState(q=a.q.copy(), v=np.array([a.vq[1], a.vq[2]]))
