"""Deterministic fixed-step classical Runge-Kutta integration.

A fixed step keeps every downstream quantity (shooting residuals in
particular) a smooth, reproducible function of its inputs; adaptive
stepping would turn finite-difference Jacobians into noise. Grid times
are always formed as t0 + i*h with h computed once, never accumulated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DegenerateFitError, DomainError

Array = np.ndarray


@dataclass(frozen=True)
class VectorField:
    """Right-hand side f(t, x) of an ODE with state dimension dim."""

    dim: int
    f: Callable[[float, Array], Array]


@dataclass(frozen=True)
class Trajectory:
    """States sampled on a uniform time grid; row i belongs to times[i]."""

    times: Array
    states: Array

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        if self.states.shape[0] != self.times.shape[0]:
            raise ContractError("trajectory row count does not match time grid")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def final_state(self) -> Array:
        return self.states[-1]


def _stage(vf: VectorField, t: float, x: Array) -> Array:
    k = np.asarray(vf.f(t, x), dtype=float)
    if not np.all(np.isfinite(k)):
        raise DomainError("vector field returned a non-finite value", t=t, x=x)
    return k


def rk4_step(vf: VectorField, t: float, x: Array, h: float) -> Array:
    """One classical 4-stage step from (t, x) with step size h > 0.

    The update is grouped as x + h*((k1 + 2k2 + 2k3 + k4)/6) so constant
    fields advance by exactly h per step (the (h/6)*sum grouping re-rounds).
    """
    if h <= 0.0:
        raise ContractError("step size must be positive")
    k1 = _stage(vf, t, x)
    k2 = _stage(vf, t + 0.5 * h, x + 0.5 * h * k1)
    k3 = _stage(vf, t + 0.5 * h, x + 0.5 * h * k2)
    k4 = _stage(vf, t + h, x + h * k3)
    return x + h * ((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)


def integrate(vf: VectorField, t0: float, x0: Array, T: float, N: int) -> Trajectory:
    """Integrate over [t0, t0+T] with N uniform steps; returns N+1 rows."""
    if N < 1:
        raise ContractError("step count must be at least 1")
    if T <= 0.0:
        raise ContractError("horizon must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (vf.dim,):
        raise ContractError(f"initial state shape {x0.shape} does not match dim {vf.dim}")
    h = T / N
    times = t0 + h * np.arange(N + 1)
    states = np.empty((N + 1, vf.dim))
    states[0] = x0
    x = x0
    for i in range(N):
        try:
            x = rk4_step(vf, times[i], x, h)
        except DomainError as err:
            raise DomainError(f"step {i}: {err}", t=err.t, x=err.x) from err
        states[i + 1] = x
    return Trajectory(times=times, states=states)


def convergence_order(
    vf: VectorField,
    oracle: Callable[[float], Array],
    t0: float,
    x0: Array,
    T: float,
    N_list: Sequence[int],
) -> float:
    """Least-squares slope of log(max grid error) against log(h).

    N_list must contain at least three step counts, each double the last.
    Raises DegenerateFitError when the integrator reproduces the oracle
    exactly at some N (the log-log fit is then meaningless).
    """
    N_list = list(N_list)
    if len(N_list) < 3:
        raise ContractError("need at least three step counts")
    for a, b in zip(N_list, N_list[1:]):
        if b != 2 * a:
            raise ContractError("step counts must double at each entry")
    errors = []
    steps = []
    for N in N_list:
        traj = integrate(vf, t0, x0, T, N)
        exact = np.array([oracle(t) for t in traj.times])
        err = float(np.max(np.abs(traj.states - exact)))
        if err == 0.0:
            raise DegenerateFitError(f"integration exact at N={N}; no order to fit")
        errors.append(err)
        steps.append(T / N)
    slope = np.polyfit(np.log(steps), np.log(errors), 1)[0]
    return float(slope)
