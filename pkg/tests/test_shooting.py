"""Tests for the FD Jacobian, pivoted elimination, and damped Newton."""

import numpy as np
import pytest

from nhtrack.errors import DomainError, SingularJacobianError, SingularProblemError
from nhtrack.geometry import AdaptedState
from nhtrack.shooting import (
    NewtonConfig,
    fd_jacobian,
    newton_solve,
    solve_pivoted,
    solve_tracking,
)
from nhtrack.tracking import (
    TrackingProblem,
    benchmark_problem,
    constant_z_line,
    free_flow,
    shooting_residual,
)
from nhtrack.particle import particle_system

RNG = np.random.default_rng(3)


class TestFdJacobian:
    def test_affine_map_recovered(self):
        """Central differences are exact for affine maps up to roundoff."""
        A = RNG.uniform(-2, 2, (4, 4))
        b = RNG.uniform(-1, 1, 4)
        J = fd_jacobian(lambda x: A @ x + b, RNG.uniform(-1, 1, 4), 1e-6)
        np.testing.assert_allclose(J, A, rtol=1e-8, atol=1e-9)

    def test_identity_map(self):
        J = fd_jacobian(lambda x: x.copy(), np.array([0.3, -0.7, 2.0]), 1e-6)
        np.testing.assert_allclose(J, np.eye(3), atol=1e-10)

    def test_columns_scaled_by_magnitude(self):
        """Probe steps grow with |alpha_j|; the scaling keeps affine maps exact."""
        A = np.diag([1.0, 1.0])
        J = fd_jacobian(lambda x: A @ x, np.array([1e6, 0.0]), 1e-6)
        np.testing.assert_allclose(J, A, rtol=1e-6)

    def test_non_finite_probe_raises_with_column(self):
        def res(x):
            if x[1] > 0.5:
                return np.array([np.nan, 0.0])
            return x.copy()

        with pytest.raises(DomainError) as err:
            fd_jacobian(res, np.array([0.0, 0.5]), 1e-2)
        assert "column 1" in str(err.value)

    def test_positive_step_required(self):
        with pytest.raises(ValueError):
            fd_jacobian(lambda x: x, np.zeros(2), 0.0)


class TestSolvePivoted:
    def test_matches_reference_solver(self):
        """Dual route: hand-rolled elimination vs numpy.linalg.solve."""
        for _ in range(50):
            A = RNG.uniform(-3, 3, (5, 5)) + 2.0 * np.eye(5)
            b = RNG.uniform(-3, 3, 5)
            np.testing.assert_allclose(solve_pivoted(A, b), np.linalg.solve(A, b), rtol=1e-10)

    def test_pivoting_handles_zero_diagonal(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        b = np.array([2.0, 3.0])
        np.testing.assert_allclose(solve_pivoted(A, b), [3.0, 2.0])

    def test_singular_matrix_raises(self):
        A = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularJacobianError):
            solve_pivoted(A, np.ones(2))


class TestNewtonSolve:
    def test_affine_converges_in_one_iteration(self):
        A = RNG.uniform(-2, 2, (5, 5)) + 3.0 * np.eye(5)
        x_star = RNG.uniform(-1, 1, 5)
        report = newton_solve(lambda x: A @ (x - x_star), np.zeros(5), NewtonConfig())
        assert report.converged
        assert report.iterations == 1
        np.testing.assert_allclose(report.alpha_star, x_star, atol=1e-9)

    def test_scalar_cube_root(self):
        """x^3 - 8 from x0 = 3: classic quadratic convergence to 2."""
        report = newton_solve(
            lambda x: np.array([x[0] ** 3 - 8.0]), np.array([3.0]), NewtonConfig()
        )
        assert report.converged
        assert report.iterations <= 10
        np.testing.assert_allclose(report.alpha_star, [2.0], atol=1e-10)

    def test_monotone_residual_history(self):
        report = newton_solve(
            lambda x: np.array([x[0] ** 3 + x[0] - 1.0, x[1] ** 3 + x[1] - 1.0]),
            np.array([2.0, -2.0]),
            NewtonConfig(),
        )
        assert report.converged
        norms = np.array(report.residual_norms)
        assert np.all(np.diff(norms) < 0)

    def test_monotone_residual_on_tracking_problem(self):
        report = solve_tracking(benchmark_problem(N=1000))
        norms = np.array(report.residual_norms)
        assert np.all(np.diff(norms) < 0)

    def test_max_iterations_reported_not_raised(self):
        report = newton_solve(
            lambda x: np.array([np.exp(x[0])]),  # no root
            np.array([0.0]),
            NewtonConfig(max_iters=5),
        )
        assert not report.converged
        assert report.message

    def test_singular_jacobian_diagnostic_carries_iterate(self):
        def res(x):
            return np.array([x[0] + x[1] - 1.0, 2.0 * (x[0] + x[1]) - 2.0])

        with pytest.raises(SingularJacobianError) as err:
            newton_solve(res, np.array([5.0, -1.0]), NewtonConfig())
        assert err.value.alpha is not None

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NewtonConfig(tol_residual=0.0)
        with pytest.raises(ValueError):
            NewtonConfig(max_iters=0)
        with pytest.raises(ValueError):
            NewtonConfig(fd_step=-1.0)


class TestSolveTracking:
    def test_benchmark_converges(self):
        """Benchmark problem from alpha0 = 0: tight residual, few iterations."""
        prob = benchmark_problem()
        report = solve_tracking(prob)
        assert report.converged
        assert report.iterations <= 50
        assert report.residual_norms[-1] <= 1e-8
        # solution verification guards against stale-state bugs
        assert np.max(np.abs(shooting_residual(report.alpha_star, prob))) <= 1e-10

    def test_quadratic_tail(self):
        """The last three norms before convergence shrink superlinearly.

        The final accepted norm itself sits at the residual's roundoff
        floor, so the contraction ratios are taken up to that point.
        """
        report = solve_tracking(benchmark_problem())
        norms = np.array(report.residual_norms[:-1])
        ratios = norms[1:] / norms[:-1]
        assert ratios[-1] < ratios[-2]
        assert ratios[-1] < 1e-3

    def test_deterministic(self):
        prob = benchmark_problem(N=500)
        a = solve_tracking(prob)
        b = solve_tracking(prob)
        assert np.all(a.alpha_star == b.alpha_star)
        assert a.residual_norms == b.residual_norms
        assert a.cost == b.cost

    def test_self_tracking_equilibrium(self):
        """Reference generated by the free flow: alpha* ~ 0, controls ~ 0."""
        s0 = AdaptedState(q=[0.5, 0.2, 0.7], v=[0.5, 0.4])
        prob = TrackingProblem(
            sys=particle_system(), ref=free_flow(s0), epsilon=7.0, T=4.0, s0=s0
        )
        report = solve_tracking(prob)
        assert report.converged
        assert np.max(np.abs(report.alpha_star)) <= 1e-8
        assert np.max(np.abs(report.controls)) <= 1e-6

    def test_report_contains_trajectory_and_cost(self):
        prob = benchmark_problem(N=500)
        report = solve_tracking(prob)
        assert report.trajectory.states.shape == (501, 10)
        assert report.controls.shape == (501, 2)
        np.testing.assert_array_equal(
            report.controls, -report.trajectory.states[:, 8:] / prob.epsilon
        )
        assert report.cost > 0.0

    def test_singular_problem_rejected_before_solving(self):
        with pytest.raises(SingularProblemError):
            TrackingProblem(
                sys=particle_system(),
                ref=constant_z_line(),
                epsilon=0.0,
                T=4.0,
                s0=AdaptedState(q=[0.5, 0.2, 0.7], v=[0.5, 0.4]),
            )
