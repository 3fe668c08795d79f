"""
Tests for the reference minimizers.
"""

import numpy as np
import pytest

from app.services.experiments import gen_instance
from app.services.lasso.exceptions import EnumerationLimitError, OracleError
from app.services.lasso.oracle import (
    OracleMethod,
    lipschitz_constant,
    prox_step,
    soft_threshold,
    solve_nnqp_oracle,
    solve_prox,
    solve_sign_enum,
)
from app.services.lasso.problem import (
    LassoProblem,
    NnqpProblem,
    build_nnqp,
    elastic_net_objective,
)


class TestSoftThreshold:
    def test_values(self):
        result = soft_threshold(np.array([3.0, -0.5, 0.2, -2.0]), 1.0)
        np.testing.assert_array_equal(result, [2.0, 0.0, 0.0, -1.0])


class TestLipschitzConstant:
    def test_upper_bounds_gradient_constant(self, reference_problem):
        p = reference_problem
        exact = 2.0 * np.linalg.eigvalsh(p.A.T @ p.A).max() + 2.0 * p.rho
        estimate = lipschitz_constant(p)
        assert exact * 0.99 <= estimate <= exact * 1.06

    def test_zero_matrix(self):
        p = LassoProblem(A=np.zeros((2, 2)), b=np.ones(2), tau=1.0, rho=0.1)
        assert lipschitz_constant(p) == pytest.approx(0.2)


class TestSolveProx:
    """Test the accelerated proximal gradient oracle."""

    def test_scalar_minimizer(self, scalar_problem, scalar_minimizer):
        result = solve_prox(scalar_problem)
        assert result.converged
        assert result.method is OracleMethod.PROX_GRADIENT
        assert result.x[0] == pytest.approx(scalar_minimizer, abs=1e-8)
        assert result.objective == pytest.approx(43.0 / 22.0, rel=1e-10)

    def test_zero_observation_gives_zero(self):
        problem = LassoProblem(
            A=np.array([[1.0, 0.5], [0.0, 2.0]]), b=np.zeros(2), tau=1.0, rho=0.1
        )
        result = solve_prox(problem)
        np.testing.assert_array_equal(result.x, np.zeros(2))
        assert result.objective == 0.0

    def test_large_weight_gives_zero(self, small_problem):
        """tau >= 2 ||A^T b||_inf makes x = 0 optimal."""
        threshold = 2.0 * np.max(np.abs(small_problem.A.T @ small_problem.b))
        problem = LassoProblem(
            A=small_problem.A, b=small_problem.b, tau=threshold * 1.01, rho=small_problem.rho
        )
        np.testing.assert_allclose(solve_prox(problem).x, 0.0, atol=1e-12)

    def test_fixed_point_reached(self, reference_problem):
        result = solve_prox(reference_problem, tol=1e-10)
        assert result.converged
        assert result.fixed_point_residual <= 1e-10
        lipschitz = lipschitz_constant(reference_problem)
        step = prox_step(reference_problem, result.x, lipschitz)
        assert np.max(np.abs(step - result.x)) <= 1e-9

    def test_no_perturbation_improves_objective(self, reference_problem):
        result = solve_prox(reference_problem)
        rng = np.random.default_rng(9)
        for _ in range(200):
            delta = rng.standard_normal(reference_problem.n_x) * 1e-3
            perturbed = elastic_net_objective(reference_problem, result.x + delta)
            assert perturbed >= result.objective - 1e-12

    def test_iteration_limit_reports_not_converged(self, reference_problem):
        result = solve_prox(reference_problem, tol=1e-14, max_iter=3)
        assert not result.converged
        assert result.iterations == 3

    def test_rejects_nonpositive_tolerance(self, scalar_problem):
        with pytest.raises(ValueError):
            solve_prox(scalar_problem, tol=0.0)


class TestSolveSignEnum:
    """Test the exact enumeration oracle."""

    def test_scalar_minimizer(self, scalar_problem, scalar_minimizer):
        result = solve_sign_enum(scalar_problem)
        assert result.method is OracleMethod.SIGN_ENUM
        assert result.x[0] == pytest.approx(scalar_minimizer, rel=1e-14)
        assert result.iterations == 3

    def test_agrees_with_prox(self, small_problem):
        exact = solve_sign_enum(small_problem)
        approx = solve_prox(small_problem)
        np.testing.assert_allclose(approx.x, exact.x, atol=1e-8)
        assert approx.objective == pytest.approx(exact.objective, rel=1e-10)

    def test_too_many_variables(self):
        problem = gen_instance(9, 4, 1.0, 0.1, seed=0)
        with pytest.raises(EnumerationLimitError):
            solve_sign_enum(problem)

    def test_cross_agreement_on_small_instances(self):
        """Both oracles agree on 50 seeded instances with 2 to 6 variables."""
        for problem_id in range(50):
            n_x = 2 + problem_id % 5
            problem = gen_instance(n_x, 2 * n_x, 1.0, 0.1, seed=1000 + problem_id)
            exact = solve_sign_enum(problem)
            approx = solve_prox(problem)
            assert np.max(np.abs(approx.x - exact.x)) <= 1e-7, problem_id


class TestSolveNnqpOracle:
    def test_kkt_conditions(self, reference_nnqp):
        y = solve_nnqp_oracle(reference_nnqp)
        w = reference_nnqp.Q @ y + reference_nnqp.q
        assert y.min() >= 0.0
        assert w.min() >= -1e-7
        assert np.linalg.norm(y * w) <= 1e-7

    def test_split_is_complementary(self, reference_nnqp):
        y = solve_nnqp_oracle(reference_nnqp)
        n_x = reference_nnqp.n_x
        np.testing.assert_array_equal(y[:n_x] * y[n_x:], 0.0)

    def test_requires_source_instance(self, reference_nnqp):
        bare = NnqpProblem(Q=reference_nnqp.Q, q=reference_nnqp.q, n_x=reference_nnqp.n_x)
        with pytest.raises(OracleError):
            solve_nnqp_oracle(bare)

    def test_scalar_split(self, scalar_problem, scalar_minimizer):
        y = solve_nnqp_oracle(build_nnqp(scalar_problem))
        np.testing.assert_allclose(y, [scalar_minimizer, 0.0], atol=1e-8)
