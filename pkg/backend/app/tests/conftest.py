"""
Pytest configuration and shared fixtures for backend tests.

This module provides common fixtures that can be used across all test modules,
including reference instances, their QP reformulations and flow parameters.
"""

import numpy as np
import pytest

from app.services.experiments import gen_instance
from app.services.lasso.flow import FlowParams
from app.services.lasso.problem import LassoProblem, NnqpProblem, build_nnqp


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch):
    """Set up test environment variables."""
    monkeypatch.setenv("ENVIRONMENT", "test")


@pytest.fixture
def scalar_problem() -> LassoProblem:
    """1-D instance with minimizer (|b| - tau/2) / (1 + rho) = 15/11."""
    return LassoProblem(A=np.array([[1.0]]), b=np.array([2.0]), tau=1.0, rho=0.1)


@pytest.fixture
def scalar_minimizer() -> float:
    return 1.5 / 1.1


@pytest.fixture
def reference_problem() -> LassoProblem:
    """Instance of the reference experiment size (n_x = 10, m = 20)."""
    return gen_instance(10, 20, 1.0, 0.1, seed=42)


@pytest.fixture
def reference_nnqp(reference_problem) -> NnqpProblem:
    return build_nnqp(reference_problem)


@pytest.fixture
def small_problem() -> LassoProblem:
    return gen_instance(3, 6, 1.0, 0.1, seed=7)


@pytest.fixture
def small_nnqp(small_problem) -> NnqpProblem:
    return build_nnqp(small_problem)


@pytest.fixture
def unit_params() -> FlowParams:
    """Flow parameters with T_p = 1."""
    return FlowParams.from_settling_time(1.0)
