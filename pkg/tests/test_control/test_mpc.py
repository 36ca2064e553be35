"""
Test Model Predictive Control
"""
import numpy as np
import pytest
from scipy.optimize import check_grad

from modcomb.control.mpc import (
    MPCProblem,
    _bilinear_objective,
    mean_tracking_error,
    run_mpc,
    solve_horizon,
    state_weight_matrix,
)
from modcomb.control.structures import ExternalBasis, LiftedPredictor
from modcomb.errors import DimensionMismatchError, InfeasibleBoundsError, InvalidParameterError
from modcomb.learning.koopman import build_polynomial_dictionary

DICTIONARY = build_polynomial_dictionary(1, 1)


def _linear_predictor(gain=0.1):
    """z = [1, x] with x+ = 0.9 x + gain * c"""
    return LiftedPredictor(
        structure='linear',
        dictionary=DICTIONARY,
        external_basis=ExternalBasis('affine', 1),
        state_operators=np.array([[[1.0, 0.0], [0.0, 0.9]]]),
        control_operators=np.array([[[0.0], [gain]]]),
        external_operator=np.zeros((2, 1)),
    )


def _bilinear_predictor(gain=0.1):
    """Same dynamics written in the nonlinear structure"""
    blocks = np.zeros((4, 2, 2))
    blocks[0] = [[1.0, 0.0], [0.0, 0.9]]
    blocks[1] = [[0.0, 0.0], [gain, 0.0]]
    return LiftedPredictor(
        structure='nonlinear',
        dictionary=DICTIONARY,
        external_basis=ExternalBasis('affine', 1),
        state_operators=blocks,
        control_operators=np.zeros((0, 2, 1)),
    )


def _problem(pred, horizon=1, R=0.0, lower=None, upper=None, target=1.0, **kwargs):
    return MPCProblem(
        horizon=horizon,
        Q=state_weight_matrix(pred),
        R=R * np.eye(1),
        reference=np.array([[1.0, target]]),
        lower=lower,
        upper=upper,
        externals=np.zeros((horizon, 1)),
        **kwargs,
    )


def test_unconstrained_one_step_solution():
    """Test that the control reaching the reference is found"""
    pred = _linear_predictor()

    solution = solve_horizon(pred, _problem(pred, lower=[-20.0], upper=[20.0]), [1.0, 0.0])

    assert solution.controls[0, 0] == pytest.approx(10.0, abs=1e-8)
    assert solution.convex
    assert solution.kkt_residual <= 1e-8
    assert solution.hessian_min_eigenvalue > 0.0


def test_active_bound_is_certified():
    """Test the clipped solution and its KKT residual"""
    pred = _linear_predictor()

    solution = solve_horizon(pred, _problem(pred, lower=[-1.0], upper=[1.0]), [1.0, 0.0])

    assert solution.controls[0, 0] == pytest.approx(1.0)
    assert solution.kkt_residual <= 1e-8


def test_fixed_controls_and_heavy_penalty():
    """Test equal bounds and a dominating control weight"""
    pred = _linear_predictor()

    fixed = solve_horizon(pred, _problem(pred, lower=[0.5], upper=[0.5]), [1.0, 0.0])
    assert fixed.controls[0, 0] == 0.5
    assert fixed.hessian_min_eigenvalue is None

    penalized = solve_horizon(pred, _problem(pred, R=1e6), [1.0, 0.0])
    assert abs(penalized.controls[0, 0]) < 1e-5


def test_problem_validation():
    """Test bounds, weights and reference width checks"""
    pred = _linear_predictor()
    with pytest.raises(InfeasibleBoundsError):
        _problem(pred, lower=[1.0], upper=[0.0])
    with pytest.raises(InvalidParameterError):
        MPCProblem(horizon=1, Q=-np.eye(2), R=np.eye(1), reference=np.zeros((1, 2)))
    with pytest.raises(DimensionMismatchError):
        MPCProblem(horizon=1, Q=np.eye(2), R=np.eye(1), reference=np.zeros((1, 3)))


def test_reference_window_is_padded():
    """Test windows past the end of the reference"""
    problem = MPCProblem(horizon=3, Q=np.eye(1), R=np.eye(1), reference=np.arange(4.0).reshape(-1, 1),
                         externals=np.arange(2.0).reshape(-1, 1))

    assert problem.reference_window(1)[:, 0].tolist() == [2.0, 3.0, 3.0]
    assert problem.external_window(0)[:, 0].tolist() == [0.0, 1.0, 1.0]


def test_bilinear_gradient_matches_finite_differences():
    """Test the adjoint gradient of the nonlinear horizon cost"""
    rng = np.random.default_rng(0)
    pred = LiftedPredictor(
        structure='nonlinear',
        dictionary=DICTIONARY,
        external_basis=ExternalBasis('affine', 1),
        state_operators=0.3 * rng.standard_normal((4, 2, 2)),
        control_operators=np.zeros((0, 2, 1)),
    )
    problem = MPCProblem(horizon=3, Q=np.eye(2), R=0.1 * np.eye(1), reference=rng.standard_normal((4, 2)),
                         externals=rng.standard_normal((3, 1)))
    objective = _bilinear_objective(pred, problem, np.array([1.0, 0.5]), 0)
    point = rng.standard_normal(3)

    error = check_grad(lambda c: objective(c)[0], lambda c: objective(c)[1], point)

    assert error < 1e-5 * max(1.0, np.linalg.norm(objective(point)[1]))


def test_nonlinear_solver_agrees_with_convex_solver():
    """Test that multi-start L-BFGS-B finds the convex optimum of equivalent dynamics"""
    linear, bilinear = _linear_predictor(gain=1.0), _bilinear_predictor(gain=1.0)
    bounds = {'lower': [-5.0], 'upper': [5.0]}

    convex = solve_horizon(linear, _problem(linear, horizon=2, R=0.1, **bounds), [1.0, 0.0])
    local = solve_horizon(bilinear, _problem(bilinear, horizon=2, R=0.1, restarts=3, **bounds), [1.0, 0.0])

    np.testing.assert_allclose(local.controls, convex.controls, atol=1e-4)
    assert not local.convex
    assert len(local.local_optima) == 3


def test_closed_loop_holds_equilibrium():
    """Test tracking of a reachable constant reference"""
    pred = _linear_predictor()
    x_ref = np.ones((31, 1))
    problem = MPCProblem(horizon=5, Q=state_weight_matrix(pred), R=np.zeros((1, 1)), reference=DICTIONARY.lift(x_ref),
                         lower=[-3.0], upper=[3.0])

    result = run_mpc(pred, problem, [1.0], np.zeros(30), 30, lambda x, c, e: 0.9 * x + 0.1 * c)

    assert result.states.shape == (31, 1)
    assert mean_tracking_error(result, x_ref, [0]) < 1e-8
    assert all(k <= 1e-8 for k in result.kkt_residuals)
    assert 'solve_time_ms' not in result.rows()[0]


def test_tracking_error_needs_nonzero_reference():
    """Test the relative error normalisation"""
    states = np.array([[1.0, 0.0], [2.0, 0.0]])

    assert mean_tracking_error(states, np.array([[1.0, 1.0], [1.0, 1.0]]), [0]) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        mean_tracking_error(states, np.zeros((2, 2)))
