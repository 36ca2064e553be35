"""
Test Iterative Model Combination
"""
import numpy as np
import pytest

from modcomb.combination.combiner import (
    CombinationConfig,
    CombinationState,
    IterationRecord,
    check_stopping,
    combine,
    compute_t_F,
    iterate,
    iterate_accelerated,
    residual_learning,
)
from modcomb.combination.diagnostics import joint_projection_oracle
from modcomb.errors import InvalidParameterError, StagnantResidualError
from modcomb.learning.hypothesis import DataSet, InnerProductContext, ProjectionLearner, linear_feature_map


def _two_sample():
    """G spanned by (1, 0), H by (1, 1), F = (0, 1)"""
    inputs = np.array([[1.0, 1.0], [0.0, 1.0]])
    data = DataSet(inputs=inputs, targets=[0.0, 1.0])
    return data, ProjectionLearner(linear_feature_map(2, [0])), ProjectionLearner(linear_feature_map(2, [1]))


def _sample_error(data, state_or_norm):
    return np.sqrt(data.count) * state_or_norm


def _random_instance(seed, samples=40, features=6, g_dim=3):
    rng = np.random.default_rng(seed)
    inputs = rng.standard_normal((samples, features))
    data = DataSet(inputs=inputs, targets=inputs @ rng.standard_normal(features))
    map_G = linear_feature_map(features, list(range(g_dim)))
    map_H = linear_feature_map(features, list(range(g_dim, features)))
    return data, map_G, map_H


def test_residual_learning_stays_suboptimal():
    """Test that one pass starting in H leaves half of F unexplained"""
    data, G, H = _two_sample()

    state = residual_learning(data, G, H, first='H')

    assert state.iteration == 1
    assert _sample_error(data, state.last.residual_norm) == pytest.approx(0.5)


def test_iteration_halves_the_error():
    """Test the per-iteration contraction on the two-sample instance"""
    data, G, H = _two_sample()

    state = iterate(data, G, H, CombinationConfig(epsilon=1e-12, max_iterations=10))

    errors = [_sample_error(data, record.residual_norm) for record in state.history]
    assert len(errors) == 10
    for n, error in enumerate(errors):
        assert error == pytest.approx(0.5 ** (n + 1))
    assert not state.converged
    assert state.monotonicity_violations == 0


def test_acceleration_reaches_the_target_in_one_step():
    """Test that the relaxed step with t_F = 2 lands on F"""
    data, G, H = _two_sample()

    state = iterate_accelerated(data, G, H, CombinationConfig(epsilon=1e-10, accelerate=True))

    assert state.history[1].t_F == pytest.approx(2.0)
    assert state.history[1].residual_norm < 1e-12
    assert state.converged
    np.testing.assert_allclose(state.predict_data(data)[:, 0], [0.0, 1.0], atol=1e-12)


def test_target_in_one_space_with_orthogonal_other():
    """Test convergence at the first record when F lies in G and H is orthogonal"""
    g = np.array([1.0, 1.0, 0.0, 0.0])
    h = np.array([0.0, 0.0, 1.0, 1.0])
    data = DataSet(inputs=np.column_stack([g, h]), targets=2.0 * g)

    state = iterate(data, ProjectionLearner(linear_feature_map(2, [0])), ProjectionLearner(linear_feature_map(2, [1])))

    assert state.converged
    assert state.iteration == 1
    assert state.last.prediction_error < 1e-12


def test_identical_spaces_stop_on_successive_difference():
    """Test that G = H stops one iteration after initialization"""
    x = np.linspace(0.0, 1.0, 20)
    data = DataSet(inputs=x, targets=np.exp(x))
    learner = ProjectionLearner(linear_feature_map(1))

    state = iterate(data, learner, learner, CombinationConfig(criterion='successive_difference'))

    assert state.converged
    assert state.iteration == 2


def test_limit_matches_joint_projection():
    """Test agreement with the intrusive least-squares fit on random instances"""
    for seed in range(5):
        data, map_G, map_H = _random_instance(seed)
        oracle = joint_projection_oracle(data, map_G, map_H).predict_data(data)

        state = iterate(data, ProjectionLearner(map_G), ProjectionLearner(map_H),
                        CombinationConfig(epsilon=1e-12, max_iterations=5000), reference=oracle)

        assert state.converged
        np.testing.assert_allclose(state.predict_data(data), oracle, atol=1e-6)
        gaps = [record.reference_gap for record in state.history]
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


def test_residuals_never_increase():
    """Test monotone residual norms for the plain scheme"""
    data, map_G, map_H = _random_instance(11)

    state = iterate(data, ProjectionLearner(map_G), ProjectionLearner(map_H), CombinationConfig(max_iterations=50))

    norms = [record.residual_norm for record in state.history]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    assert state.monotonicity_violations == 0


def test_zero_initialization_reaches_same_limit():
    """Test that starting from F_H = 0 converges to the same combination"""
    data, map_G, map_H = _random_instance(4)
    G, H = ProjectionLearner(map_G), ProjectionLearner(map_H)
    config = CombinationConfig(epsilon=1e-12, max_iterations=5000)

    plain = iterate(data, G, H, config)
    zero = iterate(data, G, H, CombinationConfig(epsilon=1e-12, max_iterations=5000, initialization='zero'))

    np.testing.assert_allclose(zero.predict_data(data), plain.predict_data(data), atol=1e-6)


def test_combine_dispatches_and_keeps_models():
    """Test dispatch on the accelerate flag and the model history"""
    data, G, H = _two_sample()

    state = combine(data, G, H, CombinationConfig(max_iterations=3, accelerate=True, keep_models=True))

    assert len(state.model_history) == state.iteration
    assert state.history[0].t_F is None
    assert state.summary()['iterations'] == state.iteration


def test_invalid_configuration():
    """Test parameter validation of the loop configuration"""
    with pytest.raises(InvalidParameterError):
        CombinationConfig(epsilon=0.0)
    with pytest.raises(InvalidParameterError):
        CombinationConfig(criterion='energy')
    with pytest.raises(InvalidParameterError):
        CombinationConfig(max_iterations=0)


def test_accelerated_scheme_requires_flag():
    """Test that the relaxed scheme is opt-in"""
    data, G, H = _two_sample()

    with pytest.raises(InvalidParameterError):
        iterate_accelerated(data, G, H, CombinationConfig())


def test_step_length_on_identical_residuals():
    """Test that equal successive residuals have no step length"""
    data, _, _ = _two_sample()
    ctx = InnerProductContext(data)
    r = np.array([[0.0], [0.5]])

    with pytest.raises(StagnantResidualError):
        compute_t_F(r, r, ctx)
    assert compute_t_F(r, np.array([[0.0], [0.25]]), ctx) == pytest.approx(2.0)


def test_step_length_on_orthogonal_residuals():
    """Test t_F = 1/2 for orthogonal residuals of equal norm"""
    data, _, _ = _two_sample()
    ctx = InnerProductContext(data)

    assert compute_t_F(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]), ctx) == pytest.approx(0.5)


def test_step_length_when_current_residual_vanishes():
    """Test t_F = 1 when the current residual is already zero"""
    data, _, _ = _two_sample()
    ctx = InnerProductContext(data)

    assert compute_t_F(np.array([[0.3], [-0.7]]), np.zeros((2, 1)), ctx) == pytest.approx(1.0)


def test_step_length_minimizes_relaxed_residual():
    """Test that no step length beats t_F on random residual pairs"""
    data, _, _ = _random_instance(3)
    ctx = InnerProductContext(data)
    rng = np.random.default_rng(17)
    r_prev = rng.standard_normal((data.count, 1))
    r_curr = rng.standard_normal((data.count, 1))

    t_F = compute_t_F(r_prev, r_curr, ctx)
    best = ctx.norm((1.0 - t_F) * r_prev + t_F * r_curr)

    for t in rng.uniform(-10.0, 10.0, size=100):
        assert best <= ctx.norm((1.0 - t) * r_prev + t * r_curr) + 1e-12


def _state_with(*records):
    state = CombinationState(model_G=None, model_H=None, target_norm=1.0)
    for n, (prediction_error, step_change) in enumerate(records):
        state.history.append(IterationRecord(
            n=n, residual_norm=prediction_error, successive_difference=step_change,
            prediction_error=prediction_error, step_change=step_change,
        ))
    return state


def test_stopping_on_prediction_error():
    """Test the mean-error criterion against epsilon * ||F||_D"""
    data, _, _ = _two_sample()
    config = CombinationConfig(epsilon=1e-4)

    decision = check_stopping(_state_with((0.0, 1.0)), data, config)
    assert decision.stop
    assert decision.value == 0.0

    decision = check_stopping(_state_with((1e-3, 0.0)), data, config)
    assert not decision.stop
    assert decision.value == pytest.approx(1e-3)
    assert decision.threshold == pytest.approx(1e-4)


def test_stopping_on_successive_difference():
    """Test that the step criterion waits for two records and then compares the step"""
    data, _, _ = _two_sample()
    config = CombinationConfig(epsilon=1e-4, criterion='successive_difference')

    decision = check_stopping(_state_with((0.5, 0.0)), data, config)
    assert not decision.stop
    assert decision.value is None

    decision = check_stopping(_state_with((0.5, 0.5), (0.5, 0.0)), data, config)
    assert decision.stop
    assert decision.value == 0.0

    assert not check_stopping(_state_with((0.5, 0.5), (0.4, 1e-3)), data, config).stop


def test_stopping_without_records():
    """Test that an empty history never stops"""
    data, _, _ = _two_sample()

    decision = check_stopping(_state_with(), data, CombinationConfig())

    assert not decision.stop
    assert decision.value is None


def test_relaxing_only_G_takes_longer():
    """Test that relaxing F_G alone misses the one-step finish of the full line search"""
    data, G, H = _two_sample()

    both = iterate_accelerated(data, G, H, CombinationConfig(epsilon=1e-10, accelerate=True))
    only_G = iterate_accelerated(data, G, H, CombinationConfig(epsilon=1e-10, accelerate=True, relaxation='G'))

    assert both.iteration == 2
    assert only_G.converged
    assert only_G.iteration == 3
    assert only_G.history[1].residual_norm > 1e-3
    np.testing.assert_allclose(only_G.predict_data(data)[:, 0], [0.0, 1.0], atol=1e-10)
