"""
Toy Suboptimality - Residual learning against iterative combination on small exact instances
"""
import logging
from typing import Dict, Tuple

import numpy as np

from modcomb.combination.combiner import CombinationConfig, iterate, iterate_accelerated, residual_learning
from modcomb.combination.diagnostics import joint_projection_oracle, min_angle, subspace_from_learner
from modcomb.experiments.config import ExperimentConfig, ToySuboptimalityParameters
from modcomb.learning.hypothesis import DataSet, ProjectionLearner, linear_feature_map
from modcomb.utils.exporters import ExperimentResults

logger = logging.getLogger(__name__)


def two_sample_instance() -> Tuple[DataSet, ProjectionLearner, ProjectionLearner]:
    """
    Two data points; G is spanned by (1, 0), H by (1, 1)/sqrt(2), F = (0, 1).

    Column 0 of the inputs carries the G feature and column 1 the H feature.
    """
    inputs = np.array([[1.0, 1.0 / np.sqrt(2.0)], [0.0, 1.0 / np.sqrt(2.0)]])
    data = DataSet(inputs=inputs, targets=np.array([0.0, 1.0]))
    return data, ProjectionLearner(linear_feature_map(2, [0], 'G')), ProjectionLearner(linear_feature_map(2, [1], 'H'))


def sample_error(data: DataSet, norm: float) -> float:
    """Euclidean error over the samples, sqrt(N) * ||.||_D"""
    return float(np.sqrt(data.count) * norm)


def random_instance(rng: np.random.Generator, samples: int, features: int, g_dim: int) -> Tuple:
    """
    Random features split into G (first g_dim columns) and H (the rest),
    with F a random element of G + H.
    """
    inputs = rng.standard_normal((samples, features))
    weights = rng.standard_normal(features)
    data = DataSet(inputs=inputs, targets=inputs @ weights)
    map_G = linear_feature_map(features, list(range(g_dim)), 'G')
    map_H = linear_feature_map(features, list(range(g_dim, features)), 'H')
    return data, map_G, map_H


def _random_audit(params: ToySuboptimalityParameters, rng: np.random.Generator) -> Dict:
    """Oracle agreement and rate-bound audit over random direct-sum instances"""
    worst_oracle = 0.0
    bound_violations = 0
    monotonicity_violations = 0
    for _ in range(params.random_instances):
        g_dim = int(rng.integers(1, params.features))
        data, map_G, map_H = random_instance(rng, params.samples, params.features, g_dim)
        learner_G, learner_H = ProjectionLearner(map_G), ProjectionLearner(map_H)
        reference = joint_projection_oracle(data, map_G, map_H).predict_data(data)
        state = iterate(data, learner_G, learner_H,
                        CombinationConfig(epsilon=params.epsilon, max_iterations=2000), reference=reference)
        c = min_angle(subspace_from_learner(learner_G, data), subspace_from_learner(learner_H, data)).c
        worst_oracle = max(worst_oracle, float(np.abs(state.predict_data(data) - reference).max()))
        monotonicity_violations += state.monotonicity_violations
        for record in state.history:
            rate = np.inf if c == 0.0 and record.n == 0 else c ** (2 * record.n - 1)
            if record.reference_gap > rate * state.target_norm * (1 + 1e-6) + 1e-12:
                bound_violations += 1

    one_step = 0
    for _ in range(params.acceleration_instances):
        data, map_G, map_H = random_instance(rng, params.samples, params.features, params.features - 1)
        state = iterate_accelerated(data, ProjectionLearner(map_G), ProjectionLearner(map_H),
                                    CombinationConfig(epsilon=1e-8, max_iterations=5, accelerate=True))
        if len(state.history) > 1 and state.history[1].residual_norm <= 1e-8 * state.target_norm:
            one_step += 1

    return {
        'random_instances': params.random_instances,
        'max_oracle_deviation': worst_oracle,
        'bound_violations': bound_violations,
        'monotonicity_violations': monotonicity_violations,
        'acceleration_instances': params.acceleration_instances,
        'acceleration_one_step': one_step,
    }


def run_toy_suboptimality(config: ExperimentConfig) -> ExperimentResults:
    params: ToySuboptimalityParameters = config.parameters
    results = ExperimentResults(config.experiment)
    data, learner_G, learner_H = two_sample_instance()

    baseline = residual_learning(data, learner_G, learner_H, first='H')
    plain = iterate(data, learner_G, learner_H, CombinationConfig(epsilon=params.epsilon,
                                                                  max_iterations=params.iterations))
    accelerated = iterate_accelerated(data, learner_G, learner_H,
                                      CombinationConfig(epsilon=params.epsilon, max_iterations=params.iterations,
                                                        accelerate=True))
    angle = min_angle(subspace_from_learner(learner_G, data), subspace_from_learner(learner_H, data))

    comparison = results.table('method_errors', ['method', 'iterations', 'error'])
    comparison.add(method='residual_learning', iterations=1,
                   error=sample_error(data, baseline.last.residual_norm))
    comparison.add(method='iterative', iterations=plain.iteration,
                   error=sample_error(data, plain.last.residual_norm))
    comparison.add(method='accelerated', iterations=accelerated.iteration,
                   error=sample_error(data, accelerated.last.residual_norm))

    history = results.table('iteration_history', ['scheme', 'n', 'error', 'ratio', 't_F'])
    for scheme, state in (('plain', plain), ('accelerated', accelerated)):
        previous = None
        for record in state.history:
            error = sample_error(data, record.residual_norm)
            ratio = error / previous if previous else None
            history.add(scheme=scheme, n=record.n, error=error, ratio=ratio, t_F=record.t_F)
            previous = error

    rng = np.random.default_rng(config.seed)
    results.extras['angle_report'] = angle.to_dict()
    results.summary = {
        'residual_learning_error': sample_error(data, baseline.last.residual_norm),
        'iterative_error': sample_error(data, plain.last.residual_norm),
        'accelerated_error': sample_error(data, accelerated.last.residual_norm),
        'c': angle.c,
        'audit': _random_audit(params, rng),
    }
    return results
