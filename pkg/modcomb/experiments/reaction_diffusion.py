"""
Reaction Diffusion - Linear stencil model and polynomial Koopman model, alone and combined
"""
import logging
from typing import Dict

import numpy as np

from modcomb.combination.combiner import CombinationConfig, combine, residual_learning
from modcomb.combination.diagnostics import (
    a_priori_bound,
    distance_to_sum_space,
    joint_projection_oracle,
    min_angle,
    subspace_from_learner,
)
from modcomb.errors import RolloutError
from modcomb.experiments.config import ExperimentConfig, ReactionDiffusionParameters
from modcomb.learning.hypothesis import FeatureMap, ProjectionLearner, stencil_feature_map
from modcomb.learning.koopman import KoopmanLearner, build_polynomial_dictionary
from modcomb.systems.metrics import PointwiseFieldModel, domain_relative_error, rollout, stepwise_error
from modcomb.systems.simulators import (
    Grid1D,
    initial_fields,
    reaction_term,
    simulate_reaction_diffusion_1d,
    stencil_dataset,
)
from modcomb.utils.exporters import ExperimentResults

logger = logging.getLogger(__name__)

METHODS = ('linear', 'koopman', 'residual_learning', 'iterative')
SECOND_DIFFERENCE = [1.0, -2.0, 1.0]
# centre value within a [u_{j-1}, u_j, u_{j+1}] neighbourhood
CENTRE_COLUMN = 1


def _trajectories(grid: Grid1D, params: ReactionDiffusionParameters, count: int, steps: int, seed: int):
    u0 = initial_fields(params.initial_law, count, grid.n, seed)
    return simulate_reaction_diffusion_1d(grid, params.mu, params.eta, u0, steps, seed=seed, law=params.initial_law)


def _evaluate(local_model, grid: Grid1D, test_states: np.ndarray) -> Dict:
    """Domain relative error and stepwise errors of full-field rollouts"""
    field_model = PointwiseFieldModel(local_model, grid, target='state')
    steps = test_states.shape[1] - 1
    try:
        predictions = np.stack([rollout(field_model, states[0], steps) for states in test_states])
    except RolloutError as e:
        logger.warning("Rollout failed: %s", e)
        return {'relative_error': None, 'stepwise': None}
    stepwise = np.stack([stepwise_error(p, r) for p, r in zip(predictions, test_states)])
    return {
        'relative_error': domain_relative_error(predictions, test_states),
        'stepwise': stepwise,
    }


def _design_dictionary(dictionary) -> FeatureMap:
    """Dictionary features read from the centre column of neighbourhood rows"""
    return FeatureMap(3, dictionary.dimension,
                      lambda rows: dictionary.lift(dictionary.select_state(rows)),
                      f"centre:{dictionary.feature_map.label}")


def _diffusion_coefficient(model_G, dt: float) -> float:
    """Fitted weight of the second-difference feature, per unit time"""
    return float(model_G.coefficients[0, 0]) / dt


def _reaction_curve(model_H, u: np.ndarray, dt: float) -> np.ndarray:
    """Reaction term implied by the Koopman component, (H(u) - u) / dt"""
    rows = np.zeros((len(u), 3))
    rows[:, CENTRE_COLUMN] = u
    return (model_H.predict_design(rows).reshape(-1) - u) / dt


def run_reaction_diffusion(config: ExperimentConfig) -> ExperimentResults:
    params: ReactionDiffusionParameters = config.parameters
    results = ExperimentResults(config.experiment)
    grid = Grid1D(n=params.n, dt=params.dt)

    train = _trajectories(grid, params, params.train_trajectories, params.train_steps, config.seed)
    test = _trajectories(grid, params, params.test_trajectories, params.test_steps, config.seed + 1)
    data = stencil_dataset(train, grid, target='state')
    logger.info("Training on %d pointwise samples", data.count)

    map_G = stencil_feature_map([SECOND_DIFFERENCE], grid.dz, label='second_difference')
    dictionary = build_polynomial_dictionary(1, params.degree, input_columns=(CENTRE_COLUMN,))
    learner_G = ProjectionLearner(map_G)
    learner_H = KoopmanLearner(dictionary)

    combination = CombinationConfig(epsilon=params.epsilon, max_iterations=params.max_iterations, keep_models=True)
    iterative = combine(data, learner_G, learner_H, combination)
    accelerated = combine(data, learner_G, learner_H,
                          CombinationConfig(epsilon=params.epsilon, max_iterations=params.max_iterations,
                                            accelerate=True))
    baseline = residual_learning(data, learner_G, learner_H, first='G')
    models = {
        'linear': learner_G.fit(data),
        'koopman': learner_H.fit(data),
        'residual_learning': baseline,
        'iterative': iterative,
    }

    errors = results.table('error_table', ['method', 'relative_error'])
    stepwise_table = results.table('stepwise_error', ['method', 'step', 'mean', 'std'])
    evaluations = {}
    for method in METHODS:
        evaluation = _evaluate(models[method], grid, test.states)
        evaluations[method] = evaluation
        errors.add(method=method, relative_error=evaluation['relative_error'])
        if evaluation['stepwise'] is not None:
            mean, std = evaluation['stepwise'].mean(axis=0), evaluation['stepwise'].std(axis=0)
            for k in range(len(mean)):
                stepwise_table.add(method=method, step=k, mean=mean[k], std=std[k])

    history = results.table('iteration_history', ['scheme', 'n', 'residual_norm', 'successive_difference',
                                                  'prediction_error', 't_F', 'diffusion_error'])
    for scheme, state in (('plain', iterative), ('accelerated', accelerated)):
        for index, record in enumerate(state.history):
            diffusion_error = None
            if scheme == 'plain':
                model_G = state.model_history[index][0]
                diffusion_error = abs(_diffusion_coefficient(model_G, grid.dt) - params.mu)
            history.add(scheme=scheme, n=record.n, residual_norm=record.residual_norm,
                        successive_difference=record.successive_difference,
                        prediction_error=record.prediction_error, t_F=record.t_F, diffusion_error=diffusion_error)

    snapshots = results.table('reaction_snapshots', ['iteration', 'u', 'learned', 'true'])
    u_grid = np.linspace(-3.0, 3.0, params.reaction_grid)
    true_curve = reaction_term(u_grid, params.eta)
    picks = [(str(k), k) for k in params.snapshot_iterations if k < iterative.iteration]
    picks.append(('converged', iterative.iteration - 1))
    for label, index in picks:
        learned = _reaction_curve(iterative.model_history[index][1], u_grid, grid.dt)
        for u, value, truth in zip(u_grid, learned, true_curve):
            snapshots.add(iteration=label, u=u, learned=value, true=truth)

    # rate and bound diagnostics
    angle = min_angle(subspace_from_learner(learner_G, data), subspace_from_learner(learner_H, data))
    oracle = joint_projection_oracle(data, map_G, _design_dictionary(dictionary))
    eps_F = distance_to_sum_space(data, oracle)
    scale = float(np.abs(test.states).max())
    bounds = results.table('a_priori_bounds', ['n', 'k', 'bound'])
    for n in params.bound_n:
        for k in params.bound_k:
            bound = a_priori_bound(angle.c, eps_F, scale, n, k, norm_F=iterative.target_norm)
            bounds.add(n=n, k=k, bound=bound.value)

    results.summary = {
        'samples': data.count,
        'cfl': grid.cfl(params.mu),
        'iterations': iterative.iteration,
        'converged': iterative.converged,
        'accelerated_iterations': accelerated.iteration,
        'diffusion_estimate': _diffusion_coefficient(iterative.model_G, grid.dt),
        'errors': {method: evaluations[method]['relative_error'] for method in METHODS},
        'angle': angle.to_dict(),
        'eps_F': eps_F,
    }
    return results
