"""
Nu Rate - Convergence rate of the combination loop against the angle between stencil spaces
"""
import logging
from typing import Dict, Optional

import numpy as np

from modcomb.combination.combiner import CombinationConfig, CombinationState, iterate, iterate_accelerated
from modcomb.combination.diagnostics import (
    closed_form_c_nu,
    joint_projection_oracle,
    min_angle,
    optimal_parameter,
    subspace_from_feature_map,
)
from modcomb.experiments.config import ExperimentConfig, NuRateParameters
from modcomb.learning.hypothesis import DataSet, ProjectionLearner, stencil_feature_map
from modcomb.systems.simulators import Grid2D, initial_fields, simulate_diffusion_2d, stencil_dataset
from modcomb.utils.exporters import ExperimentResults

logger = logging.getLogger(__name__)

# weights over [u_{i-1,j}, u_{i+1,j}, u_ij, u_{i,j-1}, u_{i,j+1}]
FIRST_AXIS_STENCIL = np.array([1.0, 1.0, -2.0, 0.0, 0.0])
SECOND_AXIS_STENCIL = np.array([0.0, 0.0, -2.0, 1.0, 1.0])

HISTORY_COLUMNS = ['nu', 'scheme', 'n', 'residual_norm', 'reference_gap', 't_F']
SLOPE_COLUMNS = ['nu', 'c_closed_form', 'c_measured', 'predicted_slope', 'measured_slope', 'relative_error', 'iterations']
OPTIMAL_COLUMNS = ['dataset', 'label', 'nu', 'c_measured', 'c_closed_form', 'iterations_to_tolerance']


def rate_dataset(params: NuRateParameters, seed: int, margin: int):
    """Five-point neighbourhoods of uniform random fields with their exact diffusion rates"""
    grid = Grid2D(points=params.points, dt=params.dt)
    u0 = initial_fields('uniform', params.fields, grid.shape, seed)
    traj = simulate_diffusion_2d(grid, params.mu1, params.mu2, u0, steps=1, seed=seed, law='uniform')
    return stencil_dataset(traj, grid, target='rate', margin=margin), grid


def nu_feature_map(nu: float, dz: float):
    """Hypothesis space spanned by nu * delta_1 u + delta_2 u"""
    return stencil_feature_map([nu * FIRST_AXIS_STENCIL + SECOND_AXIS_STENCIL], dz, label=f"H(nu={nu:g})")


def first_axis_map(dz: float):
    return stencil_feature_map([FIRST_AXIS_STENCIL], dz, label='G(delta_1)')


def measured_slope(state: CombinationState, floor: float) -> Optional[float]:
    """Least-squares slope of log ||F^n - P F|| against 2n - 1 over records above the floor"""
    cutoff = floor * state.target_norm
    points = [(2 * r.n - 1, np.log(r.reference_gap)) for r in state.history
              if r.reference_gap is not None and r.reference_gap > cutoff]
    if len(points) < 2:
        return None
    x, y = np.array(points).T
    return float(np.polyfit(x, y, 1)[0])


def iterations_to_tolerance(state: CombinationState, tolerance: float) -> Optional[int]:
    """Number of G fits until ||F - F^n|| <= tolerance * ||F||"""
    for record in state.history:
        if record.residual_norm <= tolerance * state.target_norm:
            return record.n + 1
    return None


def _history_rows(table, nu: float, scheme: str, state: CombinationState):
    for record in state.history:
        table.add(nu=nu, scheme=scheme, n=record.n, residual_norm=record.residual_norm,
                  reference_gap=record.reference_gap, t_F=record.t_F)


def _converge(data: DataSet, map_G, map_H, params: NuRateParameters, accelerate: bool = False) -> CombinationState:
    reference = joint_projection_oracle(data, map_G, map_H).predict_data(data)
    learner_G = ProjectionLearner(map_G)
    learner_H = ProjectionLearner(map_H)
    config = CombinationConfig(epsilon=params.epsilon, max_iterations=params.max_iterations, accelerate=accelerate)
    runner = iterate_accelerated if accelerate else iterate
    return runner(data, learner_G, learner_H, config, reference=reference)


def run_nu_rate(config: ExperimentConfig) -> ExperimentResults:
    params: NuRateParameters = config.parameters
    results = ExperimentResults(config.experiment)
    history = results.table('nu_convergence', HISTORY_COLUMNS)
    slopes = results.table('slope_table', SLOPE_COLUMNS)
    optimal = results.table('optimal_nu', OPTIMAL_COLUMNS)

    data, grid = rate_dataset(params, config.seed, params.margin)
    map_G = first_axis_map(grid.dz)
    basis_G = subspace_from_feature_map(map_G, data)
    logger.info("Rate data: %d neighbourhoods (margin %d)", data.count, params.margin)

    worst = 0.0
    for nu in params.nus:
        map_H = nu_feature_map(nu, grid.dz)
        angle = min_angle(basis_G, subspace_from_feature_map(map_H, data))
        plain = _converge(data, map_G, map_H, params)
        accelerated = _converge(data, map_G, map_H, params, accelerate=True)
        _history_rows(history, nu, 'plain', plain)
        _history_rows(history, nu, 'accelerated', accelerated)

        c_closed = closed_form_c_nu(nu)
        predicted = float(np.log(c_closed))
        slope = measured_slope(plain, params.fit_floor)
        relative = None if slope is None else abs(slope - predicted) / abs(predicted)
        worst = max(worst, relative if relative is not None else np.inf)
        slopes.add(nu=nu, c_closed_form=c_closed, c_measured=angle.c, predicted_slope=predicted,
                   measured_slope=slope, relative_error=relative, iterations=plain.iteration)
        logger.info("nu=%g: c=%.6f (closed form %.6f), slope %s", nu, angle.c, c_closed, slope)

    # data including boundary-adjacent points moves the optimum away from -2/3
    datasets = {'interior': (data, basis_G)}
    if params.margin != 0:
        full, _ = rate_dataset(params, config.seed, 0)
        datasets['boundary_inclusive'] = (full, subspace_from_feature_map(map_G, full))

    searches: Dict[str, Dict] = {}
    for name in sorted(datasets):
        dataset, basis = datasets[name]
        search = optimal_parameter(lambda nu: subspace_from_feature_map(nu_feature_map(nu, grid.dz), dataset),
                                   basis)
        searches[name] = search
        candidates = [('searched', search['nu'])] + [('fixed', nu) for nu in params.reference_nus]
        for label, nu in candidates:
            map_H = nu_feature_map(nu, grid.dz)
            angle = min_angle(basis, subspace_from_feature_map(map_H, dataset))
            state = _converge(dataset, map_G, map_H, params)
            optimal.add(dataset=name, label=label, nu=nu, c_measured=angle.c, c_closed_form=closed_form_c_nu(nu),
                        iterations_to_tolerance=iterations_to_tolerance(state, params.optimal_tolerance))

    results.summary = {
        'samples': data.count,
        'margin': params.margin,
        'max_relative_slope_error': worst if np.isfinite(worst) else None,
        'optimal_nu': {name: search['nu'] for name, search in searches.items()},
        'optimal_c': {name: search['c'] for name, search in searches.items()},
        'cfl': grid.cfl(params.mu1, params.mu2),
    }
    return results
