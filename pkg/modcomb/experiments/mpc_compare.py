"""
MPC Compare - Closed-loop tracking of the controlled oscillator with four predictor structures
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List

import numpy as np

from modcomb.combination.combiner import CombinationConfig
from modcomb.control.mpc import MPCProblem, mean_tracking_error, run_mpc, state_weight_matrix
from modcomb.control.structures import ExternalBasis, fit_predictor
from modcomb.errors import InvalidParameterError
from modcomb.experiments.config import SCENARIOS, ExperimentConfig, MPCCompareParameters
from modcomb.learning.koopman import build_monomial_dictionary
from modcomb.systems.oscillator import ControlledOscillator
from modcomb.utils.exporters import ExperimentResults

logger = logging.getLogger(__name__)

HYBRID_STRUCTURES = ('hybrid1', 'hybrid2')
TRACKED = (0, 1)
RUN_COLUMNS = ['seed', 'scenario', 'structure', 'mean_tracking_error', 'hessian_min_eigenvalue',
               'max_kkt_residual', 'nonconvex_steps', 'median_solver_iterations']


def external_sequence(scenario: str, params: MPCCompareParameters, rng: np.random.Generator) -> np.ndarray:
    """External input over the closed loop: constant, e0 + A sin(pi k / 60), or uniform per step"""
    k = np.arange(params.steps)
    e0 = params.reference_external
    if scenario == 'constant':
        return np.full(params.steps, e0)
    if scenario == 'sinusoidal':
        return e0 + params.external_amplitude * np.sin(np.pi * k / 60.0)
    if scenario == 'random':
        return rng.uniform(0.0, 2.0 * np.pi, size=params.steps)
    raise InvalidParameterError(f"scenario must be one of {SCENARIOS}, got '{scenario}'")


def reference_trajectory(system: ControlledOscillator, params: MPCCompareParameters) -> np.ndarray:
    """Oscillator response to constant control and external inputs, from rest"""
    controls = np.full(params.steps + params.horizon, params.reference_control)
    externals = np.full(params.steps + params.horizon, params.reference_external)
    return system.simulate(np.zeros(system.state_dim), controls, externals)


def run_seed(params: MPCCompareParameters, seed: int, keep_tracks: bool = False) -> Dict:
    """Fit every structure on one training set and run every scenario"""
    system = ControlledOscillator(a0=params.a0, a1=params.a1, dt=params.dt)
    data = system.sample_dataset(params.train_trajectories, params.train_steps, seed=seed)
    dictionary = build_monomial_dictionary(system.state_dim, params.dictionary_size)
    basis = ExternalBasis(params.external_basis, system.external_dim)
    combination = CombinationConfig(criterion='successive_difference', epsilon=params.combination_epsilon)

    x_ref = reference_trajectory(system, params)
    z_ref = dictionary.lift(x_ref)
    rng = np.random.default_rng([seed, 1])
    externals = {scenario: external_sequence(scenario, params, rng) for scenario in params.scenarios}

    rows, tracks, timings, iterations = [], {}, {}, {}
    for structure in params.structures:
        predictor = fit_predictor(structure, data, dictionary, basis, combination)
        Q = state_weight_matrix(predictor)
        R = params.control_weight * np.eye(system.control_dim)
        for scenario in params.scenarios:
            problem = MPCProblem(
                horizon=params.horizon, Q=Q, R=R, reference=z_ref,
                lower=[params.control_bounds[0]], upper=[params.control_bounds[1]],
                externals=externals[scenario].reshape(-1, 1), restarts=params.restarts, seed=seed,
            )
            result = run_mpc(predictor, problem, np.zeros(system.state_dim), externals[scenario], params.steps, system)
            eigs = [v for v in result.hessian_min_eigenvalues if v is not None]
            kkts = [v for v in result.kkt_residuals if v is not None]
            rows.append({
                'seed': seed,
                'scenario': scenario,
                'structure': structure,
                'mean_tracking_error': mean_tracking_error(result, x_ref, TRACKED),
                'hessian_min_eigenvalue': min(eigs) if eigs else None,
                'max_kkt_residual': max(kkts) if kkts else None,
                'nonconvex_steps': result.nonconvex_steps,
                'median_solver_iterations': float(np.median(result.solver_iterations)),
            })
            timings[(scenario, structure)] = result.solve_times
            iterations[(scenario, structure)] = result.solver_iterations
            if keep_tracks:
                tracks[(scenario, structure)] = result.rows()
    return {'rows': rows, 'tracks': tracks, 'timings': timings, 'iterations': iterations}


def _median(values: List[float]):
    return float(np.median(values)) if values else None


def _hybrid_at_most_nonlinear(values: Dict, params: MPCCompareParameters):
    """Whether each hybrid median of per-step values is at most the nonlinear median, per scenario"""
    hybrids = [s for s in params.structures if s in HYBRID_STRUCTURES]
    if 'nonlinear' not in params.structures or not hybrids:
        return None
    for scenario in params.scenarios:
        reference = _median(values.get((scenario, 'nonlinear'), []))
        for structure in hybrids:
            if _median(values.get((scenario, structure), [])) > reference:
                return False
    return True


def run_mpc_compare(config: ExperimentConfig) -> ExperimentResults:
    params: MPCCompareParameters = config.parameters
    results = ExperimentResults(config.experiment)
    seeds = [config.seed + s for s in range(params.seeds)]

    started = time.perf_counter()
    if params.workers > 1:
        with ProcessPoolExecutor(max_workers=params.workers) as pool:
            outcomes = list(pool.map(run_seed, [params] * len(seeds), seeds, [s == seeds[0] for s in seeds]))
    else:
        outcomes = [run_seed(params, seed, seed == seeds[0]) for seed in seeds]
    elapsed = time.perf_counter() - started
    logger.info("MPC comparison over %d seeds finished in %.1f s", len(seeds), elapsed)

    run_columns = RUN_COLUMNS + (['median_solve_ms'] if config.report_timing else [])
    runs = results.table('tracking_runs', run_columns)
    medians = results.table('tracking_medians', ['scenario', 'structure', 'median_tracking_error',
                                                 'median_solver_iterations']
                            + (['median_solve_ms'] if config.report_timing else []))

    errors: Dict = {}
    times: Dict = {}
    counts: Dict = {}
    min_hybrid_eig = None
    for outcome in outcomes:
        for row in outcome['rows']:
            key = (row['scenario'], row['structure'])
            step_times = outcome['timings'][key]
            if config.report_timing:
                row = {**row, 'median_solve_ms': 1e3 * float(np.median(step_times))}
            runs.add(**row)
            errors.setdefault(key, []).append(row['mean_tracking_error'])
            times.setdefault(key, []).extend(step_times.tolist())
            counts.setdefault(key, []).extend(outcome['iterations'][key])
            if row['structure'] in HYBRID_STRUCTURES and row['hessian_min_eigenvalue'] is not None:
                value = row['hessian_min_eigenvalue']
                min_hybrid_eig = value if min_hybrid_eig is None else min(min_hybrid_eig, value)

    for scenario in params.scenarios:
        for structure in params.structures:
            key = (scenario, structure)
            entry = {'scenario': scenario, 'structure': structure, 'median_tracking_error': _median(errors.get(key, [])),
                     'median_solver_iterations': _median(counts.get(key, []))}
            if config.report_timing:
                entry['median_solve_ms'] = 1e3 * _median(times.get(key, []))
            medians.add(**entry)

    track_columns = ['scenario', 'structure', 'step', 'x_0', 'x_1', 'c_0']
    tracking = results.table('tracking_first_seed', track_columns)
    first = outcomes[0]['tracks'] if outcomes else {}
    for (scenario, structure), track in sorted(first.items()):
        for row in track:
            tracking.add(scenario=scenario, structure=structure, **row)

    results.summary = {
        'seeds': len(seeds),
        'median_tracking_error': {f"{s}/{t}": _median(errors.get((s, t), []))
                                  for s in params.scenarios for t in params.structures},
        'hybrid_min_hessian_eigenvalue': min_hybrid_eig,
        'hybrid_convex_certified': min_hybrid_eig is None or min_hybrid_eig >= -1e-10,
        'median_solver_iterations': {f"{s}/{t}": _median(counts.get((s, t), []))
                                     for s in params.scenarios for t in params.structures},
        'hybrid_solves_within_nonlinear': _hybrid_at_most_nonlinear(counts, params),
    }
    if config.report_timing:
        results.summary['median_solve_ms'] = {f"{s}/{t}": 1e3 * _median(times.get((s, t), []))
                                              for s in params.scenarios for t in params.structures}
        results.summary['hybrid_solve_time_within_nonlinear'] = _hybrid_at_most_nonlinear(times, params)
        results.summary['elapsed_s'] = elapsed
    return results
