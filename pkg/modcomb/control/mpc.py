"""
MPC - Receding-horizon tracking control with lifted predictors
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import lsq_linear, minimize

from modcomb.control.structures import LiftedPredictor
from modcomb.errors import (
    DimensionMismatchError,
    InfeasibleBoundsError,
    InvalidParameterError,
    SimulationBlowUpError,
    SolverError,
)

logger = logging.getLogger(__name__)

# First-order optimality tolerance reported for convex horizon solves
KKT_TOLERANCE = 1e-8
DEFAULT_RESTARTS = 5


def _symmetric_psd(name: str, matrix) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
        raise InvalidParameterError(f"{name} must be a symmetric matrix")
    if np.linalg.eigvalsh(matrix).min() < -1e-10:
        raise InvalidParameterError(f"{name} must be positive semi-definite")
    return matrix


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _window(rows: np.ndarray, start: int, length: int) -> np.ndarray:
    """rows[start:start + length], padded with the last row"""
    idx = np.minimum(np.arange(start, start + length), len(rows) - 1)
    return rows[idx]


@dataclass(frozen=True, eq=False)
class MPCProblem:
    """
    Tracking problem min sum (z_i - z_ref_i)^T Q (z_i - z_ref_i) + c_i^T R c_i
    over a horizon of ``horizon`` steps with box bounds on the controls.

    ``reference`` holds lifted reference states indexed by closed-loop step
    and ``externals`` the external-input forecast; both are padded with
    their last row past the end.
    """
    horizon: int
    Q: np.ndarray
    R: np.ndarray
    reference: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    externals: Optional[np.ndarray] = None
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidParameterError(f"horizon must be >= 1, got {self.horizon}")
        if self.restarts < 1:
            raise InvalidParameterError('need at least one solver start')
        Q = _symmetric_psd('Q', self.Q)
        R = _symmetric_psd('R', self.R)
        m = R.shape[0]
        lower = np.full(m, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.full(m, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.size != m or upper.size != m:
            raise DimensionMismatchError('control bounds', expected=m, actual=(lower.size, upper.size))
        if np.any(lower > upper):
            raise InfeasibleBoundsError('lower control bound exceeds upper bound')
        reference = np.atleast_2d(np.asarray(self.reference, dtype=float))
        if reference.shape[1] != Q.shape[0]:
            raise DimensionMismatchError('reference width', expected=Q.shape[0], actual=reference.shape[1])

        object.__setattr__(self, 'Q', Q)
        object.__setattr__(self, 'R', R)
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)
        object.__setattr__(self, 'reference', reference)
        if self.externals is not None:
            object.__setattr__(self, 'externals', np.asarray(self.externals, dtype=float).reshape(len(self.externals), -1))

    @property
    def control_dim(self) -> int:
        return self.R.shape[0]

    def reference_window(self, step: int) -> np.ndarray:
        """z_ref at steps step + 1 .. step + horizon"""
        return _window(self.reference, step + 1, self.horizon)

    def external_window(self, step: int) -> np.ndarray:
        """External forecast at steps step .. step + horizon - 1"""
        if self.externals is None:
            raise InvalidParameterError('problem has no external forecast')
        return _window(self.externals, step, self.horizon)


@dataclass
class HorizonSolution:
    controls: np.ndarray          # (horizon, m_c)
    cost: float
    convex: bool
    kkt_residual: Optional[float] = None
    hessian_min_eigenvalue: Optional[float] = None
    nonconvex_flag: bool = False
    local_optima: List[float] = field(default_factory=list)
    iterations: int = 0           # solver iterations, summed over restarts


def _check_predictor(pred: LiftedPredictor, problem: MPCProblem, z0: np.ndarray):
    if problem.Q.shape[0] != pred.lifted_dim:
        raise DimensionMismatchError('Q size', expected=pred.lifted_dim, actual=problem.Q.shape[0])
    if problem.control_dim != pred.control_dim:
        raise DimensionMismatchError('R size', expected=pred.control_dim, actual=problem.control_dim)
    if z0.size != pred.lifted_dim:
        raise DimensionMismatchError('lifted initial state', expected=pred.lifted_dim, actual=z0.size)


def _affine_horizon(pred: LiftedPredictor, z0: np.ndarray, externals: np.ndarray):
    """Stacked predictions Z = zeta + Phi C over the horizon"""
    h, p, m = len(externals), pred.lifted_dim, pred.control_dim
    zeta = z0
    Phi = np.zeros((p, h * m))
    zetas, Phis = [], []
    for i, e in enumerate(externals):
        K, B, d = pred.step_matrices(e)
        zeta = K @ zeta + d
        Phi = K @ Phi
        Phi[:, i * m:(i + 1) * m] += B
        zetas.append(zeta)
        Phis.append(Phi.copy())
    return np.concatenate(zetas), np.vstack(Phis)


def _solve_convex(pred: LiftedPredictor, problem: MPCProblem, z0: np.ndarray, step: int) -> HorizonSolution:
    h, m = problem.horizon, problem.control_dim
    zeta, Phi = _affine_horizon(pred, z0, problem.external_window(step))
    LQ = np.kron(np.eye(h), _psd_sqrt(problem.Q))
    LR = np.kron(np.eye(h), _psd_sqrt(problem.R))
    target = problem.reference_window(step).reshape(-1)

    A = np.vstack([LQ @ Phi, LR])
    b = np.concatenate([LQ @ (target - zeta), np.zeros(h * m)])
    lb = np.tile(problem.lower, h)
    ub = np.tile(problem.upper, h)

    fixed = lb == ub
    C = np.where(fixed, lb, 0.0)
    free = ~fixed
    if np.any(free):
        A_free = A[:, free]
        b_free = b - A[:, fixed] @ C[fixed]
        result = lsq_linear(A_free, b_free, bounds=(lb[free], ub[free]), method='bvls', tol=1e-12,
                            max_iter=max(100, 10 * A_free.shape[1]))
        if result.status < 0 or not np.all(np.isfinite(result.x)):
            raise SolverError(step, result.message)
        if result.status == 0:
            logger.warning("Horizon solve at step %d hit the iteration limit", step)
        C[free] = result.x
        hessian_min = float(np.linalg.eigvalsh(2.0 * A_free.T @ A_free).min())
        iterations = int(result.nit)
    else:
        hessian_min = None
        iterations = 0

    residual = A @ C - b
    gradient = 2.0 * A.T @ residual
    scale = max(1.0, float(np.abs(2.0 * A.T @ b).max()))
    kkt = float(np.abs(C - np.clip(C - gradient, lb, ub)).max() / scale)
    if kkt > KKT_TOLERANCE:
        logger.warning("Horizon solve at step %d: KKT residual %.2e above %.0e", step, kkt, KKT_TOLERANCE)

    return HorizonSolution(
        controls=C.reshape(h, m),
        cost=float(residual @ residual),
        convex=True,
        kkt_residual=kkt,
        hessian_min_eigenvalue=hessian_min,
        iterations=iterations,
    )


def _bilinear_objective(pred: LiftedPredictor, problem: MPCProblem, z0: np.ndarray, step: int) -> Callable:
    """Cost and adjoint gradient of the nonlinear structure over the horizon"""
    h, m = problem.horizon, problem.control_dim
    matrices = [pred.bilinear_matrices(e) for e in problem.external_window(step)]
    reference = problem.reference_window(step)
    Q, R = problem.Q, problem.R

    def objective(flat):
        C = flat.reshape(h, m)
        zs, Ks = [z0], []
        for (A, B), c in zip(matrices, C):
            K = A + np.tensordot(c, B, axes=1)
            Ks.append(K)
            zs.append(K @ zs[-1])

        errors = [zs[i + 1] - reference[i] for i in range(h)]
        cost = sum(err @ Q @ err for err in errors) + sum(c @ R @ c for c in C)

        grad = np.zeros((h, m))
        lam = 2.0 * Q @ errors[h - 1]
        for i in range(h - 1, -1, -1):
            # lam holds dJ/dz_{i+1}
            grad[i] = np.einsum('p,kpq,q->k', lam, matrices[i][1], zs[i]) + 2.0 * R @ C[i]
            if i > 0:
                lam = 2.0 * Q @ errors[i - 1] + Ks[i].T @ lam
        return float(cost), grad.reshape(-1)

    return objective


def _solve_nonconvex(pred: LiftedPredictor, problem: MPCProblem, z0: np.ndarray, step: int) -> HorizonSolution:
    h, m = problem.horizon, problem.control_dim
    objective = _bilinear_objective(pred, problem, z0, step)
    lb = np.tile(problem.lower, h)
    ub = np.tile(problem.upper, h)
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None) for lo, hi in zip(lb, ub)]

    rng = np.random.default_rng([problem.seed, step])
    starts = [np.clip(np.zeros(h * m), lb, ub)]
    for _ in range(problem.restarts - 1):
        draw = rng.standard_normal(h * m)
        finite = np.isfinite(lb) & np.isfinite(ub)
        draw[finite] = rng.uniform(lb[finite], ub[finite])
        starts.append(np.clip(draw, lb, ub))

    results = []
    for x0 in starts:
        result = minimize(objective, x0, jac=True, method='L-BFGS-B', bounds=bounds)
        if np.isfinite(result.fun) and np.all(np.isfinite(result.x)):
            results.append(result)
    if not results:
        raise SolverError(step, 'no start produced a finite optimum')

    best = min(results, key=lambda r: r.fun)
    optima = sorted(float(r.fun) for r in results)
    spread = optima[-1] - optima[0]
    nonconvex = spread > 1e-6 * max(1.0, abs(optima[0]))
    if nonconvex:
        logger.debug("Step %d: restarts reached distinct local optima (spread %.3e)", step, spread)

    return HorizonSolution(
        controls=best.x.reshape(h, m),
        cost=float(best.fun),
        convex=False,
        nonconvex_flag=nonconvex,
        local_optima=optima,
        iterations=sum(int(r.nit) for r in results),
    )


def solve_horizon(pred: LiftedPredictor, problem: MPCProblem, z0, step: int = 0) -> HorizonSolution:
    """
    Optimal control sequence over the horizon starting from lifted state z0.

    Convex structures are solved as a bounded linear least-squares problem
    and carry a KKT residual and the smallest Hessian eigenvalue; the
    nonlinear structure runs L-BFGS-B from several seeded starts and keeps
    the best local optimum.
    """
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    _check_predictor(pred, problem, z0)
    try:
        if pred.convex:
            return _solve_convex(pred, problem, z0, step)
        return _solve_nonconvex(pred, problem, z0, step)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise SolverError(step, str(e))


@dataclass
class TrackingResult:
    structure: str
    states: np.ndarray            # (N + 1, K)
    controls: np.ndarray          # (N, m_c)
    solve_times: np.ndarray       # seconds per closed-loop step
    solver_iterations: List[int] = field(default_factory=list)
    kkt_residuals: List[Optional[float]] = field(default_factory=list)
    hessian_min_eigenvalues: List[Optional[float]] = field(default_factory=list)
    nonconvex_steps: int = 0

    def rows(self, include_timing: bool = False) -> List[Dict]:
        out = []
        for k, x in enumerate(self.states):
            row = {'step': k}
            row.update({f"x_{i}": float(v) for i, v in enumerate(x)})
            if k < len(self.controls):
                row.update({f"c_{i}": float(v) for i, v in enumerate(self.controls[k])})
                if include_timing:
                    row['solve_time_ms'] = 1e3 * float(self.solve_times[k])
            out.append(row)
        return out


def run_mpc(pred: LiftedPredictor, problem: MPCProblem, x0, externals, n_steps: int, true_system: Callable) -> TrackingResult:
    """
    Closed loop: lift the measured state, solve the horizon, apply the first
    control to ``true_system(x, c, e)`` with the actual external input.

    The problem's external forecast defaults to the actual sequence.
    """
    externals = np.asarray(externals, dtype=float).reshape(len(externals), -1)
    if len(externals) < n_steps:
        raise DimensionMismatchError('external sequence length', expected=n_steps, actual=len(externals))
    if problem.externals is None:
        problem = replace(problem, externals=externals)

    x = np.asarray(x0, dtype=float).reshape(-1)
    states, controls, times, kkts, eigs, iterations = [x], [], [], [], [], []
    nonconvex = 0
    for i in range(n_steps):
        z = pred.dictionary.lift(x)[0]
        start = time.perf_counter()
        solution = solve_horizon(pred, problem, z, i)
        times.append(time.perf_counter() - start)

        c = solution.controls[0]
        x = np.asarray(true_system(x, c, externals[i]), dtype=float).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise SimulationBlowUpError(i + 1)
        states.append(x)
        controls.append(c)
        kkts.append(solution.kkt_residual)
        eigs.append(solution.hessian_min_eigenvalue)
        iterations.append(solution.iterations)
        nonconvex += int(solution.nonconvex_flag)

    logger.info("Closed loop with %s predictor: %d steps, mean solve %.2f ms",
                pred.structure, n_steps, 1e3 * float(np.mean(times)) if times else 0.0)
    return TrackingResult(
        structure=pred.structure,
        states=np.stack(states),
        controls=np.stack(controls) if controls else np.zeros((0, pred.control_dim)),
        solve_times=np.asarray(times),
        solver_iterations=iterations,
        kkt_residuals=kkts,
        hessian_min_eigenvalues=eigs,
        nonconvex_steps=nonconvex,
    )


def mean_tracking_error(result, reference, tracked_indices: Optional[Sequence[int]] = None) -> float:
    """
    Average over tracked coordinates of max_t |x_t - x_ref_t| / max_t |x_ref_t|.

    ``result`` is a TrackingResult or a (T, K) state array aligned with
    ``reference``.
    """
    states = result.states if isinstance(result, TrackingResult) else np.asarray(result, dtype=float)
    reference = np.asarray(reference, dtype=float)
    T = min(len(states), len(reference))
    states, reference = states[:T], reference[:T]
    indices = range(states.shape[1]) if tracked_indices is None else tracked_indices
    ratios = []
    for idx in indices:
        scale = np.abs(reference[:, idx]).max()
        if scale == 0:
            raise InvalidParameterError(f"reference coordinate {idx} is identically zero")
        ratios.append(np.abs(states[:, idx] - reference[:, idx]).max() / scale)
    return float(np.mean(ratios))


def state_weight_matrix(pred: LiftedPredictor, weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """Q weighting only the state block of the lifted coordinates"""
    Q = np.zeros((pred.lifted_dim, pred.lifted_dim))
    block = pred.dictionary.state_slice
    width = block.stop - block.start
    diag = np.ones(width) if weights is None else np.asarray(weights, dtype=float)
    Q[block, block] = np.diag(diag)
    return Q
