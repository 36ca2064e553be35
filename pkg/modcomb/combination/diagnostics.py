"""
Diagnostics - Minimum angles between hypothesis spaces, rate bounds and the joint-projection oracle
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from modcomb.errors import DegenerateAngleError, DegenerateFeatureMapError, DimensionMismatchError, InvalidParameterError
from modcomb.learning.hypothesis import (
    DEFAULT_RCOND,
    DataSet,
    FeatureMap,
    FeatureModel,
    InnerProductContext,
    concatenate_feature_maps,
    fit_projection,
    output_block_basis,
)

logger = logging.getLogger(__name__)

# Singular values at or above 1 - tol are treated as shared directions
INTERSECTION_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Orthonormal basis (under <.,.>_D) of the span of some generating functions"""
    basis: np.ndarray          # (N * m, rank), orthonormal columns in the scaled Euclidean sense
    rank: int
    sample_count: int
    output_dim: int
    singular_values: np.ndarray

    def gram(self) -> np.ndarray:
        return self.basis.T @ self.basis


@dataclass(frozen=True)
class AngleReport:
    c0: float
    c: float
    intersection_dimension: int
    rate_per_iteration: float
    cosines: tuple = field(default_factory=tuple)

    @property
    def predicted_slope(self) -> float:
        """log c, the slope of log ||F^n - P F|| against 2n - 1"""
        return float(np.log(self.c)) if self.c > 0 else float('-inf')

    def to_dict(self) -> Dict:
        return {
            'c0': self.c0,
            'c': self.c,
            'intersection_dim': self.intersection_dimension,
            'predicted_slope': self.predicted_slope if self.c > 0 else None,
        }


@dataclass(frozen=True)
class ErrorBound:
    kind: str
    n: Optional[int]
    k: int
    value: float
    inputs: Dict = field(default_factory=dict)


def _flatten(functions: np.ndarray):
    """(N, m, q) or (N, q) evaluations -> (N * m, q) columns"""
    values = np.asarray(functions, dtype=float)
    if values.ndim == 2:
        values = values[:, None, :]
    if values.ndim != 3:
        raise DimensionMismatchError('generating function array', expected='(N, m, q)', actual=values.shape)
    n, m, q = values.shape
    return values.reshape(n * m, q), n, m


def orthonormalize(features, ctx: Optional[InnerProductContext] = None, rcond: Optional[float] = None) -> SubspaceBasis:
    """
    Orthonormal basis of the span of generating functions evaluated on data.

    ``features`` is an (N, q) array of scalar functions or an (N, m, q) array
    of m-output functions; outputs are flattened so the Gram matrix uses the
    summed inner product over coordinates. Columns are scaled by 1/sqrt(N) so
    that the Euclidean inner product of basis columns equals <.,.>_D.
    The rank cutoff is ``rcond``, else the context's regularization floor.
    """
    flat, n, m = _flatten(features)
    if rcond is None:
        rcond = ctx.regularization if ctx is not None else DEFAULT_RCOND
    if ctx is not None and ctx.data.count != n:
        raise DimensionMismatchError('generating functions rows', expected=ctx.data.count, actual=n)
    scaled = flat / np.sqrt(n)
    if not np.any(scaled):
        raise DegenerateFeatureMapError('all generating functions vanish on the data')

    u, s, _ = scipy.linalg.svd(scaled, full_matrices=False)
    rank = int(np.sum(s > rcond * s[0]))
    return SubspaceBasis(basis=u[:, :rank], rank=rank, sample_count=n, output_dim=m, singular_values=s)


def subspace_from_learner(learner, data: DataSet, rcond: float = DEFAULT_RCOND) -> SubspaceBasis:
    """Basis of the hypothesis space a learner projects onto"""
    return orthonormalize(learner.generating_functions(data), InnerProductContext(data, rcond))


def subspace_from_feature_map(feature_map: FeatureMap, data: DataSet, rcond: float = DEFAULT_RCOND) -> SubspaceBasis:
    features = feature_map.evaluate(data.design())
    return orthonormalize(output_block_basis(features, data.target_dim), InnerProductContext(data, rcond))


def min_angle(G: SubspaceBasis, H: SubspaceBasis, intersection_tol: float = INTERSECTION_TOL) -> AngleReport:
    """
    Cosines c0 and c of the minimum angle between two subspaces.

    c0 is the largest singular value of Q_G^T Q_H; singular values >= 1 - tol
    span the intersection, and c is the largest singular value left after
    removing them (0 when none remain).
    """
    if G.basis.shape[0] != H.basis.shape[0] or G.sample_count != H.sample_count:
        raise DimensionMismatchError('bases live on different data', expected=G.basis.shape[0], actual=H.basis.shape[0])

    cosines = scipy.linalg.svdvals(G.basis.T @ H.basis)
    cosines = np.clip(cosines, 0.0, 1.0)
    if cosines.size == 0:
        return AngleReport(0.0, 0.0, 0, 0.0)

    shared = cosines >= 1.0 - intersection_tol
    remaining = cosines[~shared]
    c0 = float(cosines[0])
    c = float(remaining.max()) if remaining.size else 0.0
    return AngleReport(
        c0=c0,
        c=c,
        intersection_dimension=int(np.sum(shared)),
        rate_per_iteration=c ** 2,
        cosines=tuple(float(v) for v in cosines),
    )


def complement_product_norm(G: SubspaceBasis, H: SubspaceBasis) -> float:
    """
    ||P_{G-perp} P_{H-perp}|| restricted to (G-perp cap H-perp)-perp, computed
    inside span(G, H); equals c(G, H).
    """
    joint = np.hstack([G.basis, H.basis])
    u, s, _ = scipy.linalg.svd(joint, full_matrices=False)
    span = u[:, s > DEFAULT_RCOND * s[0]]

    def restricted_projector(basis):
        coords = span.T @ basis
        return coords @ coords.T

    # inside span(G, H) the intersection of both complements is {0}
    identity = np.eye(span.shape[1])
    product = (identity - restricted_projector(G.basis)) @ (identity - restricted_projector(H.basis))
    return float(scipy.linalg.svdvals(product).max())


def closed_form_c_nu(nu: float) -> float:
    """c(G, H_nu) for the stencil spaces b1 and nu * b1 + b2"""
    return float(np.sqrt(max(0.0, 1.0 - 5.0 / (9.0 * nu ** 2 + 12.0 * nu + 9.0))))


def a_priori_bound(c: float, eps_F: float, M: float, n: int, k: int, norm_F: float = 1.0) -> ErrorBound:
    """
    Trajectory error bound [(1 + c^{2n-1} ||F|| + eps_F)^k - 1] M.

    ``norm_F`` rescales the rate term when ||F||_D is not one.
    """
    if not 0.0 <= c <= 1.0:
        raise InvalidParameterError(f"c must lie in [0, 1], got {c}")
    if eps_F < 0 or M <= 0 or n < 1 or k < 1:
        raise InvalidParameterError('need eps_F >= 0, M > 0, n >= 1, k >= 1')
    value = ((1.0 + c ** (2 * n - 1) * norm_F + eps_F) ** k - 1.0) * M
    return ErrorBound(
        kind='a_priori', n=n, k=k, value=float(value),
        inputs={'c': c, 'eps_F': eps_F, 'M': M, 'norm_F': norm_F},
    )


def a_posteriori_bound(c: float, diff_norm: float, M: float, k: int) -> ErrorBound:
    """
    Trajectory error bound from the measured successive difference.

    The quadratic form k^2 M c/(1-c^2) ||F^n - F^{n-1}|| is used while
    k c/(1-c^2) ||F^n - F^{n-1}|| < 1; otherwise the power form
    [(1 + c/(1-c^2) ||F^n - F^{n-1}||)^k - 1] M. Both values are kept in
    ``inputs``.
    """
    if c >= 1.0:
        raise DegenerateAngleError()
    if c < 0 or diff_norm < 0 or M <= 0 or k < 1:
        raise InvalidParameterError('need 0 <= c < 1, diff_norm >= 0, M > 0, k >= 1')

    factor = c / (1.0 - c ** 2) * diff_norm
    power = ((1.0 + factor) ** k - 1.0) * M
    admissible = k * factor < 1.0
    quadratic = k ** 2 * M * factor if admissible else None
    value = quadratic if admissible else power
    return ErrorBound(
        kind='a_posteriori', n=None, k=k, value=float(value),
        inputs={'c': c, 'diff_norm': diff_norm, 'M': M, 'power_form': float(power),
                'quadratic_form': None if quadratic is None else float(quadratic)},
    )


def joint_projection_oracle(data: DataSet, map_G: FeatureMap, map_H: FeatureMap,
                            rcond: float = DEFAULT_RCOND) -> FeatureModel:
    """Intrusive single least-squares fit on [Psi_G, Psi_H]; predictions give P_{G+H}(F)"""
    return fit_projection(data, concatenate_feature_maps(map_G, map_H), rcond=rcond)


def distance_to_sum_space(data: DataSet, oracle: FeatureModel) -> float:
    """||F - P_{G+H} F||_D, the empirical estimate of eps_F"""
    ctx = InnerProductContext(data)
    return ctx.norm(data.targets - oracle.predict_data(data))


def optimal_parameter(space_builder: Callable[[float], SubspaceBasis], G: SubspaceBasis, initial: float = 0.0,
                      gtol: float = 1e-10) -> Dict:
    """
    Hyper-parameter of a family H_nu minimizing c(G, H_nu), searched with BFGS.

    ``space_builder(nu)`` returns the basis of H_nu on the same data as G.
    The search runs on c^2, which is smooth at a zero angle cosine.
    """
    def objective(x):
        return min_angle(G, space_builder(float(x[0]))).c ** 2

    result = minimize(objective, x0=np.array([initial], dtype=float), method='BFGS', options={'gtol': gtol})
    nu = float(result.x[0])
    if not result.success:
        logger.debug("BFGS search for the optimal parameter stopped: %s", result.message)
    return {
        'nu': nu,
        'c': float(np.sqrt(max(result.fun, 0.0))),
        'iterations': int(result.nit),
        'success': bool(result.success),
    }
