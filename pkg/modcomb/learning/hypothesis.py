"""
Hypothesis Spaces - Feature maps, snapshot datasets and least-squares projection
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import scipy.linalg

from modcomb.errors import (
    DegenerateFeatureMapError,
    DimensionMismatchError,
    EmptyDataSetError,
    InvalidParameterError,
    NonFiniteDataError,
)

logger = logging.getLogger(__name__)

# Relative singular-value cut-off of the minimum-norm solution
DEFAULT_RCOND = 1e-10


def as_samples(values, name: str = 'values') -> np.ndarray:
    """
    Copy values into a float (N, K) sample array.

    A scalar is one sample of dimension one; a flat sequence is read as N
    scalar samples.
    """
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be a 2-D sample array", expected=2, actual=arr.ndim)
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DataSet:
    """Snapshot pairs (x_i, y_i = F(x_i)) with optional control and external inputs"""
    inputs: np.ndarray
    targets: np.ndarray
    controls: Optional[np.ndarray] = None
    externals: Optional[np.ndarray] = None

    def __post_init__(self):
        inputs = as_samples(self.inputs, 'inputs')
        if inputs.shape[0] == 0:
            raise EmptyDataSetError('dataset needs at least one snapshot pair')

        arrays = {'inputs': inputs, 'targets': as_samples(self.targets, 'targets')}
        for name in ('controls', 'externals'):
            value = getattr(self, name)
            if value is not None:
                arrays[name] = as_samples(value, name)

        for name, arr in arrays.items():
            if arr.shape[0] != inputs.shape[0]:
                raise DimensionMismatchError(f"length of {name}", expected=inputs.shape[0], actual=arr.shape[0])
            object.__setattr__(self, name, _frozen(arr))

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    @property
    def state_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def target_dim(self) -> int:
        return self.targets.shape[1]

    @property
    def control_dim(self) -> int:
        return 0 if self.controls is None else self.controls.shape[1]

    @property
    def external_dim(self) -> int:
        return 0 if self.externals is None else self.externals.shape[1]

    def design(self) -> np.ndarray:
        """Regressor rows [inputs | controls | externals]"""
        blocks = [self.inputs] + [b for b in (self.controls, self.externals) if b is not None]
        if len(blocks) == 1:
            return self.inputs
        return np.hstack(blocks)

    def with_targets(self, targets) -> 'DataSet':
        return replace(self, targets=targets)

    def manifest(self) -> Dict:
        return {
            'count': self.count,
            'state_dim': self.state_dim,
            'target_dim': self.target_dim,
            'control_dim': self.control_dim,
            'external_dim': self.external_dim,
        }


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Vectorized dictionary Psi mapping (N, dimension_in) rows to (N, dimension_out) rows"""
    dimension_in: int
    dimension_out: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    label: str

    def evaluate(self, x) -> np.ndarray:
        """
        Evaluate the features of one state (1-D input) or of a batch of rows.

        Returns:
            (p,) for a single state, (N, p) for a batch
        """
        arr = np.asarray(x, dtype=float)
        single = arr.ndim <= 1
        rows = arr.reshape(1, -1) if single else arr
        if rows.ndim != 2 or rows.shape[1] != self.dimension_in:
            raise DimensionMismatchError(
                f"input of feature map '{self.label}'",
                expected=self.dimension_in,
                actual=rows.shape[-1],
            )

        features = np.asarray(self.evaluator(rows), dtype=float)
        if features.shape != (rows.shape[0], self.dimension_out):
            raise DimensionMismatchError(
                f"output of feature map '{self.label}'",
                expected=(rows.shape[0], self.dimension_out),
                actual=features.shape,
            )
        return features[0] if single else features


def evaluate_features(feature_map: FeatureMap, x) -> np.ndarray:
    return feature_map.evaluate(x)


def polynomial_feature_map(degree: int) -> FeatureMap:
    """Scalar monomials [1, x, ..., x^degree]"""
    if degree < 0:
        raise InvalidParameterError(f"polynomial degree must be >= 0, got {degree}")
    return FeatureMap(
        dimension_in=1,
        dimension_out=degree + 1,
        evaluator=lambda x: np.vander(x[:, 0], degree + 1, increasing=True),
        label=f"polynomial(degree={degree})",
    )


def stencil_feature_map(stencils: Sequence[Sequence[float]], spacing: float, label: Optional[str] = None) -> FeatureMap:
    """
    Finite-difference features b_j . u / spacing^2 over a neighbourhood vector u.

    Each row of ``stencils`` is one weight vector b_j; [1, -2, 1] is the
    central second difference.
    """
    weights = np.atleast_2d(np.asarray(stencils, dtype=float))
    if spacing <= 0:
        raise InvalidParameterError(f"stencil spacing must be positive, got {spacing}")
    scale = spacing ** 2
    return FeatureMap(
        dimension_in=weights.shape[1],
        dimension_out=weights.shape[0],
        evaluator=lambda u: (u @ weights.T) / scale,
        label=label or f"stencil({weights.tolist()}, dz={spacing})",
    )


def linear_feature_map(dimension_in: int, columns: Optional[Sequence[int]] = None, label: Optional[str] = None) -> FeatureMap:
    """Identity features, optionally restricted to selected columns"""
    cols = list(range(dimension_in)) if columns is None else [int(c) for c in columns]
    return FeatureMap(
        dimension_in=dimension_in,
        dimension_out=len(cols),
        evaluator=lambda x: x[:, cols],
        label=label or f"linear({cols})",
    )


def concatenate_feature_maps(*maps: FeatureMap) -> FeatureMap:
    """Joint feature map [Psi_1, Psi_2, ...] over a shared input"""
    if not maps:
        raise InvalidParameterError('need at least one feature map')
    dim_in = maps[0].dimension_in
    for fmap in maps[1:]:
        if fmap.dimension_in != dim_in:
            raise DimensionMismatchError(f"input of feature map '{fmap.label}'", expected=dim_in, actual=fmap.dimension_in)
    return FeatureMap(
        dimension_in=dim_in,
        dimension_out=sum(m.dimension_out for m in maps),
        evaluator=lambda x: np.hstack([m.evaluate(x) for m in maps]),
        label=' + '.join(m.label for m in maps),
    )


def kron_feature_map(left: FeatureMap, right: FeatureMap, label: Optional[str] = None) -> FeatureMap:
    """Row-wise Kronecker product, index i * q_right + j holds left_i * right_j"""
    if left.dimension_in != right.dimension_in:
        raise DimensionMismatchError('kron feature inputs', expected=left.dimension_in, actual=right.dimension_in)

    def evaluator(x):
        a = left.evaluate(x)
        b = right.evaluate(x)
        return np.einsum('ni,nj->nij', a, b).reshape(x.shape[0], -1)

    return FeatureMap(
        dimension_in=left.dimension_in,
        dimension_out=left.dimension_out * right.dimension_out,
        evaluator=evaluator,
        label=label or f"kron({left.label}, {right.label})",
    )


def output_block_basis(features: np.ndarray, output_dim: int) -> np.ndarray:
    """
    Generating functions e_k * psi_j of {x -> W Psi(x)} evaluated on data.

    Returns:
        (N, output_dim, output_dim * p) with index k * p + j for e_k * psi_j
    """
    n, p = features.shape
    basis = np.zeros((n, output_dim, output_dim * p))
    for k in range(output_dim):
        basis[:, k, k * p:(k + 1) * p] = features
    return basis


@dataclass(frozen=True, eq=False)
class FeatureModel:
    """Linear-in-coefficients hypothesis x -> W Psi(x)"""
    feature_map: FeatureMap
    coefficients: np.ndarray

    def __post_init__(self):
        weights = np.array(self.coefficients, dtype=float)
        if weights.ndim == 1:
            weights = weights.reshape(1, -1)
        if weights.ndim != 2 or weights.shape[1] != self.feature_map.dimension_out:
            raise DimensionMismatchError(
                'coefficient columns',
                expected=self.feature_map.dimension_out,
                actual=weights.shape[-1],
            )
        object.__setattr__(self, 'coefficients', _frozen(weights))

    @property
    def output_dim(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, x) -> np.ndarray:
        return self.feature_map.evaluate(x) @ self.coefficients.T

    def predict_design(self, design: np.ndarray) -> np.ndarray:
        return self.predict(np.asarray(design, dtype=float).reshape(-1, self.feature_map.dimension_in))

    def predict_data(self, data: DataSet) -> np.ndarray:
        return self.predict_design(data.design())

    def blend(self, previous: 'FeatureModel', t: float) -> 'FeatureModel':
        """t * self + (1 - t) * previous over the same feature map"""
        return FeatureModel(self.feature_map, t * self.coefficients + (1.0 - t) * previous.coefficients)

    def to_dict(self) -> Dict:
        return {
            'feature_map': self.feature_map.label,
            'coefficients': self.coefficients.tolist(),
        }


class LeastSquaresSolver:
    """Truncated-SVD factorization of a feature matrix, reusable for any target"""

    def __init__(self, features, rcond: float = DEFAULT_RCOND, label: str = ''):
        features = np.asarray(features, dtype=float)
        if not np.all(np.isfinite(features)):
            raise NonFiniteDataError(f"non-finite feature values from '{label}'")
        if not np.any(features):
            raise DegenerateFeatureMapError(label)

        u, s, vt = scipy.linalg.svd(features, full_matrices=False)
        keep = s > rcond * s[0]
        self._u = u[:, keep]
        self._s = s[keep]
        self._vt = vt[keep]
        self.rcond = rcond
        self.shape = features.shape

    @property
    def rank(self) -> int:
        return int(self._s.size)

    def solve(self, targets: np.ndarray) -> np.ndarray:
        """Minimum-norm coefficients, shape (K_out, p)"""
        coords = self._u.T @ targets
        return ((self._vt.T / self._s) @ coords).T

    def project(self, targets: np.ndarray) -> np.ndarray:
        """Fitted values on the data"""
        return self._u @ (self._u.T @ targets)


def resolve_targets(data: DataSet, residual_targets=None) -> np.ndarray:
    """Dataset targets, or an override of identical shape"""
    if residual_targets is None:
        targets = data.targets
    else:
        targets = as_samples(residual_targets, 'residual_targets')
        if targets.shape != data.targets.shape:
            raise DimensionMismatchError('residual target shape', expected=data.targets.shape, actual=targets.shape)
    if not np.all(np.isfinite(targets)):
        raise NonFiniteDataError('targets contain non-finite values')
    return targets


def fit_projection(data: DataSet, feature_map: FeatureMap, residual_targets=None,
                   rcond: float = DEFAULT_RCOND, solver: Optional[LeastSquaresSolver] = None) -> FeatureModel:
    """
    Least-squares projection of the targets onto span(feature_map).

    Returns:
        FeatureModel minimizing (1/N) sum ||y_i - W Psi(x_i)||^2 with the
        minimum-norm W
    """
    targets = resolve_targets(data, residual_targets)
    if solver is None:
        ctx = InnerProductContext(data, rcond)
        solver = ctx.least_squares(feature_map.evaluate(data.design()), feature_map.label)
    return FeatureModel(feature_map, solver.solve(targets))


@dataclass(frozen=True, eq=False)
class InnerProductContext:
    """Empirical inner product <f, g>_D = (1/N) sum f(x_i)^T g(x_i) over a reference dataset

    ``regularization`` is the relative singular-value floor of every
    least-squares solve on this data.
    """
    data: DataSet
    regularization: float = DEFAULT_RCOND

    def least_squares(self, features, label: str = '') -> LeastSquaresSolver:
        """Factorize features evaluated on the data, truncated at the regularization floor"""
        features = np.asarray(features, dtype=float)
        if features.shape[0] != self.data.count:
            raise DimensionMismatchError('feature rows', expected=self.data.count, actual=features.shape[0])
        return LeastSquaresSolver(features, self.regularization, label)

    def evaluate(self, f) -> np.ndarray:
        """
        Evaluations of f on the data as an (N, m) array.

        f may be a model with ``predict_data``, a callable on design rows, or
        precomputed values with N leading rows.
        """
        if hasattr(f, 'predict_data'):
            values = f.predict_data(self.data)
        elif callable(f):
            values = f(self.data.design())
        else:
            values = f
        values = np.asarray(values, dtype=float)
        if values.ndim == 0 or values.shape[0] != self.data.count:
            raise DimensionMismatchError('function evaluations', expected=self.data.count, actual=values.shape[:1])
        return values.reshape(self.data.count, -1)

    def inner(self, f, g) -> float:
        a = self.evaluate(f)
        b = self.evaluate(g)
        if a.shape != b.shape:
            raise DimensionMismatchError('inner product operands', expected=a.shape, actual=b.shape)
        return float(np.sum(a * b) / self.data.count)

    def norm(self, f) -> float:
        return float(np.sqrt(max(self.inner(f, f), 0.0)))


def empirical_inner_product(f, g, ctx: InnerProductContext) -> float:
    return ctx.inner(f, g)


def mean_error_norm(targets, predictions) -> float:
    """(1/N) sum ||y_i - y_hat_i||, the mean of per-sample Euclidean norms"""
    a = np.asarray(targets, dtype=float)
    b = np.asarray(predictions, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError('prediction shape', expected=a.shape, actual=b.shape)
    diff = (a - b).reshape(a.shape[0], -1)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


def model_residual_norm(data: DataSet, model) -> float:
    return mean_error_norm(data.targets, model.predict_data(data))


class ProjectionLearner:
    """Projection onto the span of a fixed feature map, usable as P_G or P_H"""

    def __init__(self, feature_map: FeatureMap, rcond: float = DEFAULT_RCOND):
        self.feature_map = feature_map
        self.rcond = rcond
        self._data = None
        self._solver = None

    @property
    def label(self) -> str:
        return self.feature_map.label

    def solver(self, data: DataSet) -> LeastSquaresSolver:
        # factorization is reused while the same dataset object is fitted
        if self._data is not data:
            ctx = InnerProductContext(data, self.rcond)
            self._solver = ctx.least_squares(self.feature_map.evaluate(data.design()), self.label)
            self._data = data
        return self._solver

    def fit(self, data: DataSet, targets=None) -> FeatureModel:
        return fit_projection(data, self.feature_map, targets, self.rcond, solver=self.solver(data))

    def generating_functions(self, data: DataSet) -> np.ndarray:
        return output_block_basis(self.feature_map.evaluate(data.design()), data.target_dim)
