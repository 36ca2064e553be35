"""
Koopman Learners - EDMD dictionaries, operator fits and state extraction
"""
import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from modcomb.errors import DimensionMismatchError, InvalidParameterError
from modcomb.learning.hypothesis import (
    DEFAULT_RCOND,
    DataSet,
    FeatureMap,
    InnerProductContext,
    LeastSquaresSolver,
    output_block_basis,
    polynomial_feature_map,
    resolve_targets,
)

SUPERVISION_MODES = ('state', 'full')


@dataclass(frozen=True, eq=False)
class Dictionary:
    """
    Observable dictionary with layout [1, x, Phi(x)].

    ``feature_map`` lifts one state block. A pointwise dictionary applies the
    scalar map to every component of a ``state_dim`` state with shared
    coefficients. ``input_columns`` picks the state out of wider design rows,
    e.g. the centre value of a stencil neighbourhood.
    """
    feature_map: FeatureMap
    state_dim: int
    descriptor: Dict
    pointwise: bool = False
    input_columns: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.feature_map.dimension_in != self.block_dim:
            raise DimensionMismatchError('dictionary input', expected=self.block_dim, actual=self.feature_map.dimension_in)
        if self.feature_map.dimension_out < self.block_dim + 1:
            raise InvalidParameterError('dictionary needs the constant and the state block')
        if self.input_columns is not None:
            columns = tuple(int(c) for c in self.input_columns)
            if len(columns) != self.state_dim:
                raise DimensionMismatchError('input columns', expected=self.state_dim, actual=len(columns))
            object.__setattr__(self, 'input_columns', columns)
        self._check_layout()

    def _check_layout(self):
        samples = np.tile(np.linspace(-0.9, 1.1, 3).reshape(-1, 1), (1, self.block_dim))
        lifted = self.feature_map.evaluate(samples)
        if not (np.allclose(lifted[:, 0], 1.0) and np.allclose(lifted[:, self.state_slice], samples)):
            raise InvalidParameterError(f"dictionary '{self.feature_map.label}' must have layout [1, x, Phi(x)]")

    @property
    def block_dim(self) -> int:
        return 1 if self.pointwise else self.state_dim

    @property
    def dimension(self) -> int:
        return self.feature_map.dimension_out

    @property
    def state_slice(self) -> slice:
        return slice(1, 1 + self.block_dim)

    @property
    def observable_slice(self) -> slice:
        return slice(1 + self.block_dim, self.dimension)

    @property
    def family(self) -> str:
        return self.descriptor.get('family', 'custom')

    def extraction_matrix(self) -> np.ndarray:
        """Selector g = [0, I, 0]"""
        g = np.zeros((self.block_dim, self.dimension))
        g[:, self.state_slice] = np.eye(self.block_dim)
        return g

    def states(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        rows = arr.reshape(1, -1) if arr.ndim <= 1 else arr
        if rows.ndim != 2 or rows.shape[1] != self.state_dim:
            raise DimensionMismatchError('state dimension', expected=self.state_dim, actual=rows.shape[-1])
        return rows

    def select_state(self, design: np.ndarray) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        if self.input_columns is None:
            return self.states(design)
        if design.ndim != 2 or design.shape[1] <= max(self.input_columns):
            raise DimensionMismatchError('design columns', expected=f"> {max(self.input_columns)}", actual=design.shape[-1])
        return design[:, list(self.input_columns)]

    def lift(self, x) -> np.ndarray:
        """
        Dictionary coordinates z = Psi(x).

        Returns:
            (N, p) rows, or (N * state_dim, p) for pointwise dictionaries
            (components of one sample are consecutive rows)
        """
        states = self.states(x)
        return self.feature_map.evaluate(states.reshape(-1, self.block_dim))

    def to_dict(self) -> Dict:
        return {
            **self.descriptor,
            'state_dim': self.state_dim,
            'pointwise': self.pointwise,
            'input_columns': list(self.input_columns) if self.input_columns is not None else None,
            'dimension': self.dimension,
        }


def build_polynomial_dictionary(state_dim: int, degree: int, input_columns: Optional[Sequence[int]] = None) -> Dictionary:
    """[1, u, u^2, ..., u^degree], applied pointwise when state_dim > 1"""
    if degree < 1:
        raise InvalidParameterError(f"polynomial dictionary degree must be >= 1, got {degree}")
    return Dictionary(
        feature_map=polynomial_feature_map(degree),
        state_dim=state_dim,
        descriptor={'family': 'polynomial', 'degree': degree},
        pointwise=state_dim > 1,
        input_columns=tuple(input_columns) if input_columns is not None else None,
    )


def monomial_exponents(state_dim: int, size: int) -> np.ndarray:
    """Exponent rows: constant, unit vectors, then degree >= 2 monomials in graded order"""
    exponents = [np.zeros(state_dim, dtype=int)]
    exponents.extend(np.eye(state_dim, dtype=int))
    degree = 2
    while len(exponents) < size:
        for combo in itertools.combinations_with_replacement(range(state_dim), degree):
            exponents.append(np.bincount(combo, minlength=state_dim))
            if len(exponents) == size:
                break
        degree += 1
    return np.array(exponents[:size])


def build_monomial_dictionary(state_dim: int, size: int, input_columns: Optional[Sequence[int]] = None) -> Dictionary:
    """Multivariate monomial dictionary truncated to ``size`` components"""
    if size < state_dim + 1:
        raise InvalidParameterError(f"dictionary size must be >= {state_dim + 1}, got {size}")
    exponents = monomial_exponents(state_dim, size)

    def evaluator(x):
        return np.prod(x[:, None, :] ** exponents[None, :, :], axis=2)

    fmap = FeatureMap(state_dim, size, evaluator, f"monomial(K={state_dim}, size={size})")
    return Dictionary(
        feature_map=fmap,
        state_dim=state_dim,
        descriptor={'family': 'monomial', 'size': size, 'exponents': exponents.tolist()},
        input_columns=tuple(input_columns) if input_columns is not None else None,
    )


def build_rbf_dictionary(lower: Sequence[float], upper: Sequence[float], centers_per_dim: int,
                         input_columns: Optional[Sequence[int]] = None) -> Dictionary:
    """
    Gaussian RBF observables exp(-sum_k ((x_k - c_k) / w_k)^2) appended to [1, x].

    Centres form a uniform grid over [lower, upper]; the width along each
    axis is twice the grid spacing.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if centers_per_dim < 2:
        raise InvalidParameterError('rbf dictionary needs at least 2 centres per dimension')
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise InvalidParameterError('rbf range needs lower < upper in every dimension')

    state_dim = lower.size
    axes = [np.linspace(lo, hi, centers_per_dim) for lo, hi in zip(lower, upper)]
    centers = np.array(list(itertools.product(*axes)))
    width = 2.0 * (upper - lower) / (centers_per_dim - 1)

    def evaluator(x):
        scaled = (x[:, None, :] - centers[None, :, :]) / width
        observables = np.exp(-np.sum(scaled ** 2, axis=2))
        return np.hstack([np.ones((x.shape[0], 1)), x, observables])

    fmap = FeatureMap(state_dim, 1 + state_dim + len(centers), evaluator, f"rbf(K={state_dim}, centers={len(centers)})")
    return Dictionary(
        feature_map=fmap,
        state_dim=state_dim,
        descriptor={
            'family': 'rbf',
            'lower': lower.tolist(),
            'upper': upper.tolist(),
            'centers_per_dim': centers_per_dim,
            'width': width.tolist(),
        },
        input_columns=tuple(input_columns) if input_columns is not None else None,
    )


def rbf_dictionary_from_data(states, centers_per_dim: int, input_columns: Optional[Sequence[int]] = None) -> Dictionary:
    states = np.asarray(states, dtype=float).reshape(len(states), -1)
    return build_rbf_dictionary(states.min(axis=0), states.max(axis=0), centers_per_dim, input_columns)


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Finite Koopman approximation x_next = g(K Psi(x))"""
    dictionary: Dictionary
    operator: np.ndarray

    def __post_init__(self):
        operator = np.array(self.operator, dtype=float)
        p = self.dictionary.dimension
        if operator.shape != (p, p):
            raise DimensionMismatchError('Koopman operator shape', expected=(p, p), actual=operator.shape)
        operator.setflags(write=False)
        object.__setattr__(self, 'operator', operator)

    @property
    def extraction(self) -> np.ndarray:
        return self.dictionary.extraction_matrix()

    def evolve(self, z: np.ndarray) -> np.ndarray:
        """One step in dictionary coordinates, K z"""
        return np.asarray(z, dtype=float) @ self.operator.T

    def predict(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        states = self.dictionary.states(arr)
        lifted = self.dictionary.lift(states)
        next_states = lifted @ self.operator[self.dictionary.state_slice].T
        out = next_states.reshape(states.shape)
        return out[0] if arr.ndim <= 1 else out

    def predict_design(self, design: np.ndarray) -> np.ndarray:
        return self.predict(self.dictionary.select_state(design))

    def predict_data(self, data: DataSet) -> np.ndarray:
        return self.predict_design(data.design())

    def blend(self, previous: 'KoopmanModel', t: float) -> 'KoopmanModel':
        return KoopmanModel(self.dictionary, t * self.operator + (1.0 - t) * previous.operator)

    def to_dict(self) -> Dict:
        return {
            'dictionary': self.dictionary.to_dict(),
            'operator': self.operator.tolist(),
        }


def koopman_predict(model: KoopmanModel, x) -> np.ndarray:
    return model.predict(x)


def fit_koopman(data: DataSet, dictionary: Dictionary, residual_targets=None, supervision: str = 'full',
                rcond: float = DEFAULT_RCOND, solver: Optional[LeastSquaresSolver] = None) -> KoopmanModel:
    """
    EDMD fit of K minimizing (1/N) sum ||Psi(y_i) - K Psi(x_i)||^2.

    With ``residual_targets`` the state block of Psi(y_i) is replaced by the
    override. ``supervision='state'`` fits only the state rows (the rows the
    combination loop uses); the other rows keep the constant and are zero.
    """
    if supervision not in SUPERVISION_MODES:
        raise InvalidParameterError(f"supervision must be one of {SUPERVISION_MODES}, got '{supervision}'")
    if data.target_dim != dictionary.state_dim:
        raise DimensionMismatchError('target dimension', expected=dictionary.state_dim, actual=data.target_dim)

    targets = resolve_targets(data, residual_targets)
    if solver is None:
        lifted_inputs = dictionary.lift(dictionary.select_state(data.design()))
        solver = InnerProductContext(data, rcond).least_squares(lifted_inputs, dictionary.feature_map.label)

    state_targets = targets.reshape(-1, dictionary.block_dim)
    p = dictionary.dimension
    if supervision == 'full':
        lifted_targets = dictionary.lift(data.targets).copy()
        lifted_targets[:, dictionary.state_slice] = state_targets
        operator = solver.solve(lifted_targets)
    else:
        operator = np.zeros((p, p))
        operator[0, 0] = 1.0
        operator[dictionary.state_slice] = solver.solve(state_targets)
    return KoopmanModel(dictionary, operator)


class KoopmanLearner:
    """EDMD fit exposed as a projection P_H for the combination loop"""

    def __init__(self, dictionary: Dictionary, supervision: str = 'state', rcond: float = DEFAULT_RCOND):
        if supervision not in SUPERVISION_MODES:
            raise InvalidParameterError(f"supervision must be one of {SUPERVISION_MODES}, got '{supervision}'")
        self.dictionary = dictionary
        self.supervision = supervision
        self.rcond = rcond
        self._data = None
        self._solver = None

    @property
    def label(self) -> str:
        return f"koopman[{self.dictionary.feature_map.label}]"

    def _lifted_inputs(self, data: DataSet) -> np.ndarray:
        return self.dictionary.lift(self.dictionary.select_state(data.design()))

    def solver(self, data: DataSet) -> LeastSquaresSolver:
        if self._data is not data:
            self._solver = InnerProductContext(data, self.rcond).least_squares(self._lifted_inputs(data), self.label)
            self._data = data
        return self._solver

    def fit(self, data: DataSet, targets=None) -> KoopmanModel:
        return fit_koopman(data, self.dictionary, targets, self.supervision, self.rcond, solver=self.solver(data))

    def generating_functions(self, data: DataSet) -> np.ndarray:
        lifted = self._lifted_inputs(data)
        if self.dictionary.pointwise:
            return lifted.reshape(data.count, self.dictionary.state_dim, self.dictionary.dimension)
        return output_block_basis(lifted, self.dictionary.state_dim)


def dictionary_from_descriptor(descriptor: Dict) -> Dictionary:
    """Rebuild a dictionary from its ``to_dict`` payload"""
    family = descriptor.get('family')
    columns = descriptor.get('input_columns')
    state_dim = int(descriptor['state_dim'])
    if family == 'polynomial':
        return build_polynomial_dictionary(state_dim, int(descriptor['degree']), columns)
    if family == 'monomial':
        return build_monomial_dictionary(state_dim, int(descriptor['size']), columns)
    if family == 'rbf':
        return build_rbf_dictionary(descriptor['lower'], descriptor['upper'], int(descriptor['centers_per_dim']), columns)
    raise InvalidParameterError(f"cannot rebuild dictionary family '{family}'")


def koopman_model_from_dict(payload: Dict) -> KoopmanModel:
    return KoopmanModel(dictionary_from_descriptor(payload['dictionary']), np.asarray(payload['operator']))
