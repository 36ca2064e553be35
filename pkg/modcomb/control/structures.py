"""
Structures - Lifted one-step predictors with control and external inputs
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from modcomb.combination.combiner import CombinationConfig, combine
from modcomb.errors import DimensionMismatchError, InvalidParameterError, MissingInputsError
from modcomb.learning.hypothesis import (
    DEFAULT_RCOND,
    DataSet,
    FeatureMap,
    ProjectionLearner,
    concatenate_feature_maps,
    fit_projection,
    kron_feature_map,
    linear_feature_map,
)
from modcomb.learning.koopman import Dictionary

logger = logging.getLogger(__name__)

STRUCTURES = ('linear', 'hybrid1', 'hybrid2', 'nonlinear')
EXTERNAL_BASES = ('affine', 'sine', 'fourier')
# Structures whose lifted dynamics are affine in the controls
CONVEX_STRUCTURES = ('linear', 'hybrid1', 'hybrid2')


@dataclass(frozen=True)
class ExternalBasis:
    """Scalar functions phi_j(e) weighting the structure's operators; phi_0 = 1"""
    family: str = 'fourier'
    external_dim: int = 1

    def __post_init__(self):
        if self.family not in EXTERNAL_BASES:
            raise InvalidParameterError(f"external basis must be one of {EXTERNAL_BASES}, got '{self.family}'")
        if self.external_dim < 1:
            raise InvalidParameterError('external basis needs at least one external input')

    @property
    def dimension(self) -> int:
        per_input = 2 if self.family == 'fourier' else 1
        return 1 + per_input * self.external_dim

    def evaluate(self, e) -> np.ndarray:
        arr = np.asarray(e, dtype=float)
        single = arr.ndim <= 1
        rows = arr.reshape(1, -1) if single else arr
        if rows.shape[1] != self.external_dim:
            raise DimensionMismatchError('external input', expected=self.external_dim, actual=rows.shape[1])

        blocks = [np.ones((rows.shape[0], 1))]
        if self.family == 'affine':
            blocks.append(rows)
        elif self.family == 'sine':
            blocks.append(np.sin(rows))
        else:
            blocks.extend([np.sin(rows), np.cos(rows)])
        out = np.hstack(blocks)
        return out[0] if single else out


@dataclass(frozen=True, eq=False)
class LiftedPredictor:
    """
    One-step predictor z_next = F(z, c, e) in dictionary coordinates.

    state_operators holds the K_j blocks (p, p), control_operators the B_j
    blocks (p, m_c) and external_operator the C matrix of the linear
    structure. The weights applied to each block depend on the structure:

        linear     K_0 z + B_0 c + C e
        hybrid1    sum_j phi_j(e) K_j z + B_0 c
        hybrid2    K_0 z + sum_j phi_j(e) B_j c
        nonlinear  sum_{j,k} phi_j(e) [1, c]_k K_{j(1+m_c)+k} z
    """
    structure: str
    dictionary: Dictionary
    external_basis: ExternalBasis
    state_operators: np.ndarray
    control_operators: np.ndarray
    external_operator: Optional[np.ndarray] = None
    fit_info: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise InvalidParameterError(f"structure must be one of {STRUCTURES}, got '{self.structure}'")
        p = self.dictionary.dimension
        if self.state_operators.shape[1:] != (p, p):
            raise DimensionMismatchError('state operator blocks', expected=(p, p), actual=self.state_operators.shape[1:])

    @property
    def lifted_dim(self) -> int:
        return self.dictionary.dimension

    @property
    def control_dim(self) -> int:
        return self.control_operators.shape[2]

    @property
    def external_dim(self) -> int:
        return self.external_basis.external_dim

    @property
    def convex(self) -> bool:
        return self.structure in CONVEX_STRUCTURES

    def _check(self, z, c, e):
        z = np.asarray(z, dtype=float).reshape(-1)
        c = np.asarray(c, dtype=float).reshape(-1)
        e = np.asarray(e, dtype=float).reshape(-1)
        if z.size != self.lifted_dim:
            raise DimensionMismatchError('lifted state', expected=self.lifted_dim, actual=z.size)
        if c.size != self.control_dim:
            raise DimensionMismatchError('control input', expected=self.control_dim, actual=c.size)
        if e.size != self.external_dim:
            raise DimensionMismatchError('external input', expected=self.external_dim, actual=e.size)
        return z, c, e

    def step_matrices(self, e) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(K(e), B(e), d(e)) with z_next = K(e) z + B(e) c + d(e); convex structures only"""
        if not self.convex:
            raise InvalidParameterError('the nonlinear structure is not affine in the controls')
        e = np.asarray(e, dtype=float).reshape(-1)
        phi = self.external_basis.evaluate(e)
        p = self.lifted_dim
        if self.structure == 'linear':
            return self.state_operators[0], self.control_operators[0], self.external_operator @ e
        if self.structure == 'hybrid1':
            return np.tensordot(phi, self.state_operators, axes=1), self.control_operators[0], np.zeros(p)
        return self.state_operators[0], np.tensordot(phi, self.control_operators, axes=1), np.zeros(p)

    def bilinear_matrices(self, e) -> Tuple[np.ndarray, np.ndarray]:
        """(A(e), B(e)) with z_next = (A(e) + sum_k c_k B_k(e)) z; nonlinear structure only"""
        if self.structure != 'nonlinear':
            raise InvalidParameterError('bilinear matrices exist for the nonlinear structure only')
        phi = self.external_basis.evaluate(np.asarray(e, dtype=float).reshape(-1))
        m = self.control_dim
        p = self.lifted_dim
        blocks = self.state_operators.reshape(len(phi), 1 + m, p, p)
        weighted = np.tensordot(phi, blocks, axes=1)
        return weighted[0], weighted[1:]

    def predict(self, z, c, e) -> np.ndarray:
        z, c, e = self._check(z, c, e)
        if self.convex:
            K, B, d = self.step_matrices(e)
            return K @ z + B @ c + d
        A, B = self.bilinear_matrices(e)
        return (A + np.tensordot(c, B, axes=1)) @ z

    def to_dict(self) -> Dict:
        return {
            'structure': self.structure,
            'dictionary': self.dictionary.to_dict(),
            'external_basis': {'family': self.external_basis.family, 'external_dim': self.external_dim},
            'state_operators': self.state_operators.tolist(),
            'control_operators': self.control_operators.tolist(),
            'external_operator': None if self.external_operator is None else self.external_operator.tolist(),
        }


def predict_lifted(pred: LiftedPredictor, z, c, e) -> np.ndarray:
    return pred.predict(z, c, e)


def _design_maps(dictionary: Dictionary, basis: ExternalBasis, state_dim: int, control_dim: int) -> Dict[str, FeatureMap]:
    """Feature maps over design rows [x | c | e]"""
    width = state_dim + control_dim + basis.external_dim
    c_cols = list(range(state_dim, state_dim + control_dim))
    e_cols = list(range(state_dim + control_dim, width))
    ones = FeatureMap(width, 1, lambda d: np.ones((d.shape[0], 1)), 'one')
    c_map = linear_feature_map(width, c_cols, 'c')
    return {
        'z': FeatureMap(width, dictionary.dimension, lambda d: dictionary.lift(d[:, :state_dim]), 'Psi(x)'),
        'c': c_map,
        'e': linear_feature_map(width, e_cols, 'e'),
        'phi': FeatureMap(width, basis.dimension, lambda d: basis.evaluate(d[:, e_cols]), f"{basis.family}(e)"),
        'one_c': concatenate_feature_maps(ones, c_map),
    }


def _split(coefficients: np.ndarray, count: int, width: int) -> np.ndarray:
    """(p, count * width) coefficient matrix -> (count, p, width) blocks"""
    p = coefficients.shape[0]
    return coefficients.reshape(p, count, width).transpose(1, 0, 2)


def fit_predictor(structure: str, data: DataSet, dictionary: Dictionary, external_basis: Optional[ExternalBasis] = None,
                  config: Optional[CombinationConfig] = None, rcond: float = DEFAULT_RCOND) -> LiftedPredictor:
    """
    Fit one of the four predictor structures on snapshot pairs (x, c, e) -> x_next.

    The targets are the lifted successors Psi(x_next). 'linear' and
    'nonlinear' are single least-squares fits; the hybrids split their
    operators into a state space G and a control space H and are fitted
    with the combination loop.
    """
    if structure not in STRUCTURES:
        raise InvalidParameterError(f"structure must be one of {STRUCTURES}, got '{structure}'")
    if data.controls is None or data.externals is None:
        raise MissingInputsError(f"structure '{structure}' needs both control and external inputs")
    if dictionary.pointwise or dictionary.input_columns is not None:
        raise InvalidParameterError('predictor dictionaries must lift the whole state')
    basis = external_basis or ExternalBasis('fourier', data.external_dim)
    if basis.external_dim != data.external_dim:
        raise DimensionMismatchError('external basis inputs', expected=data.external_dim, actual=basis.external_dim)

    p = dictionary.dimension
    m = data.control_dim
    q = basis.dimension
    lifted = data.with_targets(dictionary.lift(data.targets))
    maps = _design_maps(dictionary, basis, data.state_dim, m)
    fit_info: Dict = {'samples': data.count, 'lifted_dim': p}
    external_operator = None

    if structure == 'linear':
        model = fit_projection(lifted, concatenate_feature_maps(maps['z'], maps['c'], maps['e']), rcond=rcond)
        W = model.coefficients
        state_ops = W[None, :, :p]
        control_ops = W[None, :, p:p + m]
        external_operator = W[:, p + m:]
    elif structure == 'nonlinear':
        chi = kron_feature_map(maps['phi'], maps['one_c'], 'chi(e, c)')
        model = fit_projection(lifted, kron_feature_map(chi, maps['z']), rcond=rcond)
        state_ops = _split(model.coefficients, q * (1 + m), p)
        control_ops = np.zeros((0, p, m))
    else:
        config = config or CombinationConfig(criterion='successive_difference', epsilon=1e-10)
        if structure == 'hybrid1':
            learner_G = ProjectionLearner(kron_feature_map(maps['phi'], maps['z']), rcond)
            learner_H = ProjectionLearner(maps['c'], rcond)
        else:
            learner_G = ProjectionLearner(maps['z'], rcond)
            learner_H = ProjectionLearner(kron_feature_map(maps['phi'], maps['c']), rcond)
        state = combine(lifted, learner_G, learner_H, config)
        W_G = state.model_G.coefficients
        W_H = state.model_H.coefficients
        if structure == 'hybrid1':
            state_ops = _split(W_G, q, p)
            control_ops = W_H[None]
        else:
            state_ops = W_G[None]
            control_ops = _split(W_H, q, m)
        fit_info['combination'] = state.summary()
        logger.info("Fitted %s predictor in %d combination iterations", structure, state.iteration)

    return LiftedPredictor(
        structure=structure,
        dictionary=dictionary,
        external_basis=basis,
        state_operators=np.asarray(state_ops),
        control_operators=np.asarray(control_ops),
        external_operator=external_operator,
        fit_info=fit_info,
    )
