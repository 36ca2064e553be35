"""
Metrics - Multi-step rollouts and trajectory error measures
"""
import logging
from typing import Callable, Dict, Optional

import numpy as np

from modcomb.errors import DimensionMismatchError, InvalidParameterError, RolloutError
from modcomb.systems.simulators import TARGET_MODES, Grid1D, Grid2D, neighborhoods_1d, neighborhoods_2d

logger = logging.getLogger(__name__)


class PointwiseFieldModel:
    """
    Whole-field predictor built from a local model acting on stencil neighbourhoods.

    The local model maps neighbourhood rows to the local target ('state',
    'increment' or 'rate'); boundary values stay zero.
    """

    def __init__(self, local_model, grid, target: str = 'state'):
        if target not in TARGET_MODES:
            raise InvalidParameterError(f"target must be one of {TARGET_MODES}, got '{target}'")
        if not isinstance(grid, (Grid1D, Grid2D)):
            raise InvalidParameterError(f"unsupported grid {type(grid).__name__}")
        self.local_model = local_model
        self.grid = grid
        self.target = target

    def _local(self, rows: np.ndarray) -> np.ndarray:
        predictor = getattr(self.local_model, 'predict_design', None) or self.local_model
        return np.asarray(predictor(rows), dtype=float).reshape(-1)

    def __call__(self, field) -> np.ndarray:
        u = np.asarray(field, dtype=float)
        if u.shape != (self.grid.state_dim,):
            raise DimensionMismatchError('field length', expected=self.grid.state_dim, actual=u.shape)
        nxt = np.zeros_like(u)
        if isinstance(self.grid, Grid1D):
            hoods = neighborhoods_1d(u)
            current = hoods[:, 1]
        else:
            P = self.grid.points
            hoods = neighborhoods_2d(u.reshape(P, P))
            current = hoods[:, 2]

        local = self._local(hoods)
        if self.target == 'increment':
            local = current + local
        elif self.target == 'rate':
            local = current + self.grid.dt * local

        if isinstance(self.grid, Grid1D):
            nxt[:-1] = local
        else:
            P = self.grid.points
            inner = nxt.reshape(P, P)
            inner[1:-1, 1:-1] = local.reshape(P - 2, P - 2)
        return nxt


def rollout(model: Callable, x0, steps: int) -> np.ndarray:
    """
    Repeated application x_{k+1} = model(x_k).

    Returns:
        (steps + 1, K) array starting with x0
    """
    if steps < 0:
        raise InvalidParameterError(f"steps must be >= 0, got {steps}")
    step_fn = getattr(model, 'predict', None) if not callable(model) else model
    x = np.asarray(x0, dtype=float).reshape(-1)
    out = [x]
    with np.errstate(over='ignore', invalid='ignore'):
        for k in range(1, steps + 1):
            x = np.asarray(step_fn(x), dtype=float).reshape(-1)
            if not np.all(np.isfinite(x)):
                raise RolloutError(k)
            out.append(x)
    return np.stack(out)


def _as_steps(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    return arr.reshape(arr.shape[0], -1)


def stepwise_error(prediction, reference) -> np.ndarray:
    """e_k = ||x_k^pred - x_k^true|| / ||x^true||, normalised by the whole reference trajectory"""
    pred, ref = _as_steps(prediction), _as_steps(reference)
    if pred.shape != ref.shape:
        raise DimensionMismatchError('trajectory shapes', expected=ref.shape, actual=pred.shape)
    scale = np.linalg.norm(ref)
    if scale == 0:
        raise InvalidParameterError('reference trajectory is identically zero')
    return np.linalg.norm(pred - ref, axis=1) / scale


def domain_relative_error(prediction, reference) -> float:
    """sum |u^pred - u^true| / sum |u^true| over space and time"""
    pred = np.asarray(prediction, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if pred.shape != ref.shape:
        raise DimensionMismatchError('field shapes', expected=ref.shape, actual=pred.shape)
    scale = np.abs(ref).sum()
    if scale == 0:
        raise InvalidParameterError('reference field is identically zero')
    return float(np.abs(pred - ref).sum() / scale)


def stepwise_error_statistics(model: Callable, references: np.ndarray, steps: Optional[int] = None) -> Dict:
    """
    Mean and standard deviation of stepwise errors over test trajectories.

    ``references`` is (s, m + 1, K); each rollout starts from the first
    snapshot of its trajectory.
    """
    references = np.asarray(references, dtype=float)
    steps = references.shape[1] - 1 if steps is None else steps
    errors = np.stack([
        stepwise_error(rollout(model, ref[0], steps), ref[:steps + 1]) for ref in references
    ])
    return {
        'mean': errors.mean(axis=0),
        'std': errors.std(axis=0),
        'final_mean': float(errors[:, -1].mean()),
    }
