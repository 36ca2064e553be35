"""
Simulators - Forward-Euler reaction-diffusion and diffusion fields, snapshot datasets
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from modcomb.errors import DimensionMismatchError, InvalidParameterError, SimulationBlowUpError
from modcomb.learning.hypothesis import DataSet

logger = logging.getLogger(__name__)

INITIAL_LAWS = ('uniform', 'normal')
TARGET_MODES = ('state', 'increment', 'rate')


@dataclass(frozen=True)
class Grid1D:
    """
    Points z_j = j/n, j = 1..n, on [0, 1].

    The state holds u(z_1..z_n); the last entry (z = 1) is the Dirichlet
    boundary and z_0 = 0 is an implicit zero ghost value.
    """
    n: int = 20
    dt: float = 0.001

    def __post_init__(self):
        if self.n < 3:
            raise InvalidParameterError(f"Grid1D needs n >= 3, got {self.n}")
        if not self.dt > 0:
            raise InvalidParameterError(f"time step must be positive, got {self.dt}")

    @property
    def dz(self) -> float:
        return 1.0 / self.n

    @property
    def z(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    @property
    def state_dim(self) -> int:
        return self.n

    def cfl(self, mu: float) -> float:
        return mu * self.dt / self.dz ** 2

    def to_dict(self) -> Dict:
        return {'n': self.n, 'dt': self.dt, 'dz': self.dz}


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid on [0, 1]^2 with ``points`` nodes per axis, boundaries included"""
    points: int = 11
    dt: float = 0.001

    def __post_init__(self):
        if self.points < 3:
            raise InvalidParameterError(f"Grid2D needs >= 3 points per axis, got {self.points}")
        if not self.dt > 0:
            raise InvalidParameterError(f"time step must be positive, got {self.dt}")

    @property
    def dz(self) -> float:
        return 1.0 / (self.points - 1)

    @property
    def shape(self):
        return (self.points, self.points)

    @property
    def state_dim(self) -> int:
        return self.points * self.points

    def cfl(self, mu1: float, mu2: float) -> float:
        return (mu1 + mu2) * self.dt / self.dz ** 2

    def to_dict(self) -> Dict:
        return {'points': self.points, 'dt': self.dt, 'dz': self.dz}


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """s trajectories of m + 1 snapshots, states flattened to K values"""
    states: np.ndarray
    seed: Optional[int] = None
    law: str = 'given'
    parameters: Dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim != 3:
            raise DimensionMismatchError('trajectory array', expected='(s, m + 1, K)', actual=states.shape)
        if not np.all(np.isfinite(states)):
            raise InvalidParameterError('trajectory contains non-finite values')
        states.setflags(write=False)
        object.__setattr__(self, 'states', states)

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def manifest(self) -> Dict:
        return {
            'seed': self.seed,
            'law': self.law,
            'trajectories': self.count,
            'steps': self.steps,
            'state_dim': self.state_dim,
            **self.parameters,
        }


def reaction_term(u, eta: float):
    """R_eta(u) = d/du [eta (u - 1)^2 (u + 1)^2] = 4 eta u (u^2 - 1)"""
    u = np.asarray(u, dtype=float)
    return 4.0 * eta * u * (u * u - 1.0)


def initial_fields(law: str, count: int, shape, seed: Optional[int]) -> np.ndarray:
    """Independent per-point samples, U(0, 1) or N(0, 1)"""
    if law not in INITIAL_LAWS:
        raise InvalidParameterError(f"initial law must be one of {INITIAL_LAWS}, got '{law}'")
    rng = np.random.default_rng(seed)
    size = (count,) + tuple(np.atleast_1d(shape))
    if law == 'uniform':
        return rng.uniform(0.0, 1.0, size=size)
    return rng.standard_normal(size=size)


def _check_finite(u: np.ndarray, step: int):
    if not np.all(np.isfinite(u)):
        raise SimulationBlowUpError(step)


def _second_difference_1d(u: np.ndarray, dz: float) -> np.ndarray:
    zeros = np.zeros(u.shape[:-1] + (1,))
    left = np.concatenate([zeros, u[..., :-1]], axis=-1)
    right = np.concatenate([u[..., 1:], zeros], axis=-1)
    return (left - 2.0 * u + right) / dz ** 2


def simulate_reaction_diffusion_1d(grid: Grid1D, mu: float, eta: float, u0, steps: int,
                                   seed: Optional[int] = None, law: str = 'given') -> TrajectorySet:
    """
    u_j <- u_j + dt (mu (u_{j+1} - 2 u_j + u_{j-1}) / dz^2 + R_eta(u_j)).

    ``u0`` is one field (n,) or a batch (s, n); every trajectory is stepped
    at once. Boundary entries are zeroed and stay zero.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    u = np.array(u0, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if u.ndim != 2 or u.shape[1] != grid.n:
        raise DimensionMismatchError('initial field length', expected=grid.n, actual=u.shape[-1])
    u[:, -1] = 0.0
    if grid.cfl(mu) > 0.5:
        logger.warning("Unstable explicit step: mu*dt/dz^2 = %.3f > 0.5", grid.cfl(mu))

    history = [u]
    with np.errstate(over='ignore', invalid='ignore'):
        for step in range(1, steps + 1):
            u = u + grid.dt * (mu * _second_difference_1d(u, grid.dz) + reaction_term(u, eta))
            u[:, -1] = 0.0
            _check_finite(u, step)
            history.append(u)

    return TrajectorySet(
        states=np.stack(history, axis=1),
        seed=seed,
        law=law,
        parameters={'system': 'reaction_diffusion_1d', 'mu': mu, 'eta': eta, 'cfl': grid.cfl(mu), **grid.to_dict()},
    )


def simulate_diffusion_2d(grid: Grid2D, mu1: float, mu2: float, u0, steps: int,
                          seed: Optional[int] = None, law: str = 'given') -> TrajectorySet:
    """
    u_ij <- u_ij + dt (mu1 d2_{z1} u + mu2 d2_{z2} u) on interior nodes.

    Axis 0 of a field is z1, axis 1 is z2. States are flattened row-major.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    P = grid.points
    u = np.array(u0, dtype=float)
    try:
        if u.ndim == 1 or u.shape == (P, P):
            u = u.reshape(1, P, P)
        elif u.ndim == 2:
            u = u.reshape(-1, P, P)
    except ValueError:
        raise DimensionMismatchError('initial field shape', expected=(P, P), actual=u.shape)
    if u.ndim != 3 or u.shape[1:] != (P, P):
        raise DimensionMismatchError('initial field shape', expected=(P, P), actual=u.shape)
    u[:, 0, :] = u[:, -1, :] = 0.0
    u[:, :, 0] = u[:, :, -1] = 0.0
    if grid.cfl(mu1, mu2) > 0.5:
        logger.warning("Unstable explicit step: (mu1+mu2)*dt/dz^2 = %.3f > 0.5", grid.cfl(mu1, mu2))

    dz2 = grid.dz ** 2
    history = [u]
    with np.errstate(over='ignore', invalid='ignore'):
        for step in range(1, steps + 1):
            centre = u[:, 1:-1, 1:-1]
            d1 = (u[:, :-2, 1:-1] - 2.0 * centre + u[:, 2:, 1:-1]) / dz2
            d2 = (u[:, 1:-1, :-2] - 2.0 * centre + u[:, 1:-1, 2:]) / dz2
            nxt = u.copy()
            nxt[:, 1:-1, 1:-1] = centre + grid.dt * (mu1 * d1 + mu2 * d2)
            u = nxt
            _check_finite(u, step)
            history.append(u)

    states = np.stack(history, axis=1).reshape(u.shape[0], steps + 1, P * P)
    return TrajectorySet(
        states=states,
        seed=seed,
        law=law,
        parameters={'system': 'diffusion_2d', 'mu1': mu1, 'mu2': mu2, 'cfl': grid.cfl(mu1, mu2), **grid.to_dict()},
    )


def generate_dataset(traj: TrajectorySet) -> DataSet:
    """Consecutive snapshot pairs, trajectory by trajectory"""
    inputs = traj.states[:, :-1].reshape(-1, traj.state_dim)
    targets = traj.states[:, 1:].reshape(-1, traj.state_dim)
    return DataSet(inputs=inputs, targets=targets)


def neighborhoods_1d(fields: np.ndarray, margin: int = 0) -> np.ndarray:
    """
    Stencil neighbourhoods [u_{j-1}, u_j, u_{j+1}] of interior points.

    ``fields`` has the grid on its last axis; the result appends a
    (points, 3) block. ``margin`` drops that many points next to each
    boundary.
    """
    fields = np.asarray(fields, dtype=float)
    n = fields.shape[-1]
    idx = np.arange(margin, n - 1 - margin)
    if idx.size == 0:
        raise InvalidParameterError(f"margin {margin} leaves no interior points")
    padded = np.concatenate([np.zeros(fields.shape[:-1] + (1,)), fields], axis=-1)
    return np.stack([padded[..., idx], padded[..., idx + 1], padded[..., idx + 2]], axis=-1)


def neighborhoods_2d(fields: np.ndarray, margin: int = 0) -> np.ndarray:
    """
    Five-point neighbourhoods [u_{i-1,j}, u_{i+1,j}, u_ij, u_{i,j-1}, u_{i,j+1}].

    ``fields`` ends with a (P, P) grid; the result ends with an
    (interior points, 5) block.
    """
    fields = np.asarray(fields, dtype=float)
    P = fields.shape[-1]
    a, b = 1 + margin, P - 1 - margin
    if b <= a:
        raise InvalidParameterError(f"margin {margin} leaves no interior points")
    parts = [
        fields[..., a - 1:b - 1, a:b],
        fields[..., a + 1:b + 1, a:b],
        fields[..., a:b, a:b],
        fields[..., a:b, a - 1:b - 1],
        fields[..., a:b, a + 1:b + 1],
    ]
    lead = fields.shape[:-2]
    return np.stack([p.reshape(lead + (-1,)) for p in parts], axis=-1)


def _local_targets(current: np.ndarray, nxt: np.ndarray, target: str, dt: float) -> np.ndarray:
    if target == 'state':
        return nxt
    if target == 'increment':
        return nxt - current
    return (nxt - current) / dt


def stencil_dataset(traj: TrajectorySet, grid, target: str = 'state', margin: int = 0) -> DataSet:
    """
    Pointwise samples (neighbourhood of u_j at step k, local target at k + 1).

    target 'state' is u_j^{k+1}, 'increment' is u_j^{k+1} - u_j^k and
    'rate' is the increment divided by dt.
    """
    if target not in TARGET_MODES:
        raise InvalidParameterError(f"target must be one of {TARGET_MODES}, got '{target}'")
    if isinstance(grid, Grid1D):
        fields = traj.states
        hoods = neighborhoods_1d(fields[:, :-1], margin)
        centres = neighborhoods_1d(fields[:, 1:], margin)[..., 1]
    elif isinstance(grid, Grid2D):
        fields = traj.states.reshape(traj.count, traj.steps + 1, grid.points, grid.points)
        hoods = neighborhoods_2d(fields[:, :-1], margin)
        centres = neighborhoods_2d(fields[:, 1:], margin)[..., 2]
    else:
        raise InvalidParameterError(f"unsupported grid {type(grid).__name__}")

    current = hoods[..., 1] if isinstance(grid, Grid1D) else hoods[..., 2]
    targets = _local_targets(current, centres, target, grid.dt)
    return DataSet(inputs=hoods.reshape(-1, hoods.shape[-1]), targets=targets.reshape(-1, 1))
