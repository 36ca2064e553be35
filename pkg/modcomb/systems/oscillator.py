"""
Oscillator - Controlled oscillator with an externally modulated damping term
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from modcomb.errors import DimensionMismatchError, InvalidParameterError, SimulationBlowUpError
from modcomb.learning.hypothesis import DataSet


@dataclass(frozen=True)
class ControlledOscillator:
    """
    x1' = x2, x2' = -x1 + (a0 + a1 sin e) x2 + c, stepped with forward Euler.

    c is the manipulated input and e an uncontrolled external signal. The
    dependence on e is nonlinear and multiplies the state, so purely linear
    lifted predictors cannot represent it.
    """
    a0: float = -0.3
    a1: float = 0.3
    dt: float = 0.1

    state_dim = 2
    control_dim = 1
    external_dim = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"time step must be positive, got {self.dt}")

    def step(self, x, c, e) -> np.ndarray:
        """One Euler step; rows of x, c and e are independent samples"""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.state_dim:
            raise DimensionMismatchError('oscillator state', expected=self.state_dim, actual=x.shape[1])
        c = np.asarray(c, dtype=float).reshape(-1)
        e = np.asarray(e, dtype=float).reshape(-1)

        x1, x2 = x[:, 0], x[:, 1]
        damping = self.a0 + self.a1 * np.sin(e)
        nxt = np.column_stack([x1 + self.dt * x2, x2 + self.dt * (-x1 + damping * x2 + c)])
        return nxt[0] if single else nxt

    __call__ = step

    def simulate(self, x0, controls, externals) -> np.ndarray:
        """(N + 1, 2) trajectory driven by N controls and external values"""
        controls = np.asarray(controls, dtype=float).reshape(-1, self.control_dim)
        externals = np.asarray(externals, dtype=float).reshape(-1, self.external_dim)
        if len(controls) != len(externals):
            raise DimensionMismatchError('external sequence length', expected=len(controls), actual=len(externals))
        states = [np.asarray(x0, dtype=float).reshape(self.state_dim)]
        for k, (c, e) in enumerate(zip(controls, externals), start=1):
            states.append(self.step(states[-1], c, e))
            if not np.all(np.isfinite(states[-1])):
                raise SimulationBlowUpError(k)
        return np.stack(states)

    def sample_dataset(self, trajectories: int, steps: int, seed: Optional[int] = None,
                       state_box: Sequence[float] = (-2.0, 2.0), control_box: Sequence[float] = (-2.0, 2.0),
                       external_box: Sequence[float] = (0.0, 2.0 * np.pi)) -> DataSet:
        """
        Snapshot pairs from short trajectories with random initial states and
        independent uniform controls and external values at every step.
        """
        if trajectories < 1 or steps < 1:
            raise InvalidParameterError('need at least one trajectory and one step')
        rng = np.random.default_rng(seed)
        x = rng.uniform(*state_box, size=(trajectories, self.state_dim))
        inputs, targets, controls, externals = [], [], [], []
        for _ in range(steps):
            c = rng.uniform(*control_box, size=trajectories)
            e = rng.uniform(*external_box, size=trajectories)
            nxt = self.step(x, c, e)
            inputs.append(x)
            targets.append(nxt)
            controls.append(c)
            externals.append(e)
            x = nxt
        # trajectory-major ordering
        stack = lambda parts: np.stack(parts, axis=1).reshape(trajectories * steps, -1)
        return DataSet(
            inputs=stack(inputs),
            targets=stack(targets),
            controls=stack([c[:, None] for c in controls]),
            externals=stack([e[:, None] for e in externals]),
        )

    def to_dict(self) -> Dict:
        return {'a0': self.a0, 'a1': self.a1, 'dt': self.dt}
