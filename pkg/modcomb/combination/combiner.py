"""
Model Combiner - Alternating residual fits of two learners in G (+) H

Learners are any objects with ``fit(data, targets) -> model`` whose models
expose ``predict_data``, ``predict_design`` and ``blend``. Only the learners'
own fit routines are called; all inner products are taken on the training
data.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from modcomb.errors import InvalidParameterError, StagnantResidualError
from modcomb.learning.hypothesis import DataSet, InnerProductContext, mean_error_norm

logger = logging.getLogger(__name__)

CRITERIA = ('prediction_error', 'successive_difference')
RELAXATIONS = ('both', 'G')
INITIALIZATIONS = ('projection', 'zero')

# Residuals below this fraction of ||F||_D count as numerically converged
NUMERICAL_FLOOR = 1e-12

HISTORY_COLUMNS = ('n', 'residual_norm', 'successive_difference', 't_F')


class Learner(Protocol):
    def fit(self, data: DataSet, targets=None) -> Any:
        ...


@dataclass(frozen=True)
class CombinationConfig:
    """
    Stopping and update options of the combination loop.

    ``epsilon`` is relative to ||F||_D. ``relaxation='both'`` relaxes both
    components with t_F so the recombined residual is the line-search optimum
    along r^{n-1} -> r^n; ``'G'`` relaxes only the G component.
    """
    epsilon: float = 1e-8
    max_iterations: int = 500
    criterion: str = 'prediction_error'
    accelerate: bool = False
    relaxation: str = 'both'
    initialization: str = 'projection'
    stagnation_window: int = 5
    monotonicity_slack: float = 1e-10
    keep_models: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iterations < 1:
            raise InvalidParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.criterion not in CRITERIA:
            raise InvalidParameterError(f"criterion must be one of {CRITERIA}, got '{self.criterion}'")
        if self.relaxation not in RELAXATIONS:
            raise InvalidParameterError(f"relaxation must be one of {RELAXATIONS}, got '{self.relaxation}'")
        if self.initialization not in INITIALIZATIONS:
            raise InvalidParameterError(f"initialization must be one of {INITIALIZATIONS}, got '{self.initialization}'")
        if self.stagnation_window < 1:
            raise InvalidParameterError('stagnation_window must be >= 1')


@dataclass(frozen=True)
class IterationRecord:
    """
    Diagnostics of record n, taken after the G fit (and acceleration) of that
    iteration.

    residual_norm is ||F - F^n||_D; successive_difference is
    ||F^n - F^{n-1}||_D with F^{-1} = 0; prediction_error and step_change are
    the mean-of-norms quantities (1/N) sum ||y_i^n - y_i|| and
    (1/N) sum ||y_i^n - y_i^{n-1}||.
    """
    n: int
    residual_norm: float
    successive_difference: float
    prediction_error: float
    step_change: float
    t_F: Optional[float] = None
    reference_gap: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class StoppingDecision:
    stop: bool
    value: Optional[float]
    threshold: float


@dataclass
class CombinationState:
    """Iterates F_G^n, F_H^n and the history of the combination loop"""
    model_G: Any
    model_H: Any
    target_norm: float
    history: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_value: Optional[float] = None
    stagnation_warning: bool = False
    monotonicity_violations: int = 0
    model_history: List[Tuple[Any, Any]] = field(default_factory=list)

    @property
    def iteration(self) -> int:
        return len(self.history)

    @property
    def last(self) -> Optional[IterationRecord]:
        return self.history[-1] if self.history else None

    def predict(self, design) -> np.ndarray:
        """Combined prediction F_G^n + F_H^n on design rows"""
        design = np.atleast_2d(np.asarray(design, dtype=float))
        return self.model_G.predict_design(design) + self.model_H.predict_design(design)

    predict_design = predict

    def predict_data(self, data: DataSet) -> np.ndarray:
        return self.model_G.predict_data(data) + self.model_H.predict_data(data)

    def history_rows(self) -> List[Dict]:
        return [{key: getattr(record, key) for key in HISTORY_COLUMNS} for record in self.history]

    def summary(self) -> Dict:
        last = self.last
        return {
            'iterations': self.iteration,
            'converged': self.converged,
            'stop_value': self.stop_value,
            'residual_norm': last.residual_norm if last else None,
            'target_norm': self.target_norm,
            'stagnation_warning': self.stagnation_warning,
            'monotonicity_violations': self.monotonicity_violations,
        }


def compute_t_F(r_prev, r_curr, ctx: InnerProductContext) -> float:
    """
    Step length minimizing ||r_prev + t (r_curr - r_prev)||_D.

    Returns:
        <r_prev, r_prev - r_curr>_D / ||r_prev - r_curr||_D^2
    """
    prev = ctx.evaluate(r_prev)
    delta = prev - ctx.evaluate(r_curr)
    denominator = ctx.inner(delta, delta)
    if denominator <= 0.0:
        raise StagnantResidualError()
    return ctx.inner(prev, delta) / denominator


def check_stopping(state: CombinationState, data: DataSet, config: CombinationConfig) -> StoppingDecision:
    """Evaluate the configured criterion on the latest record"""
    scale = state.target_norm if state.target_norm > 0 else 1.0
    threshold = config.epsilon * scale
    record = state.last
    if record is None:
        return StoppingDecision(False, None, threshold)

    if config.criterion == 'prediction_error':
        value = record.prediction_error
    else:
        # the successive criterion needs two completed records
        if state.iteration < 2:
            return StoppingDecision(False, None, threshold)
        value = record.step_change
    return StoppingDecision(value < threshold, value, threshold)


class _Loop:
    """Book-keeping shared by residual learning and both iteration schemes"""

    def __init__(self, data: DataSet, config: CombinationConfig, reference=None):
        self.data = data
        self.config = config
        self.ctx = InnerProductContext(data)
        self.targets = data.targets
        self.reference = None if reference is None else self.ctx.evaluate(reference).reshape(self.targets.shape)
        self.previous = np.zeros_like(self.targets)
        self._non_decreasing = 0

    def record(self, state: CombinationState, combined: np.ndarray, t_F: Optional[float] = None):
        n = state.iteration
        residual = self.targets - combined
        step = combined - self.previous
        record = IterationRecord(
            n=n,
            residual_norm=self.ctx.norm(residual),
            successive_difference=self.ctx.norm(step),
            prediction_error=mean_error_norm(self.targets, combined),
            step_change=mean_error_norm(combined, self.previous),
            t_F=t_F,
            reference_gap=None if self.reference is None else self.ctx.norm(combined - self.reference),
        )
        if state.history:
            self._audit(state, state.history[-1], record)
        state.history.append(record)
        if self.config.keep_models:
            state.model_history.append((state.model_G, state.model_H))
        self.previous = combined
        return record

    def _audit(self, state: CombinationState, before: IterationRecord, after: IterationRecord):
        scale = state.target_norm if state.target_norm > 0 else 1.0
        if after.residual_norm > before.residual_norm + self.config.monotonicity_slack * scale:
            state.monotonicity_violations += 1
            logger.warning(
                "Residual increased at n=%d: %.6e -> %.6e", after.n, before.residual_norm, after.residual_norm
            )

        above_floor = after.residual_norm > NUMERICAL_FLOOR * scale
        if above_floor and after.residual_norm >= before.residual_norm:
            self._non_decreasing += 1
        else:
            self._non_decreasing = 0
        if self._non_decreasing >= self.config.stagnation_window and not state.stagnation_warning:
            state.stagnation_warning = True
            logger.warning(
                "Residual has not decreased for %d consecutive iterations (n=%d)", self._non_decreasing, after.n
            )


def _zero_model(learner: Learner, data: DataSet):
    return learner.fit(data, np.zeros_like(data.targets))


def residual_learning(data: DataSet, learner_G: Learner, learner_H: Learner, first: str = 'G',
                      reference=None) -> CombinationState:
    """
    Single-pass baseline: fit F in one space, then the leftover in the other.

    Returns:
        CombinationState holding one record
    """
    if first not in ('G', 'H'):
        raise InvalidParameterError(f"first must be 'G' or 'H', got '{first}'")
    loop = _Loop(data, CombinationConfig(), reference)
    F = data.targets

    if first == 'G':
        model_G = learner_G.fit(data, F)
        model_H = learner_H.fit(data, F - model_G.predict_data(data))
    else:
        model_H = learner_H.fit(data, F)
        model_G = learner_G.fit(data, F - model_H.predict_data(data))

    state = CombinationState(model_G, model_H, target_norm=loop.ctx.norm(F))
    loop.record(state, model_G.predict_data(data) + model_H.predict_data(data))
    state.converged = True
    return state


def _run(data: DataSet, learner_G: Learner, learner_H: Learner, config: CombinationConfig,
         accelerate: bool, reference=None) -> CombinationState:
    loop = _Loop(data, config, reference)
    F = data.targets

    if config.initialization == 'projection':
        model_H = learner_H.fit(data, F)
    else:
        model_H = _zero_model(learner_H, data)
    pred_H = model_H.predict_data(data)
    model_G = learner_G.fit(data, F - pred_H)
    pred_G = model_G.predict_data(data)

    state = CombinationState(model_G, model_H, target_norm=loop.ctx.norm(F))
    loop.record(state, pred_G + pred_H)
    decision = check_stopping(state, data, config)

    while not decision.stop and state.iteration < config.max_iterations:
        combined_prev = pred_G + pred_H
        new_H = learner_H.fit(data, F - pred_G)
        new_pred_H = new_H.predict_data(data)
        new_G = learner_G.fit(data, F - new_pred_H)
        new_pred_G = new_G.predict_data(data)

        t_F = None
        if accelerate:
            try:
                t_F = compute_t_F(F - combined_prev, F - (new_pred_G + new_pred_H), loop.ctx)
            except StagnantResidualError:
                logger.debug("Acceleration skipped at n=%d: successive iterates coincide", state.iteration)
            if t_F is not None:
                new_G = new_G.blend(model_G, t_F)
                new_pred_G = t_F * new_pred_G + (1.0 - t_F) * pred_G
                if config.relaxation == 'both':
                    new_H = new_H.blend(model_H, t_F)
                    new_pred_H = t_F * new_pred_H + (1.0 - t_F) * pred_H

        model_G, model_H, pred_G, pred_H = new_G, new_H, new_pred_G, new_pred_H
        state.model_G, state.model_H = model_G, model_H
        loop.record(state, pred_G + pred_H, t_F)
        decision = check_stopping(state, data, config)

    state.converged = decision.stop
    state.stop_value = decision.value
    if not decision.stop:
        logger.info("Combination stopped at max_iterations=%d without meeting epsilon", config.max_iterations)
    return state


def iterate(data: DataSet, learner_G: Learner, learner_H: Learner, config: Optional[CombinationConfig] = None,
            reference=None) -> CombinationState:
    """
    Iterative model combination.

    F_H^0 = P_H(F); each iteration fits F_G^n = P_G(F - F_H^n) and then
    F_H^{n+1} = P_H(F - F_G^n). ``reference`` (e.g. oracle predictions on the
    data) adds the gap ||F^n - reference||_D to every record.
    """
    return _run(data, learner_G, learner_H, config or CombinationConfig(), False, reference)


def iterate_accelerated(data: DataSet, learner_G: Learner, learner_H: Learner,
                        config: Optional[CombinationConfig] = None, reference=None) -> CombinationState:
    """
    Combination loop with the t_F relaxation applied after every recomputation.

    The default ``relaxation='both'`` relaxes F_G and F_H together, which is
    the exact line search along r^{n-1} -> r^n. ``relaxation='G'`` is the
    literal form of the accelerated update and relaxes only F_G; on the
    two-sample instance it needs three records instead of finishing after
    one relaxed step.
    """
    config = config or CombinationConfig(accelerate=True)
    if not config.accelerate:
        raise InvalidParameterError('iterate_accelerated needs config.accelerate = True')
    return _run(data, learner_G, learner_H, config, True, reference)


def combine(data: DataSet, learner_G: Learner, learner_H: Learner, config: Optional[CombinationConfig] = None,
            reference=None) -> CombinationState:
    """Dispatch on config.accelerate"""
    config = config or CombinationConfig()
    runner = iterate_accelerated if config.accelerate else iterate
    return runner(data, learner_G, learner_H, config, reference)
