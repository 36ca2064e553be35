"""
Errors - Exception hierarchy shared by every modcomb package
"""
from typing import Optional


class ModcombError(ValueError):
    """Base class for all modcomb failures"""


class DimensionMismatchError(ModcombError):
    """Raised when an array does not have the dimension an operation expects"""

    def __init__(self, message: str, expected=None, actual=None):
        if expected is not None or actual is not None:
            message = f"{message} (expected {expected}, got {actual})"
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class EmptyDataSetError(ModcombError):
    pass


class NonFiniteDataError(ModcombError):
    pass


class DegenerateFeatureMapError(ModcombError):
    def __init__(self, label: str = ''):
        suffix = f": {label}" if label else ''
        super().__init__(f"degenerate feature map{suffix}")


class StagnantResidualError(ModcombError):
    def __init__(self, message: str = 'stagnant residual'):
        super().__init__(message)


class DegenerateAngleError(ModcombError):
    def __init__(self, message: str = 'degenerate angle'):
        super().__init__(message)


class InvalidParameterError(ModcombError):
    pass


class MissingInputsError(ModcombError):
    pass


class InfeasibleBoundsError(ModcombError):
    pass


class _StepError(ModcombError):
    """Failure tied to a time-step or closed-loop index"""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} at step {step}")
        self.step = step


class SimulationBlowUpError(_StepError):
    def __init__(self, step: int):
        super().__init__('non-finite state in simulation', step)


class RolloutError(_StepError):
    def __init__(self, step: int):
        super().__init__('non-finite prediction in rollout', step)


class SolverError(_StepError):
    def __init__(self, step: int, details: str = ''):
        message = 'horizon solver failed'
        if details:
            message = f"{message} ({details})"
        super().__init__(message, step)


class ConfigError(ModcombError):
    """Invalid experiment configuration; `key` names the offending entry"""

    def __init__(self, message: str, key: Optional[str] = None):
        if key:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
