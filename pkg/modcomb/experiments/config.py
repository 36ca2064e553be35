"""
Experiment Config - YAML schema, validation and override precedence
"""
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional

import yaml

from modcomb.control.structures import EXTERNAL_BASES, STRUCTURES
from modcomb.errors import ConfigError
from modcomb.systems.simulators import INITIAL_LAWS

TOP_LEVEL_KEYS = ('experiment', 'seed', 'output_dir', 'report_pdf', 'report_timing', 'parameters')
DEFAULT_OUTPUT_DIR = 'results'
SCENARIOS = ('constant', 'sinusoidal', 'random')


def _at_least(name: str, value, minimum):
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value!r}", key=f"parameters.{name}")


def _positive(name: str, value):
    if not value > 0:
        raise ConfigError(f"must be > 0, got {value!r}", key=f"parameters.{name}")


def _one_of(name: str, value, choices):
    if value not in choices:
        raise ConfigError(f"must be one of {choices}, got {value!r}", key=f"parameters.{name}")


def _non_empty(name: str, values):
    if not values:
        raise ConfigError('must not be empty', key=f"parameters.{name}")


def _check_seed(seed: int, key: str = 'seed'):
    if seed < 0:
        raise ConfigError(f"seed must be >= 0, got {seed}", key=key)


@dataclass
class NuRateParameters:
    """Diffusion rate-of-convergence study over the hyper-parameter nu"""
    nus: List[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    fields: int = 2000
    points: int = 11
    dt: float = 0.001
    mu1: float = 1.0
    mu2: float = 1.0
    margin: int = 1
    epsilon: float = 1e-11
    max_iterations: int = 400
    fit_floor: float = 1e-10
    reference_nus: List[float] = field(default_factory=lambda: [-0.6455, -2.0 / 3.0])
    optimal_tolerance: float = 1e-6

    def validate(self):
        _non_empty('nus', self.nus)
        _at_least('fields', self.fields, 1)
        _at_least('points', self.points, 3)
        _at_least('margin', self.margin, 0)
        _at_least('max_iterations', self.max_iterations, 1)
        for name in ('dt', 'mu1', 'mu2', 'epsilon', 'fit_floor', 'optimal_tolerance'):
            _positive(name, getattr(self, name))


@dataclass
class ReactionDiffusionParameters:
    """Linear stencil model combined with a polynomial Koopman model"""
    n: int = 20
    dt: float = 0.001
    mu: float = 1.0
    eta: float = 0.25
    degree: int = 10
    initial_law: str = 'normal'
    train_trajectories: int = 500
    train_steps: int = 10
    test_trajectories: int = 50
    test_steps: int = 50
    epsilon: float = 1e-8
    max_iterations: int = 500
    snapshot_iterations: List[int] = field(default_factory=lambda: [0, 10, 20])
    reaction_grid: int = 61
    bound_n: List[int] = field(default_factory=lambda: [1, 5, 10, 20])
    bound_k: List[int] = field(default_factory=lambda: [1, 10, 50])

    def validate(self):
        _one_of('initial_law', self.initial_law, INITIAL_LAWS)
        _at_least('n', self.n, 3)
        _at_least('degree', self.degree, 0)
        _at_least('eta', self.eta, 0.0)
        _at_least('reaction_grid', self.reaction_grid, 2)
        for name in ('train_trajectories', 'train_steps', 'test_trajectories', 'test_steps', 'max_iterations'):
            _at_least(name, getattr(self, name), 1)
        for name in ('dt', 'mu', 'epsilon'):
            _positive(name, getattr(self, name))
        for i, k in enumerate(self.snapshot_iterations):
            _at_least(f"snapshot_iterations[{i}]", k, 0)
        for name in ('bound_n', 'bound_k'):
            for i, value in enumerate(getattr(self, name)):
                _at_least(f"{name}[{i}]", value, 1)


@dataclass
class ToySuboptimalityParameters:
    """Two-sample instance plus random direct-sum instances"""
    iterations: int = 30
    epsilon: float = 1e-12
    random_instances: int = 200
    acceleration_instances: int = 50
    samples: int = 40
    features: int = 6

    def validate(self):
        _at_least('iterations', self.iterations, 1)
        _positive('epsilon', self.epsilon)
        _at_least('random_instances', self.random_instances, 0)
        _at_least('acceleration_instances', self.acceleration_instances, 0)
        _at_least('samples', self.samples, 1)
        # G and H each need at least one feature
        _at_least('features', self.features, 2)


@dataclass
class MPCCompareParameters:
    """Predictor structures compared in closed-loop tracking of the controlled oscillator"""
    structures: List[str] = field(default_factory=lambda: ['linear', 'hybrid1', 'hybrid2', 'nonlinear'])
    scenarios: List[str] = field(default_factory=lambda: ['constant', 'sinusoidal', 'random'])
    seeds: int = 20
    horizon: int = 5
    steps: int = 180
    dictionary_size: int = 25
    external_basis: str = 'fourier'
    train_trajectories: int = 200
    train_steps: int = 20
    control_bounds: List[float] = field(default_factory=lambda: [-3.0, 3.0])
    control_weight: float = 0.1
    a0: float = -0.3
    a1: float = 0.3
    dt: float = 0.1
    reference_control: float = 1.0
    reference_external: float = 0.0
    external_amplitude: float = math.pi / 2
    restarts: int = 5
    combination_epsilon: float = 1e-10
    workers: int = 1

    def validate(self):
        _non_empty('structures', self.structures)
        _non_empty('scenarios', self.scenarios)
        for i, structure in enumerate(self.structures):
            _one_of(f"structures[{i}]", structure, STRUCTURES)
        for i, scenario in enumerate(self.scenarios):
            _one_of(f"scenarios[{i}]", scenario, SCENARIOS)
        _one_of('external_basis', self.external_basis, EXTERNAL_BASES)
        for name in ('seeds', 'horizon', 'steps', 'dictionary_size', 'train_trajectories', 'train_steps',
                     'restarts', 'workers'):
            _at_least(name, getattr(self, name), 1)
        for name in ('dt', 'combination_epsilon'):
            _positive(name, getattr(self, name))
        _at_least('control_weight', self.control_weight, 0.0)
        if len(self.control_bounds) != 2 or self.control_bounds[0] > self.control_bounds[1]:
            raise ConfigError(f"expected [lower, upper] with lower <= upper, got {self.control_bounds!r}",
                              key='parameters.control_bounds')


PARAMETERS = {
    'nu_rate': NuRateParameters,
    'reaction_diffusion': ReactionDiffusionParameters,
    'toy_suboptimality': ToySuboptimalityParameters,
    'mpc_compare': MPCCompareParameters,
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output_dir: str = DEFAULT_OUTPUT_DIR
    report_pdf: bool = False
    report_timing: bool = False
    parameters: Any = None

    def __post_init__(self):
        if self.experiment not in PARAMETERS:
            raise ConfigError(f"unknown experiment '{self.experiment}', expected one of {sorted(PARAMETERS)}",
                              key='experiment')
        if self.parameters is None:
            self.parameters = PARAMETERS[self.experiment]()
        _check_seed(self.seed)
        self.parameters.validate()

    def to_dict(self) -> Dict:
        return {
            'experiment': self.experiment,
            'seed': self.seed,
            'output_dir': self.output_dir,
            'report_pdf': self.report_pdf,
            'report_timing': self.report_timing,
            'parameters': asdict(self.parameters),
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> 'ExperimentConfig':
        if not isinstance(payload, Mapping):
            raise ConfigError('configuration must be a mapping')
        unknown = sorted(set(payload) - set(TOP_LEVEL_KEYS))
        if unknown:
            raise ConfigError('unknown key', key=unknown[0])
        if 'experiment' not in payload:
            raise ConfigError('missing required key', key='experiment')

        experiment = payload['experiment']
        if experiment not in PARAMETERS:
            raise ConfigError(f"unknown experiment '{experiment}', expected one of {sorted(PARAMETERS)}",
                              key='experiment')
        return cls(
            experiment=experiment,
            seed=_coerce('seed', payload.get('seed', 0), 0),
            output_dir=_coerce('output_dir', payload.get('output_dir', DEFAULT_OUTPUT_DIR), DEFAULT_OUTPUT_DIR),
            report_pdf=_coerce('report_pdf', payload.get('report_pdf', False), False),
            report_timing=_coerce('report_timing', payload.get('report_timing', False), False),
            parameters=parse_parameters(experiment, payload.get('parameters') or {}),
        )


def _coerce(key: str, value, default):
    """Check value against the type of its default"""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key=key)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if isinstance(default, float):
        # YAML 1.1 reads exponents without a dot (1e-8) as strings
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"expected a number, got {value!r}", key=key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key=key)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key=key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", key=key)
        if default:
            return [_coerce(f"{key}[{i}]", item, default[0]) for i, item in enumerate(value)]
        return list(value)
    return value


def parse_parameters(experiment: str, payload: Mapping):
    cls = PARAMETERS[experiment]
    if not isinstance(payload, Mapping):
        raise ConfigError('expected a mapping', key='parameters')
    defaults = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError('unknown key', key=f"parameters.{unknown[0]}")
    values = {
        name: _coerce(f"parameters.{name}", value, getattr(defaults, name))
        for name, value in payload.items()
    }
    return cls(**values)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a YAML config file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            payload = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", key=path)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML: {e}", key=path)
    return ExperimentConfig.from_dict(payload or {})


def apply_overrides(config: ExperimentConfig, seed: Optional[int] = None, output_dir: Optional[str] = None,
                    environ: Optional[Mapping] = None) -> ExperimentConfig:
    """
    Resolve seed and output directory: CLI flags > environment > file.
    """
    environ = os.environ if environ is None else environ
    env_seed = environ.get('MODCOMB_SEED')
    if env_seed not in (None, ''):
        try:
            config.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"expected an integer, got {env_seed!r}", key='MODCOMB_SEED')
    if environ.get('MODCOMB_OUTPUT_DIR'):
        config.output_dir = environ['MODCOMB_OUTPUT_DIR']

    if seed is not None:
        config.seed = seed
    if output_dir is not None:
        config.output_dir = output_dir
    _check_seed(config.seed, key='MODCOMB_SEED' if seed is None and env_seed not in (None, '') else 'seed')
    return config


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
