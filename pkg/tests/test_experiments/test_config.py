"""
Test Experiment Configuration
"""
import pytest

from modcomb.errors import ConfigError
from modcomb.experiments.config import (
    ExperimentConfig,
    MPCCompareParameters,
    NuRateParameters,
    apply_overrides,
    dump_config,
    load_config,
)


def test_defaults_per_experiment():
    """Test that parameters default to the experiment's dataclass"""
    config = ExperimentConfig.from_dict({'experiment': 'nu_rate'})

    assert isinstance(config.parameters, NuRateParameters)
    assert config.seed == 0 and config.output_dir == 'results'
    assert config.report_timing is False


def test_unknown_keys_rejected():
    """Test that misspelled keys name the offending entry"""
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({'experiment': 'nu_rate', 'sed': 3})
    assert info.value.key == 'sed'

    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({'experiment': 'nu_rate', 'parameters': {'feilds': 10}})
    assert info.value.key == 'parameters.feilds'


def test_unknown_experiment_and_types():
    """Test experiment ids and value types"""
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'experiment': 'heat_equation'})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'seed': 1})
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({'experiment': 'nu_rate', 'parameters': {'fields': 'many'}})
    assert info.value.key == 'parameters.fields'
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({'experiment': 'nu_rate', 'report_pdf': 'yes'})


def test_numeric_coercion():
    """Test float fields given as integers or exponent strings"""
    config = ExperimentConfig.from_dict({
        'experiment': 'mpc_compare',
        'parameters': {'control_weight': 1, 'combination_epsilon': '1e-8', 'control_bounds': [-2, 2]},
    })
    params: MPCCompareParameters = config.parameters

    assert params.control_weight == 1.0
    assert params.combination_epsilon == 1e-8
    assert params.control_bounds == [-2.0, 2.0]


def test_round_trip_through_dict():
    """Test that to_dict and from_dict preserve every field"""
    config = ExperimentConfig.from_dict({'experiment': 'reaction_diffusion', 'seed': 5, 'parameters': {'degree': 6}})

    again = ExperimentConfig.from_dict(config.to_dict())

    assert again.to_dict() == config.to_dict()
    assert again.parameters.degree == 6


def test_override_precedence():
    """Test CLI flags over environment over file"""
    config = ExperimentConfig.from_dict({'experiment': 'nu_rate', 'seed': 1, 'output_dir': 'from_file'})

    apply_overrides(config, environ={'MODCOMB_SEED': '2', 'MODCOMB_OUTPUT_DIR': 'from_env'})
    assert (config.seed, config.output_dir) == (2, 'from_env')

    apply_overrides(config, seed=3, output_dir='from_cli', environ={'MODCOMB_SEED': '2'})
    assert (config.seed, config.output_dir) == (3, 'from_cli')

    with pytest.raises(ConfigError):
        apply_overrides(config, environ={'MODCOMB_SEED': 'abc'})


def test_load_config_files(tmp_path):
    """Test reading, malformed YAML and missing files"""
    good = tmp_path / 'good.yaml'
    good.write_text('experiment: toy_suboptimality\nseed: 4\nparameters:\n  epsilon: 1.0e-10\n')
    config = load_config(str(good))
    assert config.seed == 4 and config.parameters.epsilon == 1e-10
    assert 'experiment: toy_suboptimality' in dump_config(config)

    bad = tmp_path / 'bad.yaml'
    bad.write_text('experiment: [unclosed\n')
    with pytest.raises(ConfigError):
        load_config(str(bad))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'missing.yaml'))


@pytest.mark.parametrize('experiment, parameters, key', [
    ('reaction_diffusion', {'initial_law': 'gaussian'}, 'parameters.initial_law'),
    ('reaction_diffusion', {'train_trajectories': 0}, 'parameters.train_trajectories'),
    ('mpc_compare', {'structures': ['linear', 'quadratic']}, 'parameters.structures[1]'),
    ('mpc_compare', {'scenarios': ['storm']}, 'parameters.scenarios[0]'),
    ('mpc_compare', {'external_basis': 'wavelet'}, 'parameters.external_basis'),
    ('mpc_compare', {'control_bounds': [1.0, -1.0]}, 'parameters.control_bounds'),
    ('nu_rate', {'fields': 0}, 'parameters.fields'),
    ('nu_rate', {'epsilon': 0.0}, 'parameters.epsilon'),
    ('toy_suboptimality', {'features': 1}, 'parameters.features'),
])
def test_parameter_values_validated(experiment, parameters, key):
    """Test that out-of-range and unknown choice values name their key"""
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({'experiment': experiment, 'parameters': parameters})
    assert info.value.key == key


def test_seed_must_be_non_negative():
    """Test negative seeds from the file, the environment and the flag"""
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({'experiment': 'nu_rate', 'seed': -1})
    assert info.value.key == 'seed'

    config = ExperimentConfig.from_dict({'experiment': 'nu_rate'})
    with pytest.raises(ConfigError) as info:
        apply_overrides(config, environ={'MODCOMB_SEED': '-4'})
    assert info.value.key == 'MODCOMB_SEED'
    with pytest.raises(ConfigError) as info:
        apply_overrides(ExperimentConfig.from_dict({'experiment': 'nu_rate'}), seed=-2, environ={})
    assert info.value.key == 'seed'
