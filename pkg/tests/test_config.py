import pytest

import settings
from config import RunConfig, load_config, read_toml
from errors import ConfigError


def write(tmp_path, text):
    path = tmp_path / 'run.toml'
    path.write_text(text)
    return str(path)


def test_defaults_follow_settings():
    config = RunConfig()
    assert (config.window, config.batch_size, config.lr, config.epochs) == (96, 16, 1e-3, 50)
    assert config.hidden_dim == settings.HIDDEN_DIM
    assert config.splits == (0.7, 0.1, 0.2)
    assert config.grad_clip == 5.0
    assert config.link_width == config.out_width == config.hidden_dim


def test_preset_sets_hidden_width():
    assert RunConfig(preset='exchange_rate').hidden_dim == 32
    assert RunConfig(preset='traffic').hidden_dim == 128
    assert RunConfig(preset='exchange_rate', hidden_dim=16).hidden_dim == 16


@pytest.mark.parametrize('changes', [
    {'window': 1}, {'horizon': 0}, {'smoothness': 0.0}, {'train_frac': 0.8},
    {'mode': 'sideways'}, {'preset': 'unknown'}, {'dtype': 'float16'}, {'scaler_policy': 'global'},
    {'horizons': []}, {'horizons': [1, 0]},
])
def test_invalid_values(changes):
    with pytest.raises(ConfigError):
        RunConfig(**changes)


def test_toml_with_tables(tmp_path):
    path = write(tmp_path, 'seed = 4\n[model]\nhidden_dim = 8\ngnn_steps = 2\n[data]\nwindow = 24\n')
    assert read_toml(path) == {'seed': 4, 'hidden_dim': 8, 'gnn_steps': 2, 'window': 24}


def test_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match='windw'):
        load_config(write(tmp_path, 'windw = 24\n'))


def test_malformed_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'window = = 3\n'))


def test_flags_override_file(tmp_path):
    path = write(tmp_path, 'window = 24\nepochs = 3\n')
    config = load_config(path, {'epochs': 7, 'lr': None})
    assert (config.window, config.epochs, config.lr) == (24, 7, 1e-3)


def test_environment_default(tmp_path, monkeypatch):
    monkeypatch.setenv(settings.CONFIG_ENV, write(tmp_path, 'horizon = 3\n'))
    assert load_config().horizon == 3


def test_wrong_type_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, 'window = "wide"\n'))


def test_hash_tracks_model_fields_only():
    base = RunConfig()
    assert base.config_hash() == RunConfig().config_hash()
    assert base.replace(epochs=3, seed=9).config_hash() == base.config_hash()
    assert base.replace(gnn_steps=2).config_hash() != base.config_hash()


def test_as_dict_is_complete():
    d = RunConfig().as_dict()
    assert d['window'] == 96
    assert RunConfig(**d) == RunConfig()


def test_horizon_sweep_from_toml(tmp_path):
    config = load_config(write(tmp_path, 'horizons = [1, 3, 6, 9]\n'))
    assert config.horizons == [1, 3, 6, 9]
    assert config.horizon == settings.HORIZON
