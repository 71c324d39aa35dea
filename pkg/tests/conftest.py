import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import RunConfig  # noqa: E402
from dataloader import sine_series  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run long training tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running training or timing test')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config(tmp_path):
    return RunConfig(window=8, horizon=1, batch_size=16, hidden_dim=4, gnn_steps=2, epochs=2,
                     dtype='float64', checkpoint=str(tmp_path / 'model.ckpt'),
                     metrics=str(tmp_path / 'metrics.json'), checkpoint_every=0)


@pytest.fixture
def sine_csv(tmp_path):
    series = sine_series(300, 2, period=20.0, seed=3)
    path = tmp_path / 'sine.csv'
    lines = ['a,b'] + [f'{x:.12f},{y:.12f}' for x, y in series.values]
    path.write_text('\n'.join(lines) + '\n')
    return str(path)
