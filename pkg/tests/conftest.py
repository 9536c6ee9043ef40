"""Test configuration for pytest."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the introspect_vmc package to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Set Django settings module for the management command tests
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tests.test_settings')

from introspect_vmc.env.types import ObservationMode  # noqa: E402
from introspect_vmc.policy.config import PolicyConfig  # noqa: E402
from introspect_vmc.policy.model import PolicyModel  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow end-to-end experiments')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def oracle_config():
    """A small oracle-state policy configuration with smooth activations."""
    return PolicyConfig(
        obs_mode=ObservationMode.ORACLE_STATE,
        frames=2,
        encoder_width=6,
        lstm_width=8,
        fc_width=8,
        proprio_tile=1,
        activation='tanh',
        init_rate=0.2,
    )


@pytest.fixture
def grid_config():
    """A small grid-image policy configuration."""
    return PolicyConfig(
        obs_mode=ObservationMode.GRID_IMAGE,
        frames=2,
        conv_channels=(2, 3),
        encoder_width=6,
        lstm_width=8,
        fc_width=8,
        proprio_tile=1,
        activation='tanh',
        init_rate=0.2,
    )


@pytest.fixture
def oracle_policy(oracle_config):
    return PolicyModel(oracle_config, np.random.default_rng(7))


@pytest.fixture
def grid_policy(grid_config):
    return PolicyModel(grid_config, np.random.default_rng(11))
