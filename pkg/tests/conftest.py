import numpy as np
import pytest

from . import env  # noqa

from ptde.config import ExperimentConfig, NetConfig, parse_config
from ptde.core import ParamStore, Rng
from ptde.interfaces import EnvSpec

TINY_CONFIG = {
    "env": {"name": "secret_slots", "n_agents": 2, "n_actions": 3, "noise_dims": 2, "obs_dim": 2},
    "variant": "qmix_sgi",
    "nets": {
        "d_h": 8,
        "d_g": 4,
        "d_z": 2,
        "mix_embed": 4,
        "hyper_hidden": 8,
        "student_hidden": 8,
        "critic_hidden": 8,
    },
    "learner": {
        "total_episodes": 16,
        "n_parallel": 4,
        "batch_size": 4,
        "buffer_size": 32,
        "eval_interval": 8,
        "eval_episodes": 8,
        "target_update_interval": 8,
        "epsilon_anneal_steps": 16,
        "ppo_epochs": 2,
    },
    "distill": {"episodes": 10, "epochs": 20, "batch_size": 8, "eval_every": 5, "patience": 3},
    "seeds": [0, 1],
}


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """A config small enough to run every stage in well under a second per seed."""
    return parse_config(TINY_CONFIG)


@pytest.fixture
def tiny_nets() -> NetConfig:
    return NetConfig(**TINY_CONFIG["nets"])


@pytest.fixture
def spec() -> EnvSpec:
    """A multi-step spec with three agents, for network and learner tests."""
    return EnvSpec(n_agents=3, n_actions=5, obs_dim=4, state_dim=7, episode_limit=4, gamma=0.9)


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture
def store() -> ParamStore:
    return ParamStore()


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(99)


# Configure pytest-asyncio to use function scope for all async fixtures by default
def pytest_configure(config):
    """Configure pytest-asyncio to use function scope for all async fixtures."""
    config.option.asyncio_default_fixture_loop_scope = "function"
