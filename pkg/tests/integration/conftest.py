"""
Integration test configuration.

These suites cross service boundaries and run Monte-Carlo checks. The
statistical ones are marked slow; deselect them with -m "not slow".
"""

import numpy as np
import pytest

from services.experiments.src.environments import random_mdp
from services.shared.config import Settings
from services.shared.models.mdp import TabularMdp


@pytest.fixture
def test_settings() -> Settings:
    return Settings(environment="development", log_level="WARNING", seed=None)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(314159)


@pytest.fixture
def experiment_mdp() -> TabularMdp:
    """Small instance built the way the experiments build theirs."""
    return random_mdp(5, 3, 0.9, seed=2024)


@pytest.fixture
def three_state_chain() -> TabularMdp:
    """Single-action, three-state MDP with a dense kernel."""
    transitions = np.array(
        [
            [[0.5, 0.3, 0.2]],
            [[0.2, 0.5, 0.3]],
            [[0.3, 0.3, 0.4]],
        ]
    )
    rewards = np.array([[0.9], [0.1], [0.5]])
    return TabularMdp.from_arrays(rewards, transitions, 0.8)
