"""
Pytest configuration and fixtures for estimation service tests.
"""

import numpy as np
import pytest

from services.shared.config import Settings
from services.shared.models.mdp import TabularMdp


@pytest.fixture
def test_settings() -> Settings:
    """Create test settings."""
    return Settings(
        environment="development",
        log_level="DEBUG",
        log_format="text",
        seed=None,
    )


@pytest.fixture
def small_mdp() -> TabularMdp:
    """4 states, 2 actions, gamma 0.8, strictly positive kernel."""
    rng = np.random.default_rng(7)
    rewards = rng.random((4, 2))
    transitions = rng.dirichlet(np.ones(4), size=(4, 2))
    return TabularMdp.from_arrays(rewards, transitions, 0.8)


@pytest.fixture
def sparse_mdp() -> TabularMdp:
    """3 states, 1 action, with zero-probability transitions."""
    transitions = np.array(
        [
            [[0.5, 0.5, 0.0]],
            [[0.0, 0.25, 0.75]],
            [[0.0, 0.0, 1.0]],
        ]
    )
    rewards = np.array([[0.2], [0.6], [1.0]])
    return TabularMdp.from_arrays(rewards, transitions, 0.9)
