"""
Pytest configuration and fixtures for planning service tests.
"""

from collections.abc import Callable

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


def make_random_mdp(num_states: int, num_actions: int, gamma: float, seed: int) -> TabularMdp:
    """Random MDP with Dirichlet rows; every transition entry is positive."""
    rng = np.random.default_rng(seed)
    rewards = rng.random((num_states, num_actions))
    transitions = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    return TabularMdp.from_arrays(rewards, transitions, gamma)


@pytest.fixture
def random_mdp_factory() -> Callable[..., TabularMdp]:
    """Factory for small random MDPs."""
    return make_random_mdp


@pytest.fixture
def small_mdp() -> TabularMdp:
    """3 states, 2 actions, gamma 0.8."""
    return make_random_mdp(3, 2, 0.8, seed=11)


@pytest.fixture
def chain_mdp() -> TabularMdp:
    """Two-state chain: state 0 loops w.p. 0.7 (reward 1), state 1 absorbs (reward 0)."""
    transitions = np.array([[[0.7, 0.3]], [[0.0, 1.0]]])
    rewards = np.array([[1.0], [0.0]])
    return TabularMdp.from_arrays(rewards, transitions, 0.9)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for property-style tests."""
    return np.random.default_rng(20240601)
