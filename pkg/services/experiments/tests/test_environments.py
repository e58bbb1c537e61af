"""
Tests for experiment environments.
"""

import numpy as np

from services.experiments.src.config import build_config
from services.experiments.src.environments import load_environment, random_mdp


class TestRandomMdp:
    """Tests for random_mdp."""

    def test_shapes_and_ranges(self):
        """Rewards in [0, 1), strictly positive stochastic rows, uniform mu."""
        mdp = random_mdp(5, 3, 0.9, seed=0)
        assert mdp.rewards.shape == (5, 3)
        assert np.all((mdp.rewards >= 0.0) & (mdp.rewards < 1.0))
        assert np.all(mdp.transitions > 0.0)
        np.testing.assert_allclose(mdp.transitions.sum(axis=2), 1.0)
        np.testing.assert_allclose(mdp.initial_dist, np.full(5, 0.2))
        assert mdp.gamma == 0.9

    def test_deterministic_per_seed(self):
        """The same seed should rebuild the same instance."""
        a = random_mdp(4, 2, 0.8, seed=11)
        b = random_mdp(4, 2, 0.8, seed=11)
        c = random_mdp(4, 2, 0.8, seed=12)
        np.testing.assert_array_equal(a.transitions, b.transitions)
        np.testing.assert_array_equal(a.rewards, b.rewards)
        assert not np.array_equal(a.transitions, c.transitions)


class TestLoadEnvironment:
    """Tests for load_environment."""

    def test_random_source(self, tiny_config):
        """A random source should use the config's size, gamma and seed."""
        mdp = load_environment(tiny_config)
        expected = random_mdp(3, 2, tiny_config.gamma, tiny_config.seed)
        np.testing.assert_array_equal(mdp.transitions, expected.transitions)

    def test_file_source(self, test_settings, mdp_file):
        """A file source should load the document."""
        mdp = load_environment(build_config(test_settings, mdp_path=mdp_file))
        assert mdp.num_states == 2
        assert mdp.gamma == 0.9
        np.testing.assert_allclose(mdp.transitions[0, 1], [0.4, 0.6])
