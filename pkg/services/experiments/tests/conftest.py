"""
Pytest configuration and fixtures for experiment tests.
"""

import json
from pathlib import Path

import pytest

from services.experiments.src.config import ExperimentConfig, build_config
from services.planning.src.ambiguity import Divergence
from services.shared.config import Settings


@pytest.fixture
def test_settings() -> Settings:
    """Create test settings with small experiment defaults."""
    return Settings(
        environment="development",
        log_level="WARNING",
        log_format="text",
        seed=None,
        workers=1,
        experiment_reps=4,
        experiment_n_grid=[20, 80],
        experiment_gamma=0.7,
        sa_num_states=3,
        sa_num_actions=2,
        s_num_states=3,
        s_num_actions=2,
    )


@pytest.fixture
def tiny_config(test_settings) -> ExperimentConfig:
    """One KL set on a 3x2 random MDP, three replications."""
    return build_config(
        test_settings,
        kinds=[Divergence.KL],
        rhos=[0.2],
        n_list=[30, 120],
        reps=3,
        seed=5,
    )


@pytest.fixture
def mdp_file(tmp_path) -> Path:
    """Two-state MDP document on disk."""
    path = tmp_path / "mdp.json"
    path.write_text(
        json.dumps(
            {
                "num_states": 2,
                "num_actions": 2,
                "gamma": 0.9,
                "rewards": [[1.0, 0.5], [0.0, 0.2]],
                "transitions": [
                    [[0.7, 0.3], [0.4, 0.6]],
                    [[0.2, 0.8], [0.5, 0.5]],
                ],
                "initial_dist": [0.5, 0.5],
            }
        )
    )
    return path
