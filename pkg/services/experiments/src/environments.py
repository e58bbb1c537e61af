"""
Experiment environments: random MDPs and MDP files.
"""

import numpy as np

from services.estimation.src.rng import Stream, keyed_generator
from services.experiments.src.config import ExperimentConfig
from services.shared.logging import get_logger
from services.shared.models.mdp import TabularMdp, load_mdp

logger = get_logger(__name__)

MIN_DRAW = 1e-300


def random_mdp(num_states: int, num_actions: int, gamma: float, seed: int) -> TabularMdp:
    """
    Random MDP with R(s, a) ~ U(0, 1) and rows u / sum(u), u i.i.d. U(0, 1).

    Draws below 1e-300 are redrawn, so every transition entry is positive.
    The initial distribution is uniform.
    """
    rng = keyed_generator(seed, Stream.ENVIRONMENT)
    rewards = rng.random((num_states, num_actions))
    u = rng.random((num_states, num_actions, num_states))
    small = u < MIN_DRAW
    while small.any():
        u[small] = rng.random(int(small.sum()))
        small = u < MIN_DRAW
    transitions = u / u.sum(axis=-1, keepdims=True)
    return TabularMdp.from_arrays(rewards, transitions, gamma)


def load_environment(config: ExperimentConfig) -> TabularMdp:
    """The experiment's ground-truth MDP."""
    if config.mdp_path is not None:
        mdp = load_mdp(config.mdp_path)
        logger.info("environment_loaded", path=str(config.mdp_path), num_states=mdp.num_states)
        return mdp
    assert config.random_size is not None
    num_states, num_actions = config.random_size
    logger.info(
        "environment_generated", num_states=num_states, num_actions=num_actions, seed=config.seed
    )
    return random_mdp(num_states, num_actions, config.gamma, config.seed)
