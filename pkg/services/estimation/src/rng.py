"""
Keyed random streams.

Every stream is a Philox generator seeded from (seed, *key), so a cell's or a
replication's draws do not depend on the order in which work is scheduled.
"""

from enum import IntEnum

import numpy as np


class Stream(IntEnum):
    """First key component separating the sampling stages."""

    GENERATIVE = 0
    OFFLINE_PAIRS = 1
    OFFLINE_NEXT = 2
    ENVIRONMENT = 3


def keyed_generator(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (seed, *key)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def inverse_cdf(probs: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """
    Categorical draws by inverse CDF, one uniform per draw.

    ``probs`` is a single distribution (K,) shared by all draws or one row
    per draw (n, K). Zero-mass categories are never returned.
    """
    probs = np.asarray(probs, dtype=float)
    uniforms = np.asarray(uniforms, dtype=float)
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= uniforms[..., None]).sum(axis=-1)
    # rounding can leave cdf[-1] slightly below 1
    last = probs.shape[-1] - 1 - np.argmax((probs > 0.0)[..., ::-1], axis=-1)
    return np.minimum(idx, last)
