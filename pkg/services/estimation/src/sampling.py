"""
Transition-kernel estimation from generative or offline samples.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, TextIO

import numpy as np
import pandas as pd

from services.estimation.src.rng import Stream, inverse_cdf, keyed_generator
from services.shared.exceptions import UnvisitedCell, ValidationError
from services.shared.logging import get_logger
from services.shared.models.mdp import TabularMdp

logger = get_logger(__name__)

DATASET_COLUMNS = ["s", "a", "s_next", "r"]
BEHAVIOR_TOL = 1e-9


class SamplingMode(str, Enum):
    """Data source behind an estimated model."""

    GENERATIVE = "generative"
    OFFLINE = "offline"
    OFFLINE_TRUNCATED = "offline_truncated"


@dataclass(frozen=True)
class EstimatedModel:
    """
    Frequency estimator p_hat(s'|s,a) = count(s,a,s') / n(s,a).

    Cells with n(s,a) = 0 keep an all-zero row and are reported by
    ``unvisited_cells``.
    """

    p_hat: np.ndarray  # (S, A, S)
    counts: np.ndarray  # (S, A, S) integer
    totals: np.ndarray  # (S, A) integer
    mode: SamplingMode

    @classmethod
    def from_counts(cls, counts: np.ndarray, mode: SamplingMode) -> "EstimatedModel":
        counts = np.asarray(counts, dtype=np.int64)
        totals = counts.sum(axis=-1)
        safe = np.where(totals > 0, totals, 1)
        p_hat = np.where(totals[..., None] > 0, counts / safe[..., None], 0.0)
        return cls(p_hat=p_hat, counts=counts, totals=totals, mode=SamplingMode(mode))

    @property
    def num_states(self) -> int:
        return self.p_hat.shape[0]

    @property
    def num_actions(self) -> int:
        return self.p_hat.shape[1]

    @property
    def unvisited_cells(self) -> list[tuple[int, int]]:
        return [(int(s), int(a)) for s, a in np.argwhere(self.totals == 0)]

    def to_mdp(self, template: TabularMdp) -> TabularMdp:
        """
        Plug the estimate into the template's rewards, gamma and initial distribution.

        Raises:
            UnvisitedCell: some (s, a) has no samples
        """
        unvisited = self.unvisited_cells
        if unvisited:
            raise UnvisitedCell(*unvisited[0])
        return template.with_transitions(self.p_hat)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "transitions": self.p_hat.tolist(),
            "counts": self.counts.tolist(),
            "totals": self.totals.tolist(),
        }


def generative_estimate(
    mdp_truth: TabularMdp,
    n: int,
    seed: int,
    replication: int = 0,
) -> EstimatedModel:
    """
    Draw n next states for every (s, a) and count them.

    Each cell uses its own keyed stream, so the estimate does not depend on
    the order in which cells are visited.
    """
    if n < 1:
        raise ValidationError(f"n={n!r} must be at least 1", {"n": n})
    S, A = mdp_truth.num_states, mdp_truth.num_actions
    counts = np.zeros((S, A, S), dtype=np.int64)
    for s in range(S):
        for a in range(A):
            rng = keyed_generator(seed, Stream.GENERATIVE, replication, s, a)
            draws = inverse_cdf(mdp_truth.transitions[s, a], rng.random(n))
            counts[s, a] = np.bincount(draws, minlength=S)
    logger.debug("generative_sample", n=n, seed=seed, replication=replication)
    return EstimatedModel.from_counts(counts, SamplingMode.GENERATIVE)


# =============================================================================
# Offline data
# =============================================================================


@dataclass(frozen=True)
class OfflineDataset:
    """i.i.d. transitions (s, a, s', r) with (s, a) drawn from the behavior table."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    behavior: np.ndarray  # (S, A)

    @property
    def num_states(self) -> int:
        return self.behavior.shape[0]

    @property
    def num_actions(self) -> int:
        return self.behavior.shape[1]

    @property
    def size(self) -> int:
        return int(self.states.shape[0])

    @property
    def nu_min(self) -> float:
        return float(self.behavior[self.behavior > 0.0].min())

    def cell_counts(self) -> np.ndarray:
        totals = np.zeros((self.num_states, self.num_actions), dtype=np.int64)
        np.add.at(totals, (self.states, self.actions), 1)
        return totals

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "s": self.states,
                "a": self.actions,
                "s_next": self.next_states,
                "r": self.rewards,
            },
            columns=DATASET_COLUMNS,
        )


def uniform_behavior(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / (num_states * num_actions))


def _check_behavior(nu: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (num_states, num_actions):
        raise ValidationError(
            f"behavior table has shape {nu.shape}, expected {(num_states, num_actions)}",
            {"shape": list(nu.shape)},
        )
    if np.any(nu < 0.0) or abs(float(nu.sum()) - 1.0) > BEHAVIOR_TOL:
        raise ValidationError("behavior table must be a probability table", {"sum": float(nu.sum())})
    return nu


def offline_sample(
    mdp_truth: TabularMdp,
    nu: np.ndarray,
    n: int,
    seed: int,
    replication: int = 0,
) -> OfflineDataset:
    """Simulate n tuples: (s, a) ~ nu, s' ~ P*(.|s, a), r = R(s, a)."""
    if n < 1:
        raise ValidationError(f"n={n!r} must be at least 1", {"n": n})
    S, A = mdp_truth.num_states, mdp_truth.num_actions
    nu = _check_behavior(nu, S, A)

    pair_rng = keyed_generator(seed, Stream.OFFLINE_PAIRS, replication)
    cells = inverse_cdf(nu.ravel(), pair_rng.random(n))
    states, actions = np.divmod(cells, A)

    next_rng = keyed_generator(seed, Stream.OFFLINE_NEXT, replication)
    next_states = inverse_cdf(mdp_truth.transitions[states, actions], next_rng.random(n))

    logger.debug("offline_sample", n=n, seed=seed, replication=replication)
    return OfflineDataset(
        states=states.astype(np.int64),
        actions=actions.astype(np.int64),
        next_states=next_states.astype(np.int64),
        rewards=mdp_truth.rewards[states, actions],
        behavior=nu,
    )


def _counts(ds: OfflineDataset, keep: np.ndarray | None = None) -> np.ndarray:
    S, A = ds.num_states, ds.num_actions
    counts = np.zeros((S, A, S), dtype=np.int64)
    s, a, nxt = ds.states, ds.actions, ds.next_states
    if keep is not None:
        s, a, nxt = s[keep], a[keep], nxt[keep]
    np.add.at(counts, (s, a, nxt), 1)
    return counts


def offline_estimate(ds: OfflineDataset) -> EstimatedModel:
    """Frequency estimator over all tuples; unvisited cells stay flagged."""
    model = EstimatedModel.from_counts(_counts(ds), SamplingMode.OFFLINE)
    if model.unvisited_cells:
        logger.warning("offline_unvisited_cells", count=len(model.unvisited_cells))
    return model


def truncate_uniform(ds: OfflineDataset) -> EstimatedModel:
    """
    Keep the first n' = min n(s, a) tuples of every cell, in dataset order.

    Raises:
        UnvisitedCell: some (s, a) never occurs in the dataset
    """
    totals = ds.cell_counts()
    if np.any(totals == 0):
        s, a = np.argwhere(totals == 0)[0]
        raise UnvisitedCell(int(s), int(a))
    n_prime = int(totals.min())

    cell = ds.states * ds.num_actions + ds.actions
    order = np.argsort(cell, kind="stable")
    sorted_cells = cell[order]
    starts = np.searchsorted(sorted_cells, sorted_cells, side="left")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size) - starts

    logger.debug("offline_truncated", n_prime=n_prime, dataset_size=ds.size)
    return EstimatedModel.from_counts(_counts(ds, rank < n_prime), SamplingMode.OFFLINE_TRUNCATED)


def write_dataset_csv(ds: OfflineDataset, path: str | Path | TextIO) -> None:
    ds.to_frame().to_csv(path, index=False)


def read_dataset_csv(
    path: str | Path,
    num_states: int,
    num_actions: int,
    behavior: np.ndarray | None = None,
) -> OfflineDataset:
    """
    Load a dataset written by ``write_dataset_csv``.

    The behavior table is not part of the file; uniform is assumed unless
    given.
    """
    frame = pd.read_csv(path)
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"dataset is missing columns {missing}", {"missing": missing})
    for column, bound in (("s", num_states), ("a", num_actions), ("s_next", num_states)):
        values = frame[column].to_numpy()
        if values.size and (values.min() < 0 or values.max() >= bound):
            raise ValidationError(f"column {column} is out of range", {"column": column})
    nu = uniform_behavior(num_states, num_actions) if behavior is None else behavior
    return OfflineDataset(
        states=frame["s"].to_numpy(dtype=np.int64),
        actions=frame["a"].to_numpy(dtype=np.int64),
        next_states=frame["s_next"].to_numpy(dtype=np.int64),
        rewards=frame["r"].to_numpy(dtype=float),
        behavior=_check_behavior(nu, num_states, num_actions),
    )
