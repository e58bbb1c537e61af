"""
Tabular MDP data model.

Holds the immutable array-backed types every service operates on, the
validation rules they must satisfy, and the JSON document format used to
store them on disk.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from services.shared.exceptions import (
    BadGamma,
    BadInitialDist,
    BadPolicy,
    RewardOutOfRange,
    RowNotStochastic,
    ValidationError,
)

PROB_TOL = 1e-12


def _frozen(values: Any, dtype: type = float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def renormalize_rows(arr: np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    """
    Rescale rows whose sum is within ``tol`` of one so they sum to one exactly.

    Rows outside the tolerance are returned unchanged so validation can
    reject them with the offending index.
    """
    arr = np.array(arr, dtype=float, copy=True)
    sums = arr.sum(axis=-1, keepdims=True)
    close = np.abs(sums - 1.0) <= tol
    return np.where(close, arr / np.where(sums == 0.0, 1.0, sums), arr)


class PolicyKind(str, Enum):
    """Policy representation."""

    DETERMINISTIC = "deterministic"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class TabularMdp:
    """
    Finite discounted MDP.

    Arrays are copied and made read-only on construction. Construction only
    checks shapes; use ``validate_mdp`` (or ``TabularMdp.from_arrays``) to
    enforce the probabilistic invariants.
    """

    rewards: np.ndarray  # (S, A)
    transitions: np.ndarray  # (S, A, S)
    gamma: float
    initial_dist: np.ndarray  # (S,)

    def __post_init__(self) -> None:
        rewards = _frozen(self.rewards)
        transitions = _frozen(self.transitions)
        initial_dist = _frozen(self.initial_dist)
        if rewards.ndim != 2 or rewards.shape[0] < 1 or rewards.shape[1] < 1:
            raise ValidationError("rewards must be a non-empty (S, A) table")
        num_states, num_actions = rewards.shape
        if transitions.shape != (num_states, num_actions, num_states):
            raise ValidationError(
                "transitions must have shape (S, A, S)",
                {"expected": [num_states, num_actions, num_states], "got": list(transitions.shape)},
            )
        if initial_dist.shape != (num_states,):
            raise BadInitialDist(f"expected length {num_states}, got {initial_dist.shape}")
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "initial_dist", initial_dist)
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def from_arrays(
        cls,
        rewards: Any,
        transitions: Any,
        gamma: float,
        initial_dist: Any | None = None,
    ) -> "TabularMdp":
        """Build a validated MDP, renormalizing rows that are stochastic within tolerance."""
        rewards = np.asarray(rewards, dtype=float)
        num_states = rewards.shape[0] if rewards.ndim >= 1 else 0
        if initial_dist is None:
            initial_dist = np.full(num_states, 1.0 / max(num_states, 1))
        mdp = cls(
            rewards=rewards,
            transitions=renormalize_rows(np.asarray(transitions, dtype=float)),
            gamma=gamma,
            initial_dist=renormalize_rows(np.asarray(initial_dist, dtype=float)),
        )
        validate_mdp(mdp)
        return mdp

    @property
    def num_states(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def num_actions(self) -> int:
        return int(self.rewards.shape[1])

    @property
    def value_bound(self) -> float:
        """Upper end of the value range [0, 1/(1-gamma)]."""
        return 1.0 / (1.0 - self.gamma)

    def with_transitions(self, transitions: np.ndarray) -> "TabularMdp":
        """Return a copy with the kernel replaced (e.g. by an estimate)."""
        return TabularMdp.from_arrays(self.rewards, transitions, self.gamma, self.initial_dist)

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "gamma": self.gamma,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }


@dataclass(frozen=True)
class Policy:
    """Stationary policy stored as a (S, A) row-stochastic table."""

    probs: np.ndarray
    kind: PolicyKind = PolicyKind.STOCHASTIC

    def __post_init__(self) -> None:
        probs = _frozen(self.probs)
        if probs.ndim != 2:
            raise ValidationError("policy table must be two-dimensional")
        for s, row in enumerate(probs):
            if np.any(row < 0.0) or not np.isfinite(row).all():
                raise BadPolicy(s, "negative or non-finite entry")
            if abs(row.sum() - 1.0) > PROB_TOL:
                raise BadPolicy(s, f"row sums to {row.sum()!r}")
            if self.kind == PolicyKind.DETERMINISTIC and not (
                np.count_nonzero(row == 1.0) == 1 and np.count_nonzero(row) == 1
            ):
                raise BadPolicy(s, "deterministic row is not one-hot")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions: Any, num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        if np.any(actions < 0) or np.any(actions >= num_actions):
            raise ValidationError("action index out of range", {"num_actions": num_actions})
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs=probs, kind=PolicyKind.DETERMINISTIC)

    @classmethod
    def stochastic(cls, probs: Any) -> "Policy":
        return cls(probs=renormalize_rows(np.asarray(probs, dtype=float)))

    @classmethod
    def uniform(cls, num_states: int, num_actions: int) -> "Policy":
        return cls(probs=np.full((num_states, num_actions), 1.0 / num_actions))

    @property
    def num_states(self) -> int:
        return int(self.probs.shape[0])

    @property
    def num_actions(self) -> int:
        return int(self.probs.shape[1])

    @property
    def actions(self) -> np.ndarray:
        """Most likely action per state (the chosen action for deterministic policies)."""
        return np.argmax(self.probs, axis=1)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, "probs": self.probs.tolist()}
        if self.kind == PolicyKind.DETERMINISTIC:
            out["actions"] = self.actions.tolist()
        return out


@dataclass(frozen=True)
class ValueFunction:
    """State values V(s)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values))

    def at(self, mu: np.ndarray) -> float:
        """Value at an initial distribution, mu^T V."""
        return float(np.dot(mu, self.values))

    def to_list(self) -> list[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class QFunction:
    """State-action values Q(s, a)."""

    values: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values))

    def to_list(self) -> list[list[float]]:
        return self.values.tolist()


def validate_mdp(mdp: TabularMdp) -> None:
    """
    Check every TabularMdp invariant.

    Raises:
        RewardOutOfRange: a reward lies outside [0, 1]
        RowNotStochastic: a transition row is negative or does not sum to one
        BadGamma: gamma outside [0, 1)
        BadInitialDist: initial distribution is not a probability vector
    """
    bad = np.argwhere(~((mdp.rewards >= 0.0) & (mdp.rewards <= 1.0)))
    if bad.size:
        s, a = (int(i) for i in bad[0])
        raise RewardOutOfRange(s, a, float(mdp.rewards[s, a]))

    sums = mdp.transitions.sum(axis=2)
    negative = np.any(mdp.transitions < 0.0, axis=2) | ~np.isfinite(sums)
    off = negative | (np.abs(sums - 1.0) > PROB_TOL)
    bad = np.argwhere(off)
    if bad.size:
        s, a = (int(i) for i in bad[0])
        raise RowNotStochastic(s, a, float(sums[s, a]))

    if not (0.0 <= mdp.gamma < 1.0):
        raise BadGamma(mdp.gamma)

    if np.any(mdp.initial_dist < 0.0):
        raise BadInitialDist("negative entry", int(np.argmin(mdp.initial_dist)))
    if abs(mdp.initial_dist.sum() - 1.0) > PROB_TOL:
        raise BadInitialDist(f"sums to {mdp.initial_dist.sum()!r}")


# =============================================================================
# JSON document format
# =============================================================================


class MdpDocument(BaseModel):
    """On-disk MDP document."""

    num_states: int = Field(..., ge=1)
    num_actions: int = Field(..., ge=1)
    gamma: float
    rewards: list[list[float]]
    transitions: list[list[list[float]]]
    initial_dist: list[float] | None = Field(
        None, description="Defaults to the uniform distribution over states"
    )

    @model_validator(mode="after")
    def check_dimensions(self) -> "MdpDocument":
        """Ensure table sizes agree with the declared state/action counts."""
        s, a = self.num_states, self.num_actions
        if len(self.rewards) != s or any(len(row) != a for row in self.rewards):
            raise ValueError("rewards must be num_states x num_actions")
        if len(self.transitions) != s or any(
            len(cell) != a or any(len(row) != s for row in cell) for cell in self.transitions
        ):
            raise ValueError("transitions must be num_states x num_actions x num_states")
        if self.initial_dist is not None and len(self.initial_dist) != s:
            raise ValueError("initial_dist must have num_states entries")
        return self

    def to_mdp(self) -> TabularMdp:
        return TabularMdp.from_arrays(
            self.rewards, self.transitions, self.gamma, self.initial_dist
        )


def load_mdp(path: str | Path) -> TabularMdp:
    """Read and validate an MDP JSON document."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = MdpDocument.model_validate_json(raw)
    except PydanticValidationError as e:
        errors = e.errors(include_url=False, include_context=False)
        raise ValidationError(f"malformed MDP document {path}", {"errors": errors})
    return doc.to_mdp()


def dump_mdp(mdp: TabularMdp, path: str | Path) -> None:
    """Write an MDP as a JSON document."""
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=2), encoding="utf-8")
