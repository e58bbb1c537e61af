"""
Closed-form theoretical quantities.

Finite-sample upper bounds on the robust optimality gap (generative and
offline data), order-only sample-complexity lower bounds, the
robust/non-robust gap bound and the hard-instance MDPs behind the lower
bounds.
"""

import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy.optimize import brentq

from services.planning.src.ambiguity.base import Divergence, Rectangularity, chi2_scale
from services.shared.exceptions import MissingParameter, UnsupportedKind, ValidationError
from services.shared.models.mdp import TabularMdp


class DataMode(str, Enum):
    """How the samples behind an estimate were collected."""

    GENERATIVE = "generative"
    OFFLINE = "offline"


@dataclass(frozen=True)
class BoundQuery:
    """Inputs of a finite-sample upper bound."""

    kind: Divergence
    rectangularity: Rectangularity
    data_mode: DataMode
    num_states: int
    num_actions: int
    gamma: float
    rho: float
    n: int
    delta: float
    p_underbar: float | None = None
    nu_min: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Divergence(self.kind))
        object.__setattr__(self, "rectangularity", Rectangularity(self.rectangularity))
        object.__setattr__(self, "data_mode", DataMode(self.data_mode))
        if self.num_states < 1 or self.num_actions < 1 or self.n < 1:
            raise ValidationError(
                "num_states, num_actions and n must be positive",
                {"num_states": self.num_states, "num_actions": self.num_actions, "n": self.n},
            )
        if not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"gamma={self.gamma!r} must lie in (0, 1)", {"gamma": self.gamma})
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta={self.delta!r} must lie in (0, 1)", {"delta": self.delta})
        if self.rho <= 0.0:
            raise ValidationError(f"rho={self.rho!r} must be positive", {"rho": self.rho})
        for name in ("p_underbar", "nu_min"):
            value = getattr(self, name)
            if value is not None and not 0.0 < value <= 1.0:
                raise ValidationError(f"{name}={value!r} must lie in (0, 1]", {name: value})

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data.update(
            kind=self.kind.value,
            rectangularity=self.rectangularity.value,
            data_mode=self.data_mode.value,
        )
        return data


# =============================================================================
# Upper bounds
# =============================================================================


def _require(value: float | None, name: str) -> float:
    if value is None:
        raise MissingParameter(name)
    return value


def _sa_bound(q: BoundQuery, sample_root: float) -> float:
    S, A, g, rho, n, d = q.num_states, q.num_actions, q.gamma, q.rho, q.n, q.delta
    offline = q.data_mode == DataMode.OFFLINE
    horizon = (1.0 - g) ** 2

    if q.kind == Divergence.L1:
        lead = 2.0 * (2.0 + rho) * g * math.sqrt(S) / (rho * horizon * sample_root)
        arg = (8.0 if offline else 4.0) * S * A**2 * (1.0 + 2.0 * (2.0 + rho) * math.sqrt(2.0 * n)) ** 2
        return lead * (2.0 + math.sqrt(math.log(arg / (d * (2.0 + rho)))))

    if q.kind == Divergence.CHI2:
        c = chi2_scale(rho)
        lead = 2.0 * c**2 * g * math.sqrt(S) / ((c - 1.0) * horizon * sample_root)
        arg = (4.0 if offline else 2.0) * S * A**2 * (1.0 + (c + 3.0) * math.sqrt(n)) ** 2
        return lead * (4.0 + math.sqrt(2.0 * math.log(arg / (d * c**2))))

    pu = _require(q.p_underbar, "p_underbar")
    lead = 4.0 * g * math.sqrt(S) / (rho * horizon * pu * sample_root)
    log_term = math.log(2.0 * S**2 * A**2 * (1.0 + rho * pu * math.sqrt(n)) / d)
    return lead * (1.0 + math.sqrt((2.0 if offline else 1.0) * log_term))


def _s_bound(q: BoundQuery, sample_root: float) -> float:
    S, A, g, rho, n, d = q.num_states, q.num_actions, q.gamma, q.rho, q.n, q.delta
    horizon = (1.0 - g) ** 2

    if q.kind == Divergence.L1:
        lead = 2.0 * g * (2.0 + rho) * math.sqrt(S * A) / (rho * horizon * sample_root)
        arg = 2.0 * S * (1.0 + 2.0 * math.sqrt(2.0 * n) * (rho + 4.0)) ** 3 / d
        return lead * (4.0 + math.sqrt(math.log(arg)))

    if q.kind == Divergence.CHI2:
        c = chi2_scale(rho)
        lead = 2.0 * g * c**2 * math.sqrt(S * A**2) / ((c - 1.0) * horizon * sample_root)
        arg = 2.0 * S * (1.0 + 8.0 * math.sqrt(n) * c) ** 3 / d
        return lead * (6.0 + math.sqrt(2.0 * math.log(arg)))

    pu = _require(q.p_underbar, "p_underbar")
    lead = 4.0 * g * math.sqrt(S * A) / (rho * pu * horizon * sample_root)
    arg = 2.0 * S**2 * A * (1.0 + 4.0 * rho * pu * math.sqrt(n)) / d
    return lead * (2.0 + math.sqrt(2.0 * math.log(arg)))


def upper_bound_eps(q: BoundQuery) -> float:
    """
    High-probability bound on max_pi V_r^pi(mu) - V_r^{pi_hat}(mu).

    Evaluates the finite-sample bound for the query's divergence,
    rectangularity and data mode with every constant and log factor as
    stated. Offline bounds replace sqrt(n) in the leading factor by
    sqrt(n nu_min).

    Raises:
        MissingParameter: p_underbar for KL, nu_min for offline data
    """
    if q.data_mode == DataMode.OFFLINE:
        # no factor 2 under the root for offline L1
        sample_root = math.sqrt(q.n * _require(q.nu_min, "nu_min"))
    else:
        sample_root = math.sqrt((2.0 if q.kind == Divergence.L1 else 1.0) * q.n)
    if q.rectangularity == Rectangularity.SA:
        return _sa_bound(q, sample_root)
    return _s_bound(q, sample_root)


def min_offline_samples(num_states: int, num_actions: int, nu_min: float, delta: float) -> float:
    """Dataset size above which the offline bounds apply: (8 / nu_min) log(2 S A / delta)."""
    return 8.0 / nu_min * math.log(2.0 * num_states * num_actions / delta)


# =============================================================================
# Lower bounds and the gap bound
# =============================================================================


def lower_bound_samples(
    kind: Divergence | str,
    num_states: int,
    num_actions: int,
    gamma: float,
    rho: float,
    eps: float,
) -> float:
    """
    Order-only sample-complexity lower bound (constant 1, log factors dropped).

    Raises:
        UnsupportedKind: KL has no explicit lower bound
    """
    kind = Divergence(kind)
    size = num_states * num_actions
    if kind == Divergence.L1:
        return size * (1.0 - gamma) / eps**2 * min((1.0 - gamma) ** -4, rho**-4)
    if kind == Divergence.CHI2:
        return size / (eps**2 * (1.0 - gamma) ** 2) * min(1.0 / (1.0 - gamma), 1.0 / rho)
    raise UnsupportedKind(kind.value, "lower_bound_samples")


def _h(kind: Divergence, t: float) -> float:
    if kind == Divergence.L1:
        return t
    if kind == Divergence.CHI2:
        return math.sqrt(t)
    return math.sqrt(2.0 * t)


def gap_bound(
    kind: Divergence | str,
    rectangularity: Rectangularity | str,
    rho: float,
    gamma: float,
    num_actions: int = 1,
) -> float:
    """Bound on ||V_r^pi - V^pi|| : gamma h(rho) / (1-gamma)^2, times |A| for s-rectangular sets."""
    kind = Divergence(kind)
    scale = num_actions if Rectangularity(rectangularity) == Rectangularity.S else 1
    return gamma * scale * _h(kind, rho) / (1.0 - gamma) ** 2


# =============================================================================
# Hard instances
# =============================================================================


def _binary_kl(q: float, p: float) -> float:
    out = 0.0
    if q > 0.0:
        out += q * math.log(q / p)
    if q < 1.0:
        out += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return out


def loop_probability(kind: Divergence | str, p: float, rho: float) -> float:
    """
    Smallest self-loop probability an adversary can reach from p.

    g(p) = inf { q : D_f((q, 1-q) || (p, 1-p)) <= rho }, clamped at 0.
    """
    kind = Divergence(kind)
    if kind == Divergence.L1:
        return max(p - rho / 2.0, 0.0)
    if kind == Divergence.CHI2:
        return max(p - math.sqrt(rho * p * (1.0 - p)), 0.0)
    if _binary_kl(0.0, p) <= rho:
        return 0.0
    return float(brentq(lambda q: _binary_kl(q, p) - rho, 0.0, p, xtol=1e-15))


def _loop_probability_slope(kind: Divergence, p: float, rho: float) -> float:
    g = loop_probability(kind, p, rho)
    if g == 0.0:
        return 0.0
    if kind == Divergence.L1:
        return 1.0
    if kind == Divergence.CHI2:
        return 1.0 - math.sqrt(rho) * (1.0 - 2.0 * p) / (2.0 * math.sqrt(p * (1.0 - p)))
    # implicit differentiation of KL(g || p) = rho
    d_q = math.log(g / p) - math.log((1.0 - g) / (1.0 - p))
    d_p = -g / p + (1.0 - g) / (1.0 - p)
    return -d_p / d_q


def hard_instance_value(kind: Divergence | str, p: float, rho: float, gamma: float) -> float:
    """Robust value of the looping state: 1 / (1 - gamma g(p))."""
    return 1.0 / (1.0 - gamma * loop_probability(kind, p, rho))


def instance_lower_bound(
    kind: Divergence | str,
    num_states: int,
    num_actions: int,
    gamma: float,
    rho: float,
    eps: float,
    p: float,
) -> float:
    """S A g'(p)^2 p (1-p) / (eps^2 (1 - gamma g(p))^4), order only."""
    kind = Divergence(kind)
    g = loop_probability(kind, p, rho)
    slope = _loop_probability_slope(kind, p, rho)
    return (
        num_states * num_actions * slope**2 * p * (1.0 - p)
        / (eps**2 * (1.0 - gamma * g) ** 4)
    )


def hard_instance(
    p: float,
    gamma: float,
    num_state_blocks: int = 1,
    num_actions: int = 1,
) -> TabularMdp:
    """
    MDP family behind the lower bounds.

    With one block and one action this is the 2-state chain: z0 loops on
    itself with probability p and otherwise falls into the absorbing z1;
    r(z0) = 1, r(z1) = 0. Otherwise each block i has a root state whose
    action j leads deterministically (reward 0) to its own looping state
    z0(i, j), which pays 1 and leaks into an absorbing z1(i, j). Every
    action behaves identically at the looping and absorbing states.
    """
    if not 0.0 < p < 1.0:
        raise ValidationError(f"p={p!r} must lie in (0, 1)", {"p": p})
    if num_state_blocks < 1 or num_actions < 1:
        raise ValidationError(
            "num_state_blocks and num_actions must be positive",
            {"num_state_blocks": num_state_blocks, "num_actions": num_actions},
        )

    if num_state_blocks == 1 and num_actions == 1:
        transitions = np.array([[[p, 1.0 - p]], [[0.0, 1.0]]])
        rewards = np.array([[1.0], [0.0]])
        return TabularMdp.from_arrays(rewards, transitions, gamma)

    block = 1 + 2 * num_actions
    num_states = num_state_blocks * block
    rewards = np.zeros((num_states, num_actions))
    transitions = np.zeros((num_states, num_actions, num_states))
    for i in range(num_state_blocks):
        root = i * block
        for j in range(num_actions):
            loop, sink = root + 1 + 2 * j, root + 2 + 2 * j
            transitions[root, j, loop] = 1.0
            rewards[loop, :] = 1.0
            transitions[loop, :, loop] = p
            transitions[loop, :, sink] = 1.0 - p
            transitions[sink, :, sink] = 1.0
    return TabularMdp.from_arrays(rewards, transitions, gamma)


def min_positive_probability(mdp: TabularMdp) -> float:
    """Smallest positive transition probability of the kernel."""
    positive = mdp.transitions[mdp.transitions > 0.0]
    return float(positive.min())
