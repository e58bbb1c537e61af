"""
Ambiguity-set definitions and inner-problem result types.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from scipy.special import rel_entr

from services.shared.exceptions import InvalidAmbiguitySpec

# Inner-solver constants
GOLDEN_TOL = 1e-10
LAMBDA_FLOOR = 1e-12
Q_INVERSE_ITERS = 60
SUPPORT_ATOL = 0.0


class Divergence(str, Enum):
    """f-divergence generating the ambiguity ball."""

    L1 = "l1"
    CHI2 = "chi2"
    KL = "kl"


class Rectangularity(str, Enum):
    """How the ambiguity set factorizes."""

    SA = "sa"
    S = "s"


@dataclass(frozen=True)
class AmbiguitySpec:
    """Divergence kind, radius and rectangularity of an ambiguity set."""

    kind: Divergence
    rho: float
    rectangularity: Rectangularity = Rectangularity.SA

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", Divergence(self.kind))
            object.__setattr__(self, "rectangularity", Rectangularity(self.rectangularity))
        except ValueError as e:
            raise InvalidAmbiguitySpec(str(e))
        rho = float(self.rho)
        if not math.isfinite(rho) or rho <= 0.0:
            raise InvalidAmbiguitySpec(f"rho={rho!r} must be positive", {"rho": rho})
        if self.kind == Divergence.L1 and rho >= 2.0:
            raise InvalidAmbiguitySpec(f"L1 radius rho={rho!r} must be below 2", {"rho": rho})
        object.__setattr__(self, "rho", rho)

    @property
    def is_sa(self) -> bool:
        return self.rectangularity == Rectangularity.SA

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "rho": self.rho, "rect": self.rectangularity.value}


@dataclass(frozen=True)
class DualSolution:
    """Value of an inner worst-case problem with its maximizing dual variable."""

    value: float
    eta: np.ndarray | None = None
    lam: float | None = None
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    method: str = ""
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "eta": None if self.eta is None else np.asarray(self.eta).tolist(),
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "method": self.method,
        }


@dataclass(frozen=True)
class WorstCaseDistribution:
    """Minimizing distribution(s): shape (S,) for SA, (A, S) for s-rectangular sets."""

    q: np.ndarray
    divergence: float


def chi2_scale(rho: float) -> float:
    """C(rho) = sqrt(1 + rho)."""
    return math.sqrt(1.0 + rho)


def support(p: np.ndarray) -> np.ndarray:
    """Boolean mask of the states carrying positive center mass."""
    return p > SUPPORT_ATOL


def divergence(kind: Divergence | str, q: np.ndarray, p: np.ndarray) -> float:
    """
    D_f(q || p) for the three supported divergences.

    Returns +inf when q puts mass outside the support of p.
    """
    kind = Divergence(kind)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    outside = ~support(p)
    if np.any(q[outside] > 0.0):
        return math.inf
    if kind == Divergence.L1:
        return float(np.abs(q - p).sum())
    mask = ~outside
    if kind == Divergence.CHI2:
        return float(np.sum((q[mask] - p[mask]) ** 2 / p[mask]))
    return float(rel_entr(q[mask], p[mask]).sum())


def kl_tilt(p: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    """Exponential tilt q proportional to p * exp(-x / lam), x shifted to min 0."""
    logits = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)) - x / lam, -np.inf)
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def argmin_mass(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Center mass restricted to the v-minimizing support states, renormalized."""
    mask = support(p)
    vmin = v[mask].min()
    at_min = mask & (v <= vmin)
    q = np.where(at_min, p, 0.0)
    return q / q.sum()
