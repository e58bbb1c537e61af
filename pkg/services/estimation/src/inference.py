"""
Plug-in asymptotic inference for robust values.

sqrt(n) (V_hat - V) is asymptotically normal with variance
mu^T M^-1 Lambda M^-T mu, where M is the derivative of (I - T_r^pi) at the
robust value and Lambda is the diagonal covariance of the empirical robust
Bellman noise. Every ingredient is computed from the estimated model, the
estimated value and the policy under evaluation.
"""

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.stats import norm

from services.planning.src.ambiguity import (
    AmbiguitySpec,
    Divergence,
    chi2_scale,
    s_support_inf,
    s_worst_case,
    sa_support_inf,
    sa_worst_case,
)
from services.planning.src.ambiguity.base import support
from services.planning.src.solvers import robust_solve
from services.shared.config import Settings, get_settings
from services.shared.exceptions import (
    BadLevel,
    DegenerateOrdering,
    SingularDerivative,
    UnsupportedCombination,
)
from services.shared.logging import get_logger
from services.shared.models.mdp import Policy, QFunction, TabularMdp, ValueFunction

logger = get_logger(__name__)


@dataclass(frozen=True)
class OrderedStateMap:
    """States sorted by ascending value, with the smallest adjacent gap."""

    permutation: np.ndarray
    min_gap: float


def order_states(v: ValueFunction | np.ndarray) -> OrderedStateMap:
    values = v.values if isinstance(v, ValueFunction) else np.asarray(v, dtype=float)
    perm = np.argsort(values, kind="stable")
    gaps = np.diff(values[perm])
    return OrderedStateMap(permutation=perm, min_gap=float(gaps.min()) if gaps.size else math.inf)


def _check_in_scope(spec: AmbiguitySpec, v: np.ndarray, gap_tol: float) -> OrderedStateMap:
    if spec.kind == Divergence.L1 and not spec.is_sa:
        raise UnsupportedCombination(spec.kind.value, spec.rectangularity.value)
    ordering = order_states(v)
    if spec.kind == Divergence.L1 and ordering.min_gap < gap_tol:
        raise DegenerateOrdering(ordering.min_gap)
    return ordering


def _values(v: ValueFunction | np.ndarray) -> np.ndarray:
    return v.values if isinstance(v, ValueFunction) else np.asarray(v, dtype=float)


def _variance(p: np.ndarray, b: np.ndarray) -> float:
    """b^T (diag(p) - p p^T) b."""
    mean = float(np.dot(p, b))
    return max(float(np.dot(p, b * b)) - mean * mean, 0.0)


# =============================================================================
# Noise directions: gradient of each dual objective in the center kernel
# =============================================================================


def _sa_direction(kind: Divergence, p: np.ndarray, v: np.ndarray, rho: float, gamma: float) -> np.ndarray:
    sol = sa_support_inf(kind, p, v, rho, gamma)
    if kind == Divergence.L1:
        assert sol.eta is not None
        return np.minimum(v, sol.eta[0])
    if kind == Divergence.CHI2:
        assert sol.eta is not None
        gap = np.maximum(sol.eta[0] - v, 0.0)
        scale = math.sqrt(float(np.dot(p, gap * gap)))
        if scale == 0.0:
            return np.zeros_like(v)
        return -chi2_scale(rho) * gap * gap / (2.0 * scale)
    if not sol.lam:
        return np.zeros_like(v)
    mask = support(p)
    x = np.where(mask, v - v[mask].min(), 0.0)
    weights = np.exp(-x / sol.lam)
    return -sol.lam * weights / float(np.dot(p, weights))


def _s_directions(
    kind: Divergence, p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float, gamma: float
) -> np.ndarray:
    sol = s_support_inf(kind, p_row, pi_s, v, rho, gamma)
    w = pi_s[:, None] * v[None, :]
    num_actions = p_row.shape[0]
    if kind == Divergence.CHI2:
        if sol.method == "corner":
            return np.zeros_like(w)
        assert sol.eta is not None
        gap = np.maximum(sol.eta[:, None] - w, 0.0)
        scale = math.sqrt(float(np.sum(p_row * gap * gap)))
        k = chi2_scale(rho) * math.sqrt(num_actions)
        return -k * gap * gap / (2.0 * scale)
    if not sol.lam:
        return np.zeros_like(w)
    out = np.empty_like(w)
    for a in range(num_actions):
        mask = support(p_row[a])
        x = np.where(mask, w[a] - w[a, mask].min(), 0.0)
        weights = np.exp(-x / sol.lam)
        out[a] = -sol.lam * weights / float(np.dot(p_row[a], weights))
    return out


def bellman_noise_variance(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    pi: Policy,
    v: ValueFunction | np.ndarray,
    gap_tol: float = 1e-9,
) -> np.ndarray:
    """
    Per-state asymptotic variance of sqrt(n) (T_hat_r^pi V - T_r^pi V)(s).

    (s,a)-rectangular: gamma^2 sum_a pi(a|s)^2 b_a^T Sigma_a b_a.
    s-rectangular: gamma^2 sum_a b_a^T Sigma_a b_a, with pi folded into b.
    Sigma_a is the multinomial covariance of the cell's kernel row.

    Raises:
        UnsupportedCombination: L1 with an s-rectangular set
        DegenerateOrdering: tied values under the (s,a)-rectangular L1 set
    """
    v = _values(v)
    _check_in_scope(spec, v, gap_tol)
    g2 = mdp.gamma**2
    out = np.zeros(mdp.num_states)
    for s in range(mdp.num_states):
        pi_s = pi.probs[s]
        if spec.is_sa:
            for a in np.flatnonzero(pi_s > 0.0):
                p = mdp.transitions[s, a]
                b = _sa_direction(spec.kind, p, v, spec.rho, mdp.gamma)
                out[s] += g2 * pi_s[a] ** 2 * _variance(p, b)
        else:
            b = _s_directions(spec.kind, mdp.transitions[s], pi_s, v, spec.rho, mdp.gamma)
            out[s] = g2 * sum(
                _variance(mdp.transitions[s, a], b[a]) for a in range(mdp.num_actions)
            )
    return out


def derivative_matrix(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    pi: Policy,
    v: ValueFunction | np.ndarray,
    gap_tol: float = 1e-9,
) -> np.ndarray:
    """
    M^pi = I - gamma * sum_a pi(a|s) q*_{s,a}, the derivative of (I - T_r^pi) at v.

    Row s uses the worst-case distributions of its inner problems: the
    threshold structure for L1, q proportional to p (eta - v)_+ for
    chi-square, the exponential tilt for KL.

    Raises:
        UnsupportedCombination: L1 with an s-rectangular set
        DegenerateOrdering: tied values under the (s,a)-rectangular L1 set
    """
    v = _values(v)
    _check_in_scope(spec, v, gap_tol)
    jac = np.zeros((mdp.num_states, mdp.num_states))
    for s in range(mdp.num_states):
        pi_s = pi.probs[s]
        if spec.is_sa:
            for a in np.flatnonzero(pi_s > 0.0):
                worst = sa_worst_case(spec.kind, mdp.transitions[s, a], v, spec.rho, mdp.gamma)
                jac[s] += pi_s[a] * worst.q
        else:
            worst = s_worst_case(spec.kind, mdp.transitions[s], pi_s, v, spec.rho, mdp.gamma)
            jac[s] = pi_s @ worst.q
    return np.eye(mdp.num_states) - mdp.gamma * jac


def asymptotic_variance(
    mu: np.ndarray,
    m: np.ndarray,
    lambda_diag: np.ndarray,
    singular_condition: float = 1e12,
) -> float:
    """
    sigma^2 = mu^T M^-1 diag(lambda) M^-T mu.

    Raises:
        SingularDerivative: the 1-norm condition number of M exceeds the limit
    """
    condition = float(np.linalg.cond(m, 1))
    if not math.isfinite(condition) or condition > singular_condition:
        raise SingularDerivative(condition)
    x = lu_solve(lu_factor(m), np.asarray(mu, dtype=float), trans=1)
    return float(np.dot(lambda_diag, x * x))


def confidence_interval(point: float, sigma2: float, n: int, level: float) -> tuple[float, float]:
    """
    Symmetric interval point -/+ z_level sqrt(sigma2 / n).

    The two-sided nominal coverage is 1 - 2 (1 - level).

    Raises:
        BadLevel: level outside (0.5, 1)
    """
    if not 0.5 < level < 1.0:
        raise BadLevel(level)
    half = float(norm.ppf(level)) * math.sqrt(max(sigma2, 0.0) / n)
    return point - half, point + half


def optimal_gap_diagnostics(q: QFunction | np.ndarray) -> float:
    """Smallest gap between two actions' Q values at any state (inf with one action)."""
    values = q.values if isinstance(q, QFunction) else np.asarray(q, dtype=float)
    if values.shape[1] < 2:
        return math.inf
    ordered = np.sort(values, axis=1)
    return float(np.diff(ordered, axis=1).min())


# =============================================================================
# End-to-end plug-in recipes
# =============================================================================


@dataclass(frozen=True)
class InferenceReport:
    """Plug-in asymptotic statistics of a robust value at mu."""

    lambda_diag: np.ndarray
    m_matrix: np.ndarray
    sigma2: float
    point: float
    ci_low: float
    ci_high: float
    n: int
    nominal_level: float
    diagnostics: dict[str, float | None] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def ci_length(self) -> float:
        return self.ci_high - self.ci_low

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda_diag": self.lambda_diag.tolist(),
            "m_matrix": self.m_matrix.tolist(),
            "sigma2": self.sigma2,
            "point": self.point,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n": self.n,
            "nominal_level": self.nominal_level,
            "diagnostics": dict(self.diagnostics),
            "warnings": list(self.warnings),
        }


def infer_policy_value(
    mdp_hat: TabularMdp,
    spec: AmbiguitySpec,
    pi: Policy,
    v_hat: ValueFunction,
    n: int,
    level: float | None = None,
    settings: Settings | None = None,
    extra_diagnostics: dict[str, float | None] | None = None,
) -> InferenceReport:
    """
    Confidence interval for V_r^pi(mu) from the estimated model and value.

    Args:
        mdp_hat: MDP carrying the estimated kernel and the evaluation mu
        spec: Ambiguity set
        pi: Policy under evaluation
        v_hat: Robust value of pi under the estimated kernel
        n: Samples per cell
        level: One-sided quantile level (defaults to settings.confidence_level)
        settings: Tolerances; defaults to the process settings
    """
    settings = settings or get_settings()
    level = settings.confidence_level if level is None else level
    v = v_hat.values
    ordering = _check_in_scope(spec, v, settings.ordering_gap_tol)

    lam = bellman_noise_variance(mdp_hat, spec, pi, v, settings.ordering_gap_tol)
    m = derivative_matrix(mdp_hat, spec, pi, v, settings.ordering_gap_tol)
    sigma2 = asymptotic_variance(mdp_hat.initial_dist, m, lam, settings.singular_condition)
    point = v_hat.at(mdp_hat.initial_dist)
    low, high = confidence_interval(point, sigma2, n, level)

    diagnostics: dict[str, float | None] = {
        "min_value_gap": ordering.min_gap,
        "min_action_gap": None,
        "condition_estimate": float(np.linalg.cond(m, 1)),
    }
    diagnostics.update(extra_diagnostics or {})
    warnings: list[str] = []
    action_gap = diagnostics.get("min_action_gap")
    if action_gap is not None and action_gap < settings.action_gap_warn:
        warnings.append(f"min action gap {action_gap:.3e} is below {settings.action_gap_warn:g}")
        logger.warning("small_action_gap", min_action_gap=action_gap)

    return InferenceReport(
        lambda_diag=lam,
        m_matrix=m,
        sigma2=sigma2,
        point=point,
        ci_low=low,
        ci_high=high,
        n=n,
        nominal_level=level,
        diagnostics=diagnostics,
        warnings=tuple(warnings),
    )


def infer_optimal_value(
    mdp_hat: TabularMdp,
    spec: AmbiguitySpec,
    n: int,
    level: float | None = None,
    tol: float | None = None,
    T: int | None = None,
    settings: Settings | None = None,
) -> InferenceReport:
    """
    Confidence interval for the optimal robust value V_r*(mu).

    Solves the estimated problem, then evaluates the plug-in recipe at the
    extracted policy. Under (s,a)-rectangular sets the smallest robust-Q
    action gap is reported and flagged when it is tiny.
    """
    settings = settings or get_settings()
    report = robust_solve(
        mdp_hat,
        spec,
        T=settings.solver_max_iters if T is None else T,
        tol=settings.solver_tol if tol is None else tol,
    )
    assert report.policy is not None
    extra = {"min_action_gap": optimal_gap_diagnostics(report.q)} if report.q is not None else {}
    return infer_policy_value(
        mdp_hat,
        spec,
        report.policy,
        report.value,
        n,
        level=level,
        settings=settings,
        extra_diagnostics=extra,
    )
