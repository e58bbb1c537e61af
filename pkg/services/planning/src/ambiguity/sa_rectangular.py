"""
Worst-case expectations over (s,a)-rectangular f-divergence balls.

Each function solves inf { q^T v : q << p, D_f(q || p) <= rho } for a single
center distribution p. L1 is solved exactly by sorting; chi-square and KL
maximize a concave one-dimensional dual by golden-section search.
"""

import math
from collections.abc import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, rel_entr

from services.planning.src.ambiguity.base import (
    GOLDEN_TOL,
    LAMBDA_FLOOR,
    Divergence,
    DualSolution,
    WorstCaseDistribution,
    argmin_mass,
    chi2_scale,
    divergence,
    kl_tilt,
    support,
)
from services.planning.src.ambiguity.search import golden_section_max
from services.shared.exceptions import NumericalFailure

DIVERGENCE_SLACK = 1e-9


def dual_range_bound(kind: Divergence, rho: float, gamma: float, budget_scale: int = 1) -> float:
    """Upper end of the interval known to contain the optimal dual variable for v in [0, 1/(1-gamma)]."""
    if kind == Divergence.L1:
        return (2.0 + rho) / (rho * (1.0 - gamma))
    if kind == Divergence.CHI2:
        c = chi2_scale(rho)
        return c / ((c - 1.0) * (1.0 - gamma))
    return 1.0 / (budget_scale * rho * (1.0 - gamma))


def shifted_log_mgf(p: np.ndarray, x: np.ndarray, lam: float) -> float:
    """
    log sum_i p_i exp(-x_i / lam) for x >= 0.

    Uses log1p/expm1 while the exponents are small, where plain log-sum-exp
    loses the relative precision of the result.
    """
    y = x / lam
    if y.max() <= 1.0:
        return float(np.log1p(np.dot(p, np.expm1(-y))))
    return float(logsumexp(-y, b=p))


def l1_sorted_threshold(p: np.ndarray, v: np.ndarray, rho: float) -> tuple[float, float, int]:
    """
    Exact L1 worst case by sorting.

    Args:
        p: Center distribution
        v: Value vector
        rho: L1 radius, 0 < rho < 2

    Returns:
        (value, eta_star, k_index) with k_index the 1-based rank, in ascending
        value order over the support, of the first state whose cumulative
        center mass exceeds 1 - rho/2.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    idx = np.flatnonzero(support(p))
    order = idx[np.argsort(v[idx], kind="stable")]
    ps, vs = p[order], v[order]

    cum = np.cumsum(ps)
    above = np.flatnonzero(cum > 1.0 - rho / 2.0)
    k = int(above[0]) if above.size else len(ps) - 1

    head = float(np.dot(ps[:k], vs[:k]))
    head_mass = float(cum[k - 1]) if k > 0 else 0.0
    value = head + (1.0 - rho / 2.0 - head_mass) * vs[k] + (rho / 2.0) * vs[0]
    return float(value), float(vs[k]), k + 1


def _l1_worst_case(p: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
    idx = np.flatnonzero(support(p))
    order = idx[np.argsort(v[idx], kind="stable")]
    _, _, k_rank = l1_sorted_threshold(p, v, rho)
    k = k_rank - 1

    q = np.zeros_like(p)
    head = order[:k]
    q[head] = p[head]
    q[order[k]] = 1.0 - rho / 2.0 - p[head].sum()
    q[order[0]] += rho / 2.0
    return q


def _chi2_dual(p: np.ndarray, v: np.ndarray, rho: float) -> DualSolution:
    c = chi2_scale(rho)
    vmin, vmax = float(v.min()), float(v.max())
    mean = float(np.dot(p, v))
    std = math.sqrt(max(float(np.dot(p, (v - mean) ** 2)), 0.0))
    # Beyond max(v) the objective is smooth with maximizer mean + std / sqrt(rho).
    hi = max(vmax, mean + std / math.sqrt(rho))

    def objective(eta: float) -> float:
        gap = np.maximum(eta - v, 0.0)
        return eta - c * math.sqrt(float(np.dot(p, gap * gap)))

    res = golden_section_max(objective, vmin, hi, tol=GOLDEN_TOL)
    if not math.isfinite(res.fx):
        raise NumericalFailure("chi-square dual search produced a non-finite value", res.width)
    if res.fx >= vmin:
        return DualSolution(
            value=res.fx,
            eta=np.array([res.x]),
            iterations=res.iterations,
            residual=res.width,
            method="golden_section",
        )
    return DualSolution(
        value=vmin,
        eta=np.array([vmin]),
        iterations=res.iterations,
        residual=res.width,
        method="golden_section",
    )


def _kl_dual(p: np.ndarray, v: np.ndarray, rho: float) -> DualSolution:
    vmin = float(v.min())
    x = v - vmin
    hi = max(float(np.dot(p, x)) / rho, 2.0 * LAMBDA_FLOOR)

    def objective(lam: float) -> float:
        return vmin - lam * rho - lam * shifted_log_mgf(p, x, lam)

    res = golden_section_max(objective, LAMBDA_FLOOR, hi, tol=GOLDEN_TOL)
    if not math.isfinite(res.fx):
        raise NumericalFailure("KL dual search produced a non-finite value", res.width)
    if res.fx > vmin:
        return DualSolution(
            value=res.fx, lam=res.x, iterations=res.iterations, residual=res.width,
            method="golden_section",
        )
    # lambda -> 0 limit: the essential infimum of v under p
    return DualSolution(
        value=vmin, lam=0.0, iterations=res.iterations, residual=res.width, method="limit",
    )


def sa_support_inf(
    kind: Divergence | str,
    p: np.ndarray,
    v: np.ndarray,
    rho: float,
    gamma: float,
) -> DualSolution:
    """
    Worst-case expectation of v over the divergence ball of radius rho around p.

    Args:
        kind: Divergence kind
        p: Center distribution
        v: Value vector
        rho: Radius
        gamma: Discount factor (sets the published dual range)

    Returns:
        DualSolution with eta (L1, chi-square) or lam (KL)

    Raises:
        NumericalFailure: the dual search produced a non-finite value
    """
    kind = Divergence(kind)
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    mask = support(p)
    ps, vs = p[mask], v[mask]
    extra = {"range_bound": dual_range_bound(kind, rho, gamma)}

    if ps.size == 1 or float(vs.max() - vs.min()) == 0.0:
        c = float(vs[0])
        return DualSolution(
            value=c,
            eta=None if kind == Divergence.KL else np.array([c]),
            lam=0.0 if kind == Divergence.KL else None,
            method="single_atom" if ps.size == 1 else "constant",
            extra=extra,
        )

    if kind == Divergence.L1:
        value, eta, k_rank = l1_sorted_threshold(p, v, rho)
        return DualSolution(
            value=value, eta=np.array([eta]), method="sorted_threshold",
            extra={**extra, "k_index": k_rank},
        )
    sol = _chi2_dual(ps, vs, rho) if kind == Divergence.CHI2 else _kl_dual(ps, vs, rho)
    sol.extra.update(extra)
    return sol


def refine_kl_temperature(
    div_at: Callable[[float], float],
    lam: float,
    budget: float,
) -> float:
    """
    Smallest temperature >= lam whose tilted distribution meets the budget.

    ``div_at`` maps a temperature to the divergence of its tilted distribution
    and is non-increasing.
    """
    if div_at(lam) <= budget + DIVERGENCE_SLACK:
        return lam
    hi = max(2.0 * lam, 1e-8)
    for _ in range(200):
        if div_at(hi) <= budget:
            break
        hi *= 2.0
    return float(brentq(lambda t: div_at(t) - budget, lam, hi, xtol=1e-14, rtol=1e-14))


def sa_worst_case(
    kind: Divergence | str,
    p: np.ndarray,
    v: np.ndarray,
    rho: float,
    gamma: float,
) -> WorstCaseDistribution:
    """
    Recover a minimizing distribution from the dual solution.

    L1 uses the threshold structure; chi-square uses q proportional to
    p (eta* - v)_+; KL uses the exponential tilt at lam*. Solutions sitting on
    the lower end of the dual range put all mass on the v-minimizing states.
    """
    kind = Divergence(kind)
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    sol = sa_support_inf(kind, p, v, rho, gamma)

    if sol.method in ("single_atom", "constant"):
        q = p.copy()
    elif kind == Divergence.L1:
        q = _l1_worst_case(p, v, rho)
    elif kind == Divergence.CHI2:
        assert sol.eta is not None
        w = np.where(support(p), p * np.maximum(sol.eta[0] - v, 0.0), 0.0)
        q = w / w.sum() if w.sum() > 0.0 else argmin_mass(p, v)
    elif sol.lam == 0.0:
        q = argmin_mass(p, v)
    else:
        assert sol.lam is not None
        mask = support(p)
        x = np.where(mask, v - v[mask].min(), 0.0)
        lam = refine_kl_temperature(
            lambda t: float(rel_entr(kl_tilt(p, x, t)[mask], p[mask]).sum()), sol.lam, rho
        )
        q = kl_tilt(p, x, lam)

    return WorstCaseDistribution(q=q, divergence=divergence(kind, q, p))
