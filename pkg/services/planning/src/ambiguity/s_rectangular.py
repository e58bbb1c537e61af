"""
Worst-case expectations over s-rectangular f-divergence sets.

For one state, the set couples the per-action next-state distributions
through a shared budget: sum_a D_f(P_a || p_a) <= |A| rho. The objective is
sum_a pi(a) P_a^T v.
"""

import math
import warnings

import numpy as np
from scipy.special import rel_entr

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
from services.planning.src.ambiguity.sa_rectangular import (
    dual_range_bound,
    refine_kl_temperature,
    shifted_log_mgf,
)
from services.planning.src.ambiguity.search import bisect_decreasing, golden_section_max
from services.shared.exceptions import ConvergenceWarning, NumericalFailure
from services.shared.logging import get_logger

logger = get_logger(__name__)

CHI2_STATIONARITY_TOL = 1e-9
CHI2_BISECT_ITERS = 200


# =============================================================================
# L1: greedy mass transfer in the primal
# =============================================================================


def _l1_transfers(
    p_row: np.ndarray, w: np.ndarray, budget: float
) -> tuple[list[tuple[int, int, float]], np.ndarray, float]:
    """
    Plan the greedy transfers for the s-rectangular L1 set.

    Returns the executed (action, donor, mass) moves, the per-action receiving
    state and the marginal gain of the last move (0 when donors run out).
    """
    num_actions = p_row.shape[0]
    receivers = np.zeros(num_actions, dtype=int)
    items: list[tuple[float, int, int]] = []
    for a in range(num_actions):
        idx = np.flatnonzero(support(p_row[a]))
        wa = w[a, idx]
        receivers[a] = idx[int(np.argmin(wa))]
        wmin = float(wa.min())
        for s, ws in zip(idx, wa, strict=True):
            if ws > wmin:
                items.append((float(ws - wmin), a, int(s)))

    # decreasing gain, then action, then state index
    items.sort(key=lambda it: (-it[0], it[1], it[2]))

    remaining = budget / 2.0
    moves: list[tuple[int, int, float]] = []
    tau = 0.0
    for gain, a, s in items:
        if remaining <= 0.0:
            break
        mass = min(float(p_row[a, s]), remaining)
        moves.append((a, s, mass))
        remaining -= mass
        tau = gain
    if remaining > 0.0:
        tau = 0.0
    return moves, receivers, tau


def s_l1_dual_objective(
    p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float, eta: np.ndarray
) -> float:
    """Coupled vector-dual objective of the s-rectangular L1 problem at eta."""
    budget = p_row.shape[0] * rho
    total = float(np.sum(eta))
    worst = -math.inf
    for a in range(p_row.shape[0]):
        mask = support(p_row[a])
        gap = eta[a] - pi_s[a] * v[mask]
        total -= float(np.dot(p_row[a, mask], np.maximum(gap, 0.0)))
        worst = max(worst, float(gap.max()))
    return total - budget * max(worst / 2.0, 0.0)


def _l1_support(p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float) -> DualSolution:
    w = pi_s[:, None] * v[None, :]
    budget = p_row.shape[0] * rho
    moves, _, tau = _l1_transfers(p_row, w, budget)

    value = float(np.sum(p_row * w))
    for a, s, mass in moves:
        wmin = float(w[a, support(p_row[a])].min())
        value -= mass * (w[a, s] - wmin)

    eta = np.array(
        [float(w[a, support(p_row[a])].min()) + tau for a in range(p_row.shape[0])]
    )
    dual = s_l1_dual_objective(p_row, pi_s, v, rho, eta)
    return DualSolution(
        value=value,
        eta=eta,
        iterations=len(moves),
        residual=abs(dual - value),
        method="greedy_transfer",
    )


def _l1_worst_case(p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
    w = pi_s[:, None] * v[None, :]
    moves, receivers, _ = _l1_transfers(p_row, w, p_row.shape[0] * rho)
    q = p_row.copy()
    for a, s, mass in moves:
        q[a, s] -= mass
        q[a, receivers[a]] += mass
    return q


# =============================================================================
# Chi-square: scalar reduction of the vector dual
# =============================================================================


def _shift_for_level(p: np.ndarray, w: np.ndarray, t: float) -> float:
    """Solve sum_s p(s) (eta - w(s))_+ = t for eta (exact, piecewise linear)."""
    idx = np.flatnonzero(support(p))
    order = idx[np.argsort(w[idx], kind="stable")]
    ps, ws = p[order], w[order]
    cum_p = np.cumsum(ps)
    cum_w = np.cumsum(ps * ws)
    # level reached at each breakpoint ws[j], using the states below it
    levels = np.concatenate(([0.0], cum_p[:-1] * ws[1:] - cum_w[:-1]))
    k = int(np.searchsorted(levels, t, side="right")) - 1
    return float((t + cum_w[k]) / cum_p[k])


def _chi2_state(p_row: np.ndarray, w: np.ndarray, t: float) -> tuple[np.ndarray, float]:
    eta = np.array([_shift_for_level(p_row[a], w[a], t) for a in range(p_row.shape[0])])
    gap = np.maximum(eta[:, None] - w, 0.0)
    return eta, float(np.sum(p_row * gap * gap))


def _chi2_min_mass(p_row: np.ndarray, w: np.ndarray) -> np.ndarray:
    mins = np.empty(p_row.shape[0])
    for a in range(p_row.shape[0]):
        mask = support(p_row[a])
        wmin = w[a, mask].min()
        mins[a] = p_row[a, mask & (w[a] <= wmin)].sum()
    return mins


def _chi2_support(
    p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float
) -> DualSolution:
    num_actions = p_row.shape[0]
    w = pi_s[:, None] * v[None, :]
    k2 = chi2_scale(rho) ** 2 * num_actions
    k = math.sqrt(k2)
    wmins = np.array([w[a, support(p_row[a])].min() for a in range(num_actions)])

    # The all-mass-on-minimizers corner is feasible: no interior stationary point.
    if float(np.sum(1.0 / _chi2_min_mass(p_row, w))) <= k2:
        return DualSolution(value=float(wmins.sum()), eta=wmins, method="corner")

    def ratio_gap(t: float) -> float:
        _, s = _chi2_state(p_row, w, t)
        return math.sqrt(s) / t - k

    hi = 1.0
    for _ in range(200):
        if ratio_gap(hi) <= 0.0:
            break
        hi *= 2.0
    else:
        raise NumericalFailure("chi-square s-rectangular level could not be bracketed", hi)

    lo, hi = bisect_decreasing(ratio_gap, 0.0, hi, CHI2_BISECT_ITERS)
    t = hi if lo == 0.0 else 0.5 * (lo + hi)
    eta, s = _chi2_state(p_row, w, t)
    value = float(eta.sum() - k * math.sqrt(s))
    residual = abs(math.sqrt(s) / t - k) / k

    converged = residual <= CHI2_STATIONARITY_TOL
    if not converged:
        warnings.warn(
            f"chi-square s-rectangular dual stalled (residual={residual:.3e})",
            ConvergenceWarning,
            stacklevel=3,
        )
        logger.warning("chi2_s_dual_not_converged", residual=residual)
    return DualSolution(
        value=value,
        eta=eta,
        iterations=CHI2_BISECT_ITERS,
        residual=residual,
        converged=converged,
        method="scalar_reduction",
        extra={"level": t},
    )


def _chi2_worst_case(p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
    w = pi_s[:, None] * v[None, :]
    sol = _chi2_support(p_row, pi_s, v, rho)
    if sol.method == "corner":
        return np.array([argmin_mass(p_row[a], w[a]) for a in range(p_row.shape[0])])
    assert sol.eta is not None
    weights = np.where(p_row > 0.0, p_row * np.maximum(sol.eta[:, None] - w, 0.0), 0.0)
    return weights / weights.sum(axis=1, keepdims=True)


# =============================================================================
# KL: scalar temperature dual
# =============================================================================


def _kl_parts(p_row: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    wmins, ps, xs = [], [], []
    for a in range(p_row.shape[0]):
        mask = support(p_row[a])
        wmin = float(w[a, mask].min())
        wmins.append(wmin)
        ps.append(p_row[a, mask])
        xs.append(w[a, mask] - wmin)
    return np.array(wmins), ps, xs


def _kl_support(p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float) -> DualSolution:
    budget = p_row.shape[0] * rho
    w = pi_s[:, None] * v[None, :]
    wmins, ps, xs = _kl_parts(p_row, w)
    floor_value = float(wmins.sum())
    spread = sum(float(np.dot(p, x)) for p, x in zip(ps, xs, strict=True))
    if spread == 0.0:
        return DualSolution(value=floor_value, lam=0.0, method="constant")

    def objective(lam: float) -> float:
        logs = sum(
            shifted_log_mgf(p, x, lam) for p, x in zip(ps, xs, strict=True) if x.max() > 0.0
        )
        return floor_value - lam * budget - lam * logs

    res = golden_section_max(objective, LAMBDA_FLOOR, max(spread / budget, 2.0 * LAMBDA_FLOOR), tol=GOLDEN_TOL)
    if not math.isfinite(res.fx):
        raise NumericalFailure("KL s-rectangular dual produced a non-finite value", res.width)
    if res.fx > floor_value:
        return DualSolution(
            value=res.fx, lam=res.x, iterations=res.iterations, residual=res.width,
            method="golden_section",
        )
    return DualSolution(
        value=floor_value, lam=0.0, iterations=res.iterations, residual=res.width, method="limit"
    )


def _kl_worst_case(p_row: np.ndarray, pi_s: np.ndarray, v: np.ndarray, rho: float) -> np.ndarray:
    w = pi_s[:, None] * v[None, :]
    sol = _kl_support(p_row, pi_s, v, rho)
    num_actions = p_row.shape[0]
    if not sol.lam:
        return np.array([argmin_mass(p_row[a], w[a]) for a in range(num_actions)])

    x = np.zeros_like(w)
    for a in range(num_actions):
        mask = support(p_row[a])
        x[a] = np.where(mask, w[a] - w[a, mask].min(), 0.0)

    def tilted(lam: float) -> np.ndarray:
        return np.array([kl_tilt(p_row[a], x[a], lam) for a in range(num_actions)])

    def total_div(lam: float) -> float:
        q = tilted(lam)
        mask = p_row > 0.0
        return float(rel_entr(q[mask], p_row[mask]).sum())

    lam = refine_kl_temperature(total_div, sol.lam, num_actions * rho)
    return tilted(lam)


# =============================================================================
# Public API
# =============================================================================


def s_support_inf(
    kind: Divergence | str,
    p_row: np.ndarray,
    pi_s: np.ndarray,
    v: np.ndarray,
    rho: float,
    gamma: float,
) -> DualSolution:
    """
    Worst-case policy-weighted expectation over an s-rectangular set.

    Args:
        kind: Divergence kind
        p_row: (A, S) center distributions of one state
        pi_s: Action distribution at that state
        v: Value vector
        rho: Per-action radius; the shared budget is |A| rho
        gamma: Discount factor (sets the published dual range)

    Returns:
        DualSolution with a length-|A| eta (L1, chi-square) or a scalar lam (KL)
    """
    kind = Divergence(kind)
    p_row = np.asarray(p_row, dtype=float)
    pi_s = np.asarray(pi_s, dtype=float)
    v = np.asarray(v, dtype=float)

    if kind == Divergence.L1:
        sol = _l1_support(p_row, pi_s, v, rho)
    elif kind == Divergence.CHI2:
        sol = _chi2_support(p_row, pi_s, v, rho)
    else:
        sol = _kl_support(p_row, pi_s, v, rho)
    sol.extra["range_bound"] = dual_range_bound(kind, rho, gamma, budget_scale=p_row.shape[0])
    return sol


def s_worst_case(
    kind: Divergence | str,
    p_row: np.ndarray,
    pi_s: np.ndarray,
    v: np.ndarray,
    rho: float,
    gamma: float,
) -> WorstCaseDistribution:
    """
    Per-action minimizing distributions of an s-rectangular set.

    The reported divergence is the summed divergence across actions.
    """
    kind = Divergence(kind)
    p_row = np.asarray(p_row, dtype=float)
    pi_s = np.asarray(pi_s, dtype=float)
    v = np.asarray(v, dtype=float)

    if kind == Divergence.L1:
        q = _l1_worst_case(p_row, pi_s, v, rho)
    elif kind == Divergence.CHI2:
        q = _chi2_worst_case(p_row, pi_s, v, rho)
    else:
        q = _kl_worst_case(p_row, pi_s, v, rho)
    total = sum(divergence(kind, q[a], p_row[a]) for a in range(p_row.shape[0]))
    return WorstCaseDistribution(q=q, divergence=float(total))
