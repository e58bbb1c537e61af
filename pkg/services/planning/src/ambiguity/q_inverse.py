"""
Minimal-divergence subproblem of the s-rectangular bisection solver.

q_inverse answers: how much divergence from p_hat does it take to pull the
backed-up value r + gamma * P^T v of one (s, a) cell down to a target u?
"""

import math

import numpy as np
from scipy.special import rel_entr

from services.planning.src.ambiguity.base import (
    Q_INVERSE_ITERS,
    Divergence,
    argmin_mass,
    divergence,
    kl_tilt,
    support,
)
from services.planning.src.ambiguity.search import bisect_decreasing

INFEASIBLE = math.inf


def _l1_min_divergence(p: np.ndarray, v: np.ndarray, target: float) -> float:
    """Move mass from the highest-value states onto the minimizer until the mean reaches target."""
    vmin = float(v.min())
    needed = float(np.dot(p, v)) - target
    moved = 0.0
    for s in np.argsort(-v, kind="stable"):
        gain = float(v[s] - vmin)
        if needed <= 0.0 or gain <= 0.0:
            break
        step = min(float(p[s]), needed / gain)
        moved += step
        needed -= step * gain
    return 2.0 * moved


def _chi2_family(p: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    w = p * np.maximum(eta - v, 0.0)
    return w / w.sum()


def _chi2_min_divergence(p: np.ndarray, v: np.ndarray, target: float) -> float:
    mean = float(np.dot(p, v))
    var = float(np.dot(p, (v - mean) ** 2))
    vmax = float(v.max())

    # Above max(v) the family mean is m - var / (eta - m), solvable in closed form.
    if target >= mean - var / (vmax - mean):
        eta = mean + var / (mean - target)
        return divergence(Divergence.CHI2, _chi2_family(p, v, eta), p)

    def excess(eta: float) -> float:
        return target - float(np.dot(_chi2_family(p, v, eta), v))

    lo, _ = bisect_decreasing(excess, float(v.min()), vmax, Q_INVERSE_ITERS)
    # lo keeps excess(lo) > 0, the feasible side
    if lo <= float(v.min()):
        return divergence(Divergence.CHI2, argmin_mass(p, v), p)
    return divergence(Divergence.CHI2, _chi2_family(p, v, lo), p)


def _kl_min_divergence(p: np.ndarray, v: np.ndarray, target: float) -> float:
    x = v - float(v.min())
    shifted = target - float(v.min())

    def tilt(theta: float) -> np.ndarray:
        return kl_tilt(p, x, 1.0 / theta)

    def excess(theta: float) -> float:
        return float(np.dot(tilt(theta), x)) - shifted

    hi = 1.0
    for _ in range(1000):
        if excess(hi) <= 0.0:
            break
        hi *= 2.0
    _, hi = bisect_decreasing(excess, 0.0, hi, Q_INVERSE_ITERS)
    return float(rel_entr(tilt(hi), p).sum())


def q_inverse(
    kind: Divergence | str,
    p_hat: np.ndarray,
    r: float,
    gamma: float,
    v: np.ndarray,
    u: float,
) -> float:
    """
    Minimal D_f(P || p_hat) over P << p_hat with r + gamma * P^T v <= u.

    Args:
        kind: Divergence kind
        p_hat: Center distribution of the cell
        r: Cell reward
        gamma: Discount factor
        v: Value vector
        u: Target backed-up value

    Returns:
        The minimal divergence, 0 when p_hat already meets the target, or
        INFEASIBLE (+inf) when no P << p_hat can reach it
    """
    kind = Divergence(kind)
    if gamma == 0.0:
        return 0.0 if r <= u else INFEASIBLE

    mask = support(np.asarray(p_hat, dtype=float))
    p = np.asarray(p_hat, dtype=float)[mask]
    vs = np.asarray(v, dtype=float)[mask]
    target = (u - r) / gamma

    if float(np.dot(p, vs)) <= target:
        return 0.0
    vmin = float(vs.min())
    if target < vmin:
        return INFEASIBLE
    if target == vmin:
        if kind == Divergence.KL:
            return float(-math.log(p[vs <= vmin].sum()))
        return divergence(kind, argmin_mass(p, vs), p)

    if kind == Divergence.L1:
        return _l1_min_divergence(p, vs, target)
    if kind == Divergence.CHI2:
        return _chi2_min_divergence(p, vs, target)
    return _kl_min_divergence(p, vs, target)
