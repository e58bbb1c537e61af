"""
One-dimensional search routines used by the inner solvers.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1 / phi
INV_PHI_SQUARE = (3.0 - math.sqrt(5.0)) / 2.0  # 1 / phi^2


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a bracketing search."""

    x: float
    fx: float
    iterations: int
    width: float


def golden_section_max(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_iters: int = 500,
) -> SearchResult:
    """
    Golden-section search for the maximum of a unimodal function on [a, b].

    The number of steps is fixed up front from the ratio tol / (b - a); the
    returned point is the better of the two interior probes of the final
    bracket.
    """
    a, b = min(a, b), max(a, b)
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return SearchResult(x=x, fx=f(x), iterations=0, width=h)

    n = min(int(math.ceil(math.log(tol / h) / math.log(INV_PHI))), max_iters)

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc > yd:
            b = d
            d = c
            yd = yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)

    if yc > yd:
        return SearchResult(x=c, fx=yc, iterations=n, width=d - a)
    return SearchResult(x=d, fx=yd, iterations=n, width=b - c)


def bisect_decreasing(
    g: Callable[[float], float],
    lo: float,
    hi: float,
    iters: int,
) -> tuple[float, float]:
    """
    Bisection for the sign change of a non-increasing function.

    Assumes g(lo) > 0 >= g(hi) and keeps that invariant, returning the final
    (lo, hi) bracket.
    """
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi
