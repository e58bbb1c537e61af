"""
Robust fixed-point solvers.

Robust value iteration for (s,a)-rectangular sets, the bisection solver for
s-rectangular sets, and robust policy evaluation for either. Sweeps are
Jacobi-style and start from V = 0.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import minimize

from services.planning.src.ambiguity import (
    AmbiguitySpec,
    q_inverse,
    s_support_inf,
    s_worst_case,
    sa_support_inf,
)
from services.planning.src.dynamic_programming import greedy_policy, stopping_threshold
from services.shared.exceptions import BadPolicy, InvalidAmbiguitySpec, MaxItersExceeded
from services.shared.logging import get_logger
from services.shared.models.mdp import Policy, QFunction, TabularMdp, ValueFunction

logger = get_logger(__name__)

__all__ = [
    "SolveReport",
    "bisection_solve",
    "greedy_policy",
    "robust_bellman_operator",
    "robust_policy_bellman_operator",
    "robust_policy_evaluation",
    "robust_q_values",
    "robust_solve",
    "robust_value_iteration",
    "s_rectangular_policy",
]

VERTEX_TOL = 1e-9


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an outer fixed-point solve."""

    value: ValueFunction
    policy: Policy | None
    q: QFunction | None
    iterations: int
    per_iteration_residuals: tuple[float, ...]
    converged: bool
    value_history: tuple[np.ndarray, ...] | None = None

    @property
    def residual(self) -> float:
        return self.per_iteration_residuals[-1] if self.per_iteration_residuals else float("inf")

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value.to_list(),
            "policy": None if self.policy is None else self.policy.to_dict(),
            "q": None if self.q is None else self.q.to_list(),
            "iterations": self.iterations,
            "per_iteration_residuals": list(self.per_iteration_residuals),
            "converged": self.converged,
        }


def bisection_eps(tol: float, gamma: float) -> float:
    """Inner bisection accuracy tied to the outer tolerance."""
    return tol * (1.0 - gamma) / 4.0


# =============================================================================
# Robust operators
# =============================================================================


def robust_q_values(mdp: TabularMdp, spec: AmbiguitySpec, v: np.ndarray) -> QFunction:
    """Q_r(s, a) = R(s, a) + gamma * inf over the (s,a) ball of P^T v."""
    if not spec.is_sa:
        raise InvalidAmbiguitySpec("robust Q values need an (s,a)-rectangular set", spec.to_dict())
    q = np.empty((mdp.num_states, mdp.num_actions))
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            inner = sa_support_inf(spec.kind, mdp.transitions[s, a], v, spec.rho, mdp.gamma)
            q[s, a] = mdp.rewards[s, a] + mdp.gamma * inner.value
    return QFunction(q, meta={"ambiguity": spec.to_dict()})


def _budget_reachable(mdp: TabularMdp, spec: AmbiguitySpec, s: int, v: np.ndarray, u: float) -> bool:
    """True when the adversary can hold every action's backup at or below u."""
    budget = mdp.num_actions * spec.rho
    spent = 0.0
    for a in range(mdp.num_actions):
        spent += q_inverse(
            spec.kind, mdp.transitions[s, a], mdp.rewards[s, a], mdp.gamma, v, u
        )
        if spent > budget:
            return False
    return True


def _bisection_backup(
    mdp: TabularMdp, spec: AmbiguitySpec, s: int, v: np.ndarray, eps: float
) -> float:
    lo, hi = 0.0, 1.0 + mdp.gamma * float(v.max())
    while hi - lo > 2.0 * eps:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _budget_reachable(mdp, spec, s, v, mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def robust_bellman_operator(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    v: np.ndarray,
    eps: float | None = None,
) -> np.ndarray:
    """
    Optimal robust backup (T_r v)(s).

    (s,a)-rectangular sets take the max over actions of the robust Q values;
    s-rectangular sets bisect on the state value with accuracy eps.
    """
    v = np.asarray(v, dtype=float)
    if spec.is_sa:
        return robust_q_values(mdp, spec, v).values.max(axis=1)
    eps = bisection_eps(1e-8, mdp.gamma) if eps is None else eps
    return np.array([_bisection_backup(mdp, spec, s, v, eps) for s in range(mdp.num_states)])


def robust_policy_bellman_operator(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    pi: Policy,
    v: np.ndarray,
) -> np.ndarray:
    """Policy robust backup (T_r^pi v)(s) = R^pi(s) + gamma * inf_P P^pi v."""
    v = np.asarray(v, dtype=float)
    out = np.empty(mdp.num_states)
    for s in range(mdp.num_states):
        pi_s = pi.probs[s]
        r_pi = float(np.dot(pi_s, mdp.rewards[s]))
        if spec.is_sa:
            inner = sum(
                pi_s[a] * sa_support_inf(spec.kind, mdp.transitions[s, a], v, spec.rho, mdp.gamma).value
                for a in np.flatnonzero(pi_s > 0.0)
            )
        else:
            inner = s_support_inf(spec.kind, mdp.transitions[s], pi_s, v, spec.rho, mdp.gamma).value
        out[s] = r_pi + mdp.gamma * inner
    return out


# =============================================================================
# s-rectangular policy extraction
# =============================================================================


def _state_objective(
    mdp: TabularMdp, spec: AmbiguitySpec, s: int, v: np.ndarray, pi_s: np.ndarray
) -> float:
    inner = s_support_inf(spec.kind, mdp.transitions[s], pi_s, v, spec.rho, mdp.gamma)
    return float(np.dot(pi_s, mdp.rewards[s])) + mdp.gamma * inner.value


def _state_gradient(
    mdp: TabularMdp, spec: AmbiguitySpec, s: int, v: np.ndarray, pi_s: np.ndarray
) -> np.ndarray:
    worst = s_worst_case(spec.kind, mdp.transitions[s], pi_s, v, spec.rho, mdp.gamma)
    return mdp.rewards[s] + mdp.gamma * (worst.q @ v)


def _state_policy(mdp: TabularMdp, spec: AmbiguitySpec, s: int, v: np.ndarray) -> np.ndarray:
    num_actions = mdp.num_actions
    vertices = np.eye(num_actions)
    scores = [_state_objective(mdp, spec, s, v, vertices[a]) for a in range(num_actions)]
    x0 = vertices[int(np.argmax(scores))]
    if num_actions == 1:
        return x0

    def project(x: np.ndarray) -> np.ndarray:
        x = np.clip(x, 0.0, None)
        total = x.sum()
        return x / total if total > 0.0 else np.full(num_actions, 1.0 / num_actions)

    res = minimize(
        lambda x: -_state_objective(mdp, spec, s, v, project(x)),
        x0,
        jac=lambda x: -_state_gradient(mdp, spec, s, v, project(x)),
        method="SLSQP",
        bounds=[(0.0, 1.0)] * num_actions,
        constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
        options={"ftol": 1e-12, "maxiter": 200},
    )
    if not res.success or not np.all(np.isfinite(res.x)):
        logger.warning("s_policy_fallback_to_greedy", state=s, message=str(res.message))
        return x0

    x = project(res.x)
    if _state_objective(mdp, spec, s, v, x) < max(scores):
        return x0
    return x


def s_rectangular_policy(mdp: TabularMdp, spec: AmbiguitySpec, v: np.ndarray) -> Policy:
    """
    Robust policy for an s-rectangular set at value v.

    Per state, maximizes the concave map pi -> R^pi(s) + gamma * inf_P P^pi v
    over the action simplex, starting from the best deterministic action.
    Stays deterministic when the optimizer does not improve on that action.
    """
    v = np.asarray(v, dtype=float)
    probs = np.array([_state_policy(mdp, spec, s, v) for s in range(mdp.num_states)])
    if np.all(probs.max(axis=1) >= 1.0 - VERTEX_TOL):
        return Policy.deterministic(np.argmax(probs, axis=1), mdp.num_actions)
    return Policy.stochastic(probs)


# =============================================================================
# Outer loops
# =============================================================================


def _fixed_point(
    step: Any,
    num_states: int,
    threshold: float,
    max_iters: int,
    track_values: bool,
) -> tuple[np.ndarray, list[float], bool, list[np.ndarray]]:
    v = np.zeros(num_states)
    residuals: list[float] = []
    history: list[np.ndarray] = [v.copy()] if track_values else []
    for iteration in range(1, max_iters + 1):
        v_new = step(v)
        residual = float(np.max(np.abs(v_new - v)))
        residuals.append(residual)
        v = v_new
        if track_values:
            history.append(v.copy())
        logger.debug("robust_sweep", iteration=iteration, residual=residual)
        if residual <= threshold:
            return v, residuals, True, history
    return v, residuals, False, history


def _finish(
    name: str,
    v: np.ndarray,
    policy: Policy | None,
    q: QFunction | None,
    residuals: list[float],
    converged: bool,
    history: list[np.ndarray],
    track_values: bool,
    raise_on_max_iters: bool,
) -> SolveReport:
    report = SolveReport(
        value=ValueFunction(v),
        policy=policy,
        q=q,
        iterations=len(residuals),
        per_iteration_residuals=tuple(residuals),
        converged=converged,
        value_history=tuple(history) if track_values else None,
    )
    if converged:
        logger.info(f"{name}_converged", iterations=report.iterations, residual=report.residual)
        return report
    logger.warning(f"{name}_not_converged", iterations=report.iterations, residual=report.residual)
    if raise_on_max_iters:
        raise MaxItersExceeded(report.iterations, report.residual, partial=report)
    return report


def robust_value_iteration(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    T: int = 10_000,
    tol: float = 1e-8,
    raise_on_max_iters: bool = False,
    track_values: bool = False,
) -> SolveReport:
    """
    Robust value iteration under an (s,a)-rectangular set.

    Args:
        mdp: Validated MDP (true or estimated kernel)
        spec: (s,a)-rectangular ambiguity set
        T: Maximum number of sweeps
        tol: Bound on ||V - T_r V|| at convergence
        raise_on_max_iters: Raise instead of returning a partial report
        track_values: Keep every iterate (including V_0) on the report

    Returns:
        SolveReport with the greedy policy of the robust Q at the final value

    Raises:
        InvalidAmbiguitySpec: spec is s-rectangular
        MaxItersExceeded: T sweeps ran out and raise_on_max_iters is set
    """
    if not spec.is_sa:
        raise InvalidAmbiguitySpec(
            "robust value iteration needs an (s,a)-rectangular set", spec.to_dict()
        )
    v, residuals, converged, history = _fixed_point(
        lambda x: robust_bellman_operator(mdp, spec, x),
        mdp.num_states,
        stopping_threshold(tol, mdp.gamma),
        T,
        track_values,
    )
    q = robust_q_values(mdp, spec, v)
    return _finish(
        "robust_vi", v, greedy_policy(q), q, residuals, converged, history,
        track_values, raise_on_max_iters,
    )


def bisection_solve(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    T: int = 10_000,
    eps: float | None = None,
    tol: float = 1e-8,
    raise_on_max_iters: bool = False,
    track_values: bool = False,
) -> SolveReport:
    """
    Bisection solver under an s-rectangular set.

    Each sweep bisects every state value on [0, 1 + gamma * max V]; a target u
    is reachable when the summed minimal divergences of the actions fit in the
    |A| rho budget. The inner error eps adds 2 eps per sweep to the residual
    recursion, so sweeps stop at max(tol (1-gamma)/(2 gamma), 4 eps/(1-gamma)).
    """
    if spec.is_sa:
        raise InvalidAmbiguitySpec("bisection needs an s-rectangular set", spec.to_dict())
    eps = bisection_eps(tol, mdp.gamma) if eps is None else eps
    threshold = max(stopping_threshold(tol, mdp.gamma), 4.0 * eps / (1.0 - mdp.gamma))
    v, residuals, converged, history = _fixed_point(
        lambda x: robust_bellman_operator(mdp, spec, x, eps=eps),
        mdp.num_states,
        threshold,
        T,
        track_values,
    )
    return _finish(
        "bisection", v, s_rectangular_policy(mdp, spec, v), None, residuals, converged,
        history, track_values, raise_on_max_iters,
    )


def robust_solve(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    T: int = 10_000,
    tol: float = 1e-8,
    raise_on_max_iters: bool = False,
    track_values: bool = False,
) -> SolveReport:
    """Dispatch to the solver matching the set's rectangularity."""
    solver = robust_value_iteration if spec.is_sa else bisection_solve
    return solver(
        mdp, spec, T=T, tol=tol, raise_on_max_iters=raise_on_max_iters, track_values=track_values
    )


def robust_policy_evaluation(
    mdp: TabularMdp,
    spec: AmbiguitySpec,
    pi: Policy,
    tol: float = 1e-8,
    max_iters: int = 10_000,
    raise_on_max_iters: bool = False,
) -> SolveReport:
    """
    Fixed point of the robust policy operator T_r^pi, from V = 0.

    Raises:
        BadPolicy: pi does not match the MDP dimensions
        MaxItersExceeded: max_iters ran out and raise_on_max_iters is set
    """
    if pi.probs.shape != (mdp.num_states, mdp.num_actions):
        raise BadPolicy(0, f"shape {pi.probs.shape} does not match the MDP")
    v, residuals, converged, history = _fixed_point(
        lambda x: robust_policy_bellman_operator(mdp, spec, pi, x),
        mdp.num_states,
        stopping_threshold(tol, mdp.gamma),
        max_iters,
        False,
    )
    return _finish(
        "robust_policy_evaluation", v, pi, None, residuals, converged, history,
        False, raise_on_max_iters,
    )
