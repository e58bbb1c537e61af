"""
Non-robust dynamic programming on tabular MDPs.

Bellman operators, value iteration, iterative and exact policy evaluation.
All sweeps are Jacobi-style: every backup of a sweep reads the previous
value vector only.
"""

import numpy as np

from services.shared.exceptions import MaxItersExceeded, NonFiniteQ
from services.shared.logging import get_logger
from services.shared.models.mdp import Policy, QFunction, TabularMdp, ValueFunction

logger = get_logger(__name__)


def stopping_threshold(tol: float, gamma: float) -> float:
    """Sweep-difference threshold that guarantees ||V - TV|| <= tol."""
    if gamma == 0.0:
        return np.inf
    return tol * (1.0 - gamma) / (2.0 * gamma)


def q_values(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    """Q(s, a) = R(s, a) + gamma * P(.|s, a)^T v."""
    return mdp.rewards + mdp.gamma * (mdp.transitions @ v)


def bellman_operator(mdp: TabularMdp, v: np.ndarray) -> np.ndarray:
    """Optimal Bellman backup (T v)(s) = max_a Q(s, a)."""
    return q_values(mdp, v).max(axis=1)


def policy_bellman_operator(mdp: TabularMdp, pi: Policy, v: np.ndarray) -> np.ndarray:
    """Policy backup (T^pi v)(s) = sum_a pi(a|s) Q(s, a)."""
    return np.einsum("sa,sa->s", pi.probs, q_values(mdp, v))


def greedy_policy(q: QFunction | np.ndarray) -> Policy:
    """
    Deterministic greedy policy with ties broken by the smallest action index.

    Raises:
        NonFiniteQ: a row contains NaN or infinite entries
    """
    values = q.values if isinstance(q, QFunction) else np.asarray(q, dtype=float)
    finite = np.isfinite(values).all(axis=1)
    if not finite.all():
        raise NonFiniteQ(int(np.argmin(finite)))
    return Policy.deterministic(np.argmax(values, axis=1), values.shape[1])


def value_iteration(
    mdp: TabularMdp,
    tol: float = 1e-8,
    max_iters: int = 10_000,
) -> tuple[ValueFunction, Policy]:
    """
    Solve the non-robust control problem by value iteration from V = 0.

    Args:
        mdp: Validated MDP
        tol: Bound on the Bellman residual of the returned value
        max_iters: Maximum number of sweeps

    Returns:
        Value function and its greedy policy

    Raises:
        MaxItersExceeded: the residual did not drop below the threshold
    """
    threshold = stopping_threshold(tol, mdp.gamma)
    v = np.zeros(mdp.num_states)
    residual = np.inf

    for iteration in range(1, max_iters + 1):
        v_new = bellman_operator(mdp, v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= threshold:
            logger.debug("value_iteration_converged", iterations=iteration, residual=residual)
            return ValueFunction(v), greedy_policy(q_values(mdp, v))

    raise MaxItersExceeded(max_iters, residual, partial=ValueFunction(v))


def policy_evaluation(
    mdp: TabularMdp,
    pi: Policy,
    tol: float = 1e-8,
    max_iters: int = 10_000,
) -> ValueFunction:
    """
    Iterate the policy Bellman operator to its fixed point.

    Raises:
        MaxItersExceeded: the residual did not drop below the threshold
    """
    threshold = stopping_threshold(tol, mdp.gamma)
    v = np.zeros(mdp.num_states)
    residual = np.inf

    for _ in range(max_iters):
        v_new = policy_bellman_operator(mdp, pi, v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= threshold:
            return ValueFunction(v)

    raise MaxItersExceeded(max_iters, residual, partial=ValueFunction(v))


def policy_value_exact(mdp: TabularMdp, pi: Policy) -> ValueFunction:
    """Solve (I - gamma P^pi) V = R^pi directly."""
    p_pi = np.einsum("sa,sat->st", pi.probs, mdp.transitions)
    r_pi = np.einsum("sa,sa->s", pi.probs, mdp.rewards)
    a = np.eye(mdp.num_states) - mdp.gamma * p_pi
    return ValueFunction(np.linalg.solve(a, r_pi))
