"""
Tests for non-robust dynamic programming.
"""

import numpy as np
import pytest

from services.planning.src.dynamic_programming import (
    bellman_operator,
    greedy_policy,
    policy_bellman_operator,
    policy_evaluation,
    policy_value_exact,
    q_values,
    stopping_threshold,
    value_iteration,
)
from services.shared.exceptions import MaxItersExceeded, NonFiniteQ
from services.shared.models.mdp import Policy


class TestOperators:
    """Tests for the Bellman operators."""

    def test_q_values(self, chain_mdp):
        """Q(s, a) should be R + gamma P v."""
        q = q_values(chain_mdp, np.array([2.0, 1.0]))
        np.testing.assert_allclose(q[:, 0], [1.0 + 0.9 * (0.7 * 2.0 + 0.3), 0.9])

    def test_bellman_takes_max_over_actions(self, small_mdp):
        """T v should equal the row max of Q."""
        v = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(bellman_operator(small_mdp, v), q_values(small_mdp, v).max(axis=1))

    def test_policy_operator_averages_actions(self, small_mdp):
        """T^pi v under the uniform policy should be the row mean of Q."""
        v = np.array([0.5, 1.0, 2.0])
        pi = Policy.uniform(3, 2)
        np.testing.assert_allclose(
            policy_bellman_operator(small_mdp, pi, v), q_values(small_mdp, v).mean(axis=1)
        )

    def test_stopping_threshold(self):
        """Threshold should be tol (1 - gamma) / (2 gamma), infinite at gamma 0."""
        assert stopping_threshold(1e-6, 0.5) == pytest.approx(5e-7)
        assert stopping_threshold(1e-6, 0.0) == np.inf


class TestGreedyPolicy:
    """Tests for greedy_policy."""

    def test_ties_break_to_smallest_index(self):
        """Tied actions should resolve to the first one."""
        pi = greedy_policy(np.array([[1.0, 1.0, 0.5], [0.0, 2.0, 2.0]]))
        np.testing.assert_array_equal(pi.actions, [0, 1])

    def test_rejects_non_finite_rows(self):
        """A NaN row should raise NonFiniteQ naming the state."""
        with pytest.raises(NonFiniteQ) as exc:
            greedy_policy(np.array([[1.0, 0.0], [np.nan, 1.0]]))
        assert exc.value.details["state"] == 1


class TestValueIteration:
    """Tests for value iteration and policy evaluation."""

    def test_chain_closed_form(self, chain_mdp):
        """The looping state should be worth 1 / (1 - gamma p)."""
        v, pi = value_iteration(chain_mdp, tol=1e-10)
        np.testing.assert_allclose(v.values, [1.0 / (1.0 - 0.9 * 0.7), 0.0], atol=1e-8)
        np.testing.assert_array_equal(pi.actions, [0, 0])

    def test_value_iteration_is_a_fixed_point(self, small_mdp):
        """The returned value should have a Bellman residual below tol."""
        v, _ = value_iteration(small_mdp, tol=1e-8)
        assert np.max(np.abs(bellman_operator(small_mdp, v.values) - v.values)) <= 1e-8

    def test_raises_when_iterations_run_out(self, small_mdp):
        """One sweep cannot converge at gamma 0.8."""
        with pytest.raises(MaxItersExceeded) as exc:
            value_iteration(small_mdp, tol=1e-8, max_iters=1)
        assert exc.value.details["iterations"] == 1
        assert exc.value.partial is not None

    def test_iterative_matches_exact_evaluation(self, small_mdp):
        """Iterative policy evaluation should agree with the linear solve."""
        pi = Policy.stochastic([[0.3, 0.7], [1.0, 0.0], [0.5, 0.5]])
        iterative = policy_evaluation(small_mdp, pi, tol=1e-10)
        exact = policy_value_exact(small_mdp, pi)
        np.testing.assert_allclose(iterative.values, exact.values, atol=1e-9)
