"""
Tests for the tabular MDP data model.
"""

import json

import numpy as np
import pytest

from services.shared.exceptions import (
    BadGamma,
    BadInitialDist,
    BadPolicy,
    RewardOutOfRange,
    RowNotStochastic,
    ValidationError,
)
from services.shared.models.mdp import (
    Policy,
    PolicyKind,
    TabularMdp,
    ValueFunction,
    dump_mdp,
    load_mdp,
    validate_mdp,
)


def _arrays() -> tuple[np.ndarray, np.ndarray]:
    rewards = np.array([[0.0, 1.0], [0.5, 0.25]])
    transitions = np.array(
        [
            [[0.5, 0.5], [1.0, 0.0]],
            [[0.2, 0.8], [0.0, 1.0]],
        ]
    )
    return rewards, transitions


class TestTabularMdp:
    """Tests for TabularMdp construction and validation."""

    def test_from_arrays_defaults_to_uniform_initial_dist(self):
        """from_arrays should default mu to the uniform distribution."""
        rewards, transitions = _arrays()
        mdp = TabularMdp.from_arrays(rewards, transitions, 0.9)
        np.testing.assert_allclose(mdp.initial_dist, [0.5, 0.5])
        assert mdp.num_states == 2
        assert mdp.num_actions == 2

    def test_arrays_are_read_only(self):
        """Arrays should be copied and frozen."""
        rewards, transitions = _arrays()
        mdp = TabularMdp.from_arrays(rewards, transitions, 0.9)
        rewards[0, 0] = 0.7
        assert mdp.rewards[0, 0] == 0.0
        with pytest.raises(ValueError):
            mdp.transitions[0, 0, 0] = 0.1

    def test_rows_within_tolerance_are_renormalized(self):
        """Rows summing to one within 1e-12 should be rescaled exactly."""
        rewards, transitions = _arrays()
        transitions[0, 0] = [0.5, 0.5 + 5e-13]
        mdp = TabularMdp.from_arrays(rewards, transitions, 0.9)
        assert mdp.transitions[0, 0].sum() == pytest.approx(1.0, abs=1e-15)

    def test_rejects_non_stochastic_row(self):
        """A row summing to 0.9 should name its (s, a) cell."""
        rewards, transitions = _arrays()
        transitions[1, 0] = [0.1, 0.8]
        with pytest.raises(RowNotStochastic) as exc:
            TabularMdp.from_arrays(rewards, transitions, 0.9)
        assert exc.value.details["state"] == 1
        assert exc.value.details["action"] == 0
        assert exc.value.exit_code == 2

    def test_rejects_negative_entry(self):
        """A negative entry should be rejected even if the row sums to one."""
        rewards, transitions = _arrays()
        transitions[0, 1] = [1.5, -0.5]
        with pytest.raises(RowNotStochastic):
            TabularMdp.from_arrays(rewards, transitions, 0.9)

    def test_rejects_reward_out_of_range(self):
        """Rewards outside [0, 1] should be rejected with their index."""
        rewards, transitions = _arrays()
        rewards[1, 1] = 1.5
        with pytest.raises(RewardOutOfRange) as exc:
            TabularMdp.from_arrays(rewards, transitions, 0.9)
        assert (exc.value.details["state"], exc.value.details["action"]) == (1, 1)

    @pytest.mark.parametrize("gamma", [1.0, -0.1, 1.5])
    def test_rejects_bad_gamma(self, gamma):
        """gamma must lie in [0, 1)."""
        rewards, transitions = _arrays()
        with pytest.raises(BadGamma):
            TabularMdp.from_arrays(rewards, transitions, gamma)

    def test_accepts_zero_gamma(self):
        """gamma = 0 is a valid one-step problem."""
        rewards, transitions = _arrays()
        assert TabularMdp.from_arrays(rewards, transitions, 0.0).gamma == 0.0

    def test_rejects_bad_initial_dist(self):
        """Negative or unnormalized mu should be rejected."""
        rewards, transitions = _arrays()
        with pytest.raises(BadInitialDist):
            TabularMdp.from_arrays(rewards, transitions, 0.9, initial_dist=[1.2, -0.2])
        with pytest.raises(BadInitialDist):
            TabularMdp.from_arrays(rewards, transitions, 0.9, initial_dist=[0.3, 0.3])

    def test_rejects_wrong_transition_shape(self):
        """Transitions must have shape (S, A, S)."""
        rewards, _ = _arrays()
        with pytest.raises(ValidationError):
            TabularMdp.from_arrays(rewards, np.ones((2, 2, 3)) / 3.0, 0.9)

    def test_with_transitions_keeps_rewards_and_mu(self):
        """with_transitions should swap only the kernel."""
        rewards, transitions = _arrays()
        mdp = TabularMdp.from_arrays(rewards, transitions, 0.9, initial_dist=[0.25, 0.75])
        other = mdp.with_transitions(np.full((2, 2, 2), 0.5))
        np.testing.assert_array_equal(other.rewards, mdp.rewards)
        np.testing.assert_array_equal(other.initial_dist, mdp.initial_dist)
        assert other.gamma == mdp.gamma
        np.testing.assert_array_equal(other.transitions, np.full((2, 2, 2), 0.5))

    def test_constructor_defers_validation(self):
        """The bare constructor checks shapes only; validate_mdp finds the bad row."""
        rewards, transitions = _arrays()
        transitions[0, 1] = [0.6, 0.6]
        mdp = TabularMdp(rewards, transitions, 0.9, np.array([0.5, 0.5]))
        with pytest.raises(RowNotStochastic) as exc:
            validate_mdp(mdp)
        assert exc.value.details["sum"] == pytest.approx(1.2)

    def test_validate_accepts_valid_mdp(self):
        """A well-formed MDP should pass validation unchanged."""
        rewards, transitions = _arrays()
        validate_mdp(TabularMdp.from_arrays(rewards, transitions, 0.5))


class TestPolicy:
    """Tests for Policy."""

    def test_deterministic_policy_is_one_hot(self):
        """Deterministic policies should be stored as one-hot rows."""
        pi = Policy.deterministic([1, 0, 1], 2)
        assert pi.kind == PolicyKind.DETERMINISTIC
        np.testing.assert_array_equal(pi.probs, [[0, 1], [1, 0], [0, 1]])
        np.testing.assert_array_equal(pi.actions, [1, 0, 1])
        assert pi.to_dict()["actions"] == [1, 0, 1]

    def test_deterministic_rejects_out_of_range_action(self):
        """Action indices must be below num_actions."""
        with pytest.raises(ValidationError):
            Policy.deterministic([0, 2], 2)

    def test_stochastic_rejects_bad_row(self):
        """A row that does not sum to one should name the state."""
        with pytest.raises(BadPolicy) as exc:
            Policy.stochastic([[0.5, 0.5], [0.2, 0.3]])
        assert exc.value.details["state"] == 1

    def test_uniform_policy(self):
        """Uniform policy should spread mass evenly."""
        pi = Policy.uniform(2, 4)
        np.testing.assert_allclose(pi.probs, 0.25)


class TestValueFunction:
    """Tests for ValueFunction."""

    def test_at_initial_distribution(self):
        """at(mu) should be mu^T V."""
        v = ValueFunction(np.array([1.0, 3.0]))
        assert v.at(np.array([0.25, 0.75])) == pytest.approx(2.5)


class TestMdpDocument:
    """Tests for the JSON document format."""

    def test_dump_and_load(self, tmp_path):
        """A dumped MDP should load back unchanged."""
        rewards, transitions = _arrays()
        mdp = TabularMdp.from_arrays(rewards, transitions, 0.8, initial_dist=[0.1, 0.9])
        path = tmp_path / "mdp.json"
        dump_mdp(mdp, path)
        loaded = load_mdp(path)
        np.testing.assert_array_equal(loaded.transitions, mdp.transitions)
        np.testing.assert_array_equal(loaded.initial_dist, mdp.initial_dist)
        assert loaded.gamma == 0.8

    def test_load_rejects_mismatched_dimensions(self, tmp_path):
        """Documents whose tables disagree with num_states should be rejected."""
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "num_states": 3,
                    "num_actions": 1,
                    "gamma": 0.9,
                    "rewards": [[0.0], [1.0]],
                    "transitions": [[[1.0, 0.0]], [[0.0, 1.0]]],
                }
            )
        )
        with pytest.raises(ValidationError):
            load_mdp(path)

    def test_load_validates_invariants(self, tmp_path):
        """Loading should run the full MDP validation."""
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "num_states": 2,
                    "num_actions": 1,
                    "gamma": 0.9,
                    "rewards": [[0.0], [1.0]],
                    "transitions": [[[0.5, 0.4]], [[0.0, 1.0]]],
                }
            )
        )
        with pytest.raises(RowNotStochastic):
            load_mdp(path)
