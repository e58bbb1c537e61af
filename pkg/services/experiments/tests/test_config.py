"""
Tests for experiment configuration.
"""

import pytest

from services.experiments.src.config import ExperimentConfig, build_config
from services.planning.src.ambiguity import Divergence, Rectangularity
from services.shared.config import Settings
from services.shared.exceptions import InvalidExperimentConfig


class TestBuildConfig:
    """Tests for build_config."""

    def test_defaults_come_from_settings(self, test_settings):
        """Unset fields should fall back to the settings values."""
        config = build_config(test_settings)
        assert config.random_size == (3, 2)
        assert config.n_list == [20, 80]
        assert config.reps == 4
        assert config.gamma == 0.7
        assert config.level == test_settings.confidence_level
        assert config.kinds == list(Divergence)

    def test_s_rectangular_default_size(self):
        """s-rectangular experiments default to the smaller problem."""
        settings = Settings(seed=None)
        config = build_config(settings, rectangularity="s")
        assert config.random_size == (settings.s_num_states, settings.s_num_actions)
        assert config.rectangularity == Rectangularity.S

    def test_s_rectangular_default_kinds(self, test_settings):
        """Without --kind, s-rectangular runs should use the kinds they can infer."""
        config = build_config(test_settings, rectangularity="s")
        assert config.kinds == [Divergence.CHI2, Divergence.KL]
        assert all(spec.kind != Divergence.L1 for spec in config.specs())

    def test_s_rectangular_explicit_kinds_are_kept(self, test_settings):
        """An explicit kind list should not be replaced by the default."""
        config = build_config(test_settings, rectangularity="s", kinds=[Divergence.L1])
        assert config.kinds == [Divergence.L1]

    def test_none_overrides_are_ignored(self, test_settings):
        """Flags left unset on the command line should not clobber defaults."""
        config = build_config(test_settings, reps=None, n_list=None, seed=3)
        assert config.reps == 4
        assert config.seed == 3

    def test_mdp_path_replaces_random_size(self, test_settings, mdp_file):
        """A file source should not also carry a random size."""
        config = build_config(test_settings, mdp_path=mdp_file)
        assert config.random_size is None
        assert config.mdp_path == mdp_file

    def test_environment_seed_wins(self, monkeypatch):
        """ROBUSTMDP_SEED should override the seed flag."""
        monkeypatch.setenv("ROBUSTMDP_SEED", "42")
        config = build_config(Settings(), seed=7)
        assert config.seed == 42

    def test_specs_product(self, test_settings):
        """One spec per (kind, rho) pair."""
        config = build_config(test_settings, kinds=[Divergence.L1, Divergence.KL], rhos=[0.1, 0.5])
        specs = config.specs()
        assert len(specs) == 4
        assert {(s.kind, s.rho) for s in specs} == {
            (Divergence.L1, 0.1),
            (Divergence.L1, 0.5),
            (Divergence.KL, 0.1),
            (Divergence.KL, 0.5),
        }

    @pytest.mark.parametrize(
        "overrides",
        [
            {"n_list": [50, 10]},
            {"n_list": [0, 10]},
            {"reps": 0},
            {"rhos": [-0.1]},
            {"rhos": []},
            {"level": 0.4},
            {"gamma": 1.0},
        ],
    )
    def test_rejects_invalid_values(self, test_settings, overrides):
        """Invalid fields or radii should raise InvalidExperimentConfig."""
        with pytest.raises(InvalidExperimentConfig):
            build_config(test_settings, **overrides)

    def test_exit_code_is_validation(self, test_settings):
        """Config errors are input errors."""
        with pytest.raises(InvalidExperimentConfig) as exc:
            build_config(test_settings, reps=0)
        assert exc.value.exit_code == 2


class TestExperimentConfig:
    """Tests for the ExperimentConfig model."""

    def test_requires_exactly_one_source(self):
        """Both or neither of random_size and mdp_path is an error."""
        with pytest.raises(ValueError):
            ExperimentConfig()
        with pytest.raises(ValueError):
            ExperimentConfig(random_size=(2, 2), mdp_path="mdp.json")

    def test_is_frozen(self):
        """Configs are immutable once built."""
        config = ExperimentConfig(random_size=(2, 2))
        with pytest.raises(ValueError):
            config.reps = 5
