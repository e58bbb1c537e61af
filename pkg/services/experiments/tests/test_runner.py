"""
Tests for the Monte-Carlo experiments.
"""

import io
import math

import numpy as np
import pandas as pd
import pytest

from services.experiments.src import runner
from services.experiments.src.config import build_config
from services.experiments.src.environments import load_environment
from services.experiments.src.runner import (
    CONVERGENCE_COLUMNS,
    CoverageRow,
    convergence_experiment,
    coverage_experiment,
    run_replications,
    write_coverage_csv,
)
from services.planning.src.ambiguity import Divergence
from services.planning.src.solvers import robust_solve
from services.shared.exceptions import SingularDerivative, UnsupportedCombination


def _square(x: int) -> int:
    return x * x


class TestRunReplications:
    """Tests for run_replications."""

    def test_serial_preserves_order(self):
        """Results should come back in task order."""
        assert run_replications(_square, range(5)) == [0, 1, 4, 9, 16]

    def test_pool_preserves_order(self):
        """The process pool should also return results in task order."""
        assert run_replications(_square, range(10), workers=2) == [i * i for i in range(10)]


class TestConvergence:
    """Tests for convergence_experiment."""

    def test_frame_layout(self, tiny_config):
        """One row per (n, iteration) with the documented columns."""
        frame = convergence_experiment(tiny_config)
        assert list(frame.columns) == CONVERGENCE_COLUMNS
        assert set(frame["n"]) == {30, 120}
        for _, group in frame.groupby("n"):
            assert group["iter"].tolist() == list(range(len(group)))

    def test_starts_at_the_truth_norm(self, tiny_config):
        """Iteration 0 is V_0 = 0, so its error is ||V_r*|| with no spread."""
        frame = convergence_experiment(tiny_config)
        mdp = load_environment(tiny_config)
        v_star = robust_solve(mdp, tiny_config.specs()[0], tol=tiny_config.truth_tol).value.values
        first = frame[frame["iter"] == 0]
        np.testing.assert_allclose(first["mean_err"], np.max(np.abs(v_star)), rtol=1e-9)
        np.testing.assert_allclose(first["se_err"], 0.0, atol=1e-12)

    def test_error_decreases(self, tiny_config):
        """The final error should sit well below the starting error."""
        frame = convergence_experiment(tiny_config)
        for _, group in frame.groupby("n"):
            assert group["mean_err"].iloc[-1] < 0.5 * group["mean_err"].iloc[0]

    def test_reproducible(self, tiny_config):
        """The same config should give the same frame."""
        pd.testing.assert_frame_equal(
            convergence_experiment(tiny_config), convergence_experiment(tiny_config)
        )


class TestCoverage:
    """Tests for coverage_experiment."""

    def test_rows(self, tiny_config):
        """One row per n with coverage a multiple of 1 / reps."""
        rows = coverage_experiment(tiny_config)
        assert [row.n for row in rows] == [30, 120]
        for row in rows:
            assert row.kind == "kl" and row.rect == "sa" and row.rho == 0.2
            kept = tiny_config.reps - row.excluded
            if kept:
                hits = row.coverage_pct * kept / 100.0
                assert hits == pytest.approx(round(hits))
                assert row.mean_ci_length > 0.0

    def test_rejects_l1_s_rectangular(self, test_settings):
        """Inference is undefined for L1 with s-rectangular sets."""
        config = build_config(
            test_settings, kinds=[Divergence.L1], rectangularity="s", rhos=[0.1], reps=1
        )
        with pytest.raises(UnsupportedCombination):
            coverage_experiment(config)

    def test_failed_replications_are_excluded(self, tiny_config, monkeypatch):
        """Replications that raise should be counted, not averaged."""

        def failing(*args, **kwargs):
            raise SingularDerivative(1e13)

        monkeypatch.setattr(runner, "infer_optimal_value", failing)
        rows = coverage_experiment(tiny_config)
        assert all(row.excluded == tiny_config.reps for row in rows)
        assert all(math.isnan(row.coverage_pct) for row in rows)


class TestCoverageCsv:
    """Tests for write_coverage_csv."""

    def test_columns(self):
        """The CSV should carry every CoverageRow field."""
        rows = [CoverageRow("kl", "sa", 0.1, 100, 95.0, 0.7, 0.12, 0.01)]
        buffer = io.StringIO()
        write_coverage_csv(rows, buffer)
        lines = buffer.getvalue().splitlines()
        assert lines[0] == (
            "kind,rect,rho,n,coverage_pct,coverage_se_pct,mean_ci_length,ci_length_se,excluded"
        )
        assert lines[1].startswith("kl,sa,0.1,100,95.0")
