"""
Tests for the robustmdp command line.
"""

import json

import pytest

from services.experiments.src.main import build_parser, cli_main
from services.planning.src.theory import BoundQuery, upper_bound_eps

BOUNDS_ARGS = ["bounds", "--kind", "l1", "--rho", "0.5", "--S", "20", "--A", "10", "--gamma", "0.9"]


def _run(capsys, argv, settings):
    code = cli_main(argv, settings=settings)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestParser:
    """Tests for argument parsing."""

    def test_size_argument(self):
        """--random should parse S,A pairs."""
        args = build_parser().parse_args(["solve", "--random", "4,3", "--kind", "kl", "--rho", "0.1"])
        assert args.random == (4, 3)
        assert args.rect == "sa"

    def test_experiment_lists(self):
        """Experiment flags take comma-separated lists."""
        args = build_parser().parse_args(
            ["coverage", "--kind", "l1,kl", "--rho", "0.1,0.5", "--n", "10,100"]
        )
        assert [k.value for k in args.kind] == ["l1", "kl"]
        assert args.rho == [0.1, 0.5]
        assert args.n == [10, 100]

    def test_unknown_kind_exits_with_usage_error(self, capsys, test_settings):
        """An invalid --kind should exit 2 and name the flag."""
        code, _, err = _run(capsys, ["solve", "--kind", "tv", "--rho", "0.1"], test_settings)
        assert code == 2
        assert "--kind" in err


class TestBounds:
    """Tests for the bounds command."""

    def test_generative_bounds(self, capsys, test_settings):
        """The payload should carry the upper bound, gap bound and lower-bound order."""
        code, out, _ = _run(capsys, BOUNDS_ARGS + ["--n", "1000", "--eps", "0.1"], test_settings)
        assert code == 0
        payload = json.loads(out)
        query = BoundQuery(
            kind="l1",
            rectangularity="sa",
            data_mode="generative",
            num_states=20,
            num_actions=10,
            gamma=0.9,
            rho=0.5,
            n=1000,
            delta=0.05,
        )
        assert payload["upper_bound_eps"] == pytest.approx(upper_bound_eps(query))
        assert payload["gap_bound"] == pytest.approx(0.9 * 0.5 / 0.01)
        assert payload["lower_bound_samples"] == {"value": pytest.approx(32000.0), "order_only": True}
        assert "min_offline_samples" not in payload

    def test_offline_bounds(self, capsys, test_settings):
        """Offline queries should also report the minimum dataset size."""
        argv = BOUNDS_ARGS + ["--n", "100000", "--offline", "--nu-min", "0.005"]
        code, out, _ = _run(capsys, argv, test_settings)
        assert code == 0
        payload = json.loads(out)
        assert payload["query"]["data_mode"] == "offline"
        assert payload["min_offline_samples"] > 0.0
        assert payload["lower_bound_samples"] is None

    def test_kl_without_p_underbar(self, capsys, test_settings):
        """A missing parameter should exit 2 with a JSON error on stderr."""
        argv = ["bounds", "--kind", "kl", "--rho", "0.5", "--S", "5", "--A", "2"]
        code, out, err = _run(capsys, argv + ["--gamma", "0.9", "--n", "100"], test_settings)
        assert code == 2
        assert out == ""
        error = json.loads(err.strip().splitlines()[-1])
        assert error["error"] == "MissingParameter"
        assert error["details"]["name"] == "p_underbar"


class TestSolveAndEvaluate:
    """Tests for the solve and evaluate commands."""

    def test_solve_random(self, capsys, test_settings):
        """Solving a small random MDP should report a converged value."""
        argv = ["solve", "--random", "3,2", "--gamma", "0.7", "--kind", "kl", "--rho", "0.2"]
        code, out, _ = _run(capsys, argv, test_settings)
        assert code == 0
        payload = json.loads(out)
        assert payload["report"]["converged"] is True
        assert len(payload["report"]["value"]) == 3
        assert payload["spec"]["kind"] == "kl"
        assert "inference" not in payload

    def test_solve_with_inference(self, capsys, test_settings):
        """--infer with --n should attach a confidence interval."""
        argv = ["solve", "--random", "3,2", "--gamma", "0.7", "--kind", "chi2", "--rho", "0.2"]
        code, out, _ = _run(capsys, argv + ["--n", "200", "--infer"], test_settings)
        assert code == 0
        inference = json.loads(out)["inference"]
        assert inference["ci_low"] <= inference["point"] <= inference["ci_high"]
        assert inference["n"] == 200

    def test_infer_requires_n(self, capsys, test_settings):
        """Inference without a sample size is an input error."""
        argv = ["solve", "--random", "3,2", "--kind", "kl", "--rho", "0.2", "--infer"]
        code, _, err = _run(capsys, argv, test_settings)
        assert code == 2
        assert "--n" in err

    def test_evaluate_policy_file(self, capsys, test_settings, mdp_file, tmp_path):
        """A deterministic policy file should be evaluated on the MDP file."""
        policy = tmp_path / "policy.json"
        policy.write_text(json.dumps({"actions": [0, 1]}))
        argv = ["evaluate", "--mdp", str(mdp_file), "--kind", "l1", "--rho", "0.1"]
        code, out, _ = _run(capsys, argv + ["--policy", str(policy)], test_settings)
        assert code == 0
        payload = json.loads(out)
        assert payload["report"]["converged"] is True
        assert payload["report"]["policy"]["kind"] == "deterministic"

    def test_malformed_mdp_file(self, capsys, test_settings, tmp_path):
        """A document with mismatched tables should exit 2."""
        path = tmp_path / "bad.json"
        document = {
            "num_states": 2,
            "num_actions": 1,
            "gamma": 0.9,
            "rewards": [[0.1]],
            "transitions": [[[1.0, 0.0]]],
        }
        path.write_text(json.dumps(document))
        argv = ["solve", "--mdp", str(path), "--kind", "kl", "--rho", "0.1"]
        code, _, _ = _run(capsys, argv, test_settings)
        assert code == 2


class TestSample:
    """Tests for the sample command."""

    def test_generative(self, capsys, test_settings):
        """Every cell should receive n samples."""
        code, out, _ = _run(capsys, ["sample", "--random", "3,2", "--n", "10"], test_settings)
        assert code == 0
        payload = json.loads(out)
        assert payload["mode"] == "generative"
        assert payload["totals"] == [[10, 10]] * 3

    def test_offline_dataset_round_trip(self, capsys, test_settings, mdp_file, tmp_path):
        """An offline dataset written by one call should feed the truncation estimator."""
        data = tmp_path / "data.csv"
        argv = ["sample", "--mdp", str(mdp_file), "--n", "400", "--offline", "--out", str(data)]
        code, _, _ = _run(capsys, argv, test_settings)
        assert code == 0
        assert len(data.read_text().splitlines()) == 401

        argv = ["sample", "--mdp", str(mdp_file), "--n", "400", "--dataset", str(data), "--truncate"]
        code, out, _ = _run(capsys, argv, test_settings)
        assert code == 0
        payload = json.loads(out)
        assert payload["mode"] == "offline_truncated"
        totals = {t for row in payload["totals"] for t in row}
        assert len(totals) == 1


class TestExperiments:
    """Tests for the coverage and convergence commands."""

    def test_coverage_csv_on_stdout(self, capsys, test_settings):
        """Coverage rows should be written as CSV when --out is absent."""
        argv = ["coverage", "--random", "3,2", "--kind", "kl", "--rho", "0.2"]
        code, out, _ = _run(capsys, argv + ["--n", "40", "--reps", "2"], test_settings)
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("kind,rect,rho,n,coverage_pct")
        assert len(lines) == 2

    def test_s_rectangular_coverage_without_kind(self, capsys, test_settings):
        """--rect s with no --kind should run the chi2 and KL rows and exit 0."""
        argv = ["coverage", "--rect", "s", "--random", "2,2", "--rho", "0.2"]
        code, out, err = _run(capsys, argv + ["--n", "40", "--reps", "2"], test_settings)
        assert code == 0, err
        header, *rows = out.splitlines()
        assert header.startswith("kind,rect,rho,n,coverage_pct")
        assert sorted(row.split(",")[0] for row in rows) == ["chi2", "kl"]
        assert {row.split(",")[1] for row in rows} == {"s"}

    def test_convergence_csv_file(self, capsys, test_settings, tmp_path):
        """Convergence curves should be written to --out."""
        out_path = tmp_path / "curves.csv"
        argv = ["convergence", "--random", "3,2", "--kind", "l1", "--rho", "0.2"]
        code, _, _ = _run(
            capsys, argv + ["--n", "40", "--reps", "2", "--out", str(out_path)], test_settings
        )
        assert code == 0
        assert out_path.read_text().splitlines()[0] == "kind,rect,rho,n,iter,mean_err,se_err"

    def test_invalid_experiment_config(self, capsys, test_settings):
        """A descending n grid should exit 2."""
        argv = ["coverage", "--random", "3,2", "--kind", "kl", "--rho", "0.2", "--n", "50,10"]
        code, _, err = _run(capsys, argv, test_settings)
        assert code == 2
        assert "InvalidExperimentConfig" in err
