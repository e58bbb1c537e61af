"""
robustmdp - command-line entry point.

Subcommands:
    solve        Solve a robust MDP (optionally on an estimated kernel)
    evaluate     Robust value of a fixed policy
    sample       Estimate a kernel from generative or offline samples
    coverage     Monte-Carlo coverage of plug-in confidence intervals
    convergence  Error curves of robust solves on estimated kernels
    bounds       Finite-sample bounds for a problem size

JSON goes to stdout, logs to stderr. Exit codes: 0 success, 2 invalid
input, 3 numerical failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any
from uuid import uuid4

import numpy as np

from services.estimation.src.inference import infer_optimal_value, infer_policy_value
from services.estimation.src.sampling import (
    generative_estimate,
    offline_estimate,
    offline_sample,
    read_dataset_csv,
    truncate_uniform,
    uniform_behavior,
    write_dataset_csv,
)
from services.experiments.src.config import ExperimentConfig, build_config
from services.experiments.src.environments import random_mdp
from services.experiments.src.runner import (
    convergence_experiment,
    coverage_experiment,
    write_coverage_csv,
)
from services.planning.src.ambiguity import AmbiguitySpec, Divergence, Rectangularity
from services.planning.src.solvers import robust_policy_evaluation, robust_solve
from services.planning.src.theory import (
    BoundQuery,
    DataMode,
    gap_bound,
    lower_bound_samples,
    min_offline_samples,
    upper_bound_eps,
)
from services.shared.config import Settings, get_settings
from services.shared.exceptions import MissingParameter, RobustMdpError, ValidationError
from services.shared.logging import bind_run, configure_logging, get_logger, set_run_id
from services.shared.models.mdp import Policy, TabularMdp, load_mdp

logger = get_logger(__name__)


# =============================================================================
# Argument types
# =============================================================================


def _size(text: str) -> tuple[int, int]:
    try:
        num_states, num_actions = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected S,A (e.g. 20,10), got {text!r}")
    if num_states < 1 or num_actions < 1:
        raise argparse.ArgumentTypeError("S and A must be positive")
    return num_states, num_actions


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _kind_list(text: str) -> list[Divergence]:
    try:
        return [Divergence(part) for part in text.split(",") if part]
    except ValueError:
        choices = ", ".join(k.value for k in Divergence)
        raise argparse.ArgumentTypeError(f"invalid kind in {text!r} (choose from {choices})")


# =============================================================================
# Parser
# =============================================================================


def _add_source(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--mdp", type=Path, help="MDP JSON file")
    source.add_argument("--random", type=_size, metavar="S,A", help="Random MDP of this size")
    parser.add_argument("--gamma", type=float, help="Discount factor (overrides the file's)")


def _add_spec(parser: argparse.ArgumentParser, many: bool = False) -> None:
    if many:
        parser.add_argument("--kind", type=_kind_list, help="Comma-separated kinds (l1,chi2,kl)")
        parser.add_argument("--rho", type=_float_list, help="Comma-separated radii")
    else:
        parser.add_argument("--kind", required=True, choices=[k.value for k in Divergence])
        parser.add_argument("--rho", type=float, required=True)
    parser.add_argument("--rect", choices=[r.value for r in Rectangularity], default="sa")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, help="Solver tolerance")
    parser.add_argument("--iters", type=int, help="Maximum solver sweeps")
    parser.add_argument("--level", type=float, help="One-sided normal quantile level")
    parser.add_argument("--out", type=Path, help="Output file (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustmdp",
        description="Distributionally robust planning and inference for tabular MDPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Solve for the optimal robust value")
    _add_source(solve)
    _add_spec(solve)
    _add_common(solve)
    solve.add_argument("--n", type=int, help="Solve on a generative estimate with n samples/cell")
    solve.add_argument("--infer", action="store_true", help="Attach a confidence interval")

    evaluate = sub.add_parser("evaluate", help="Robust value of a fixed policy")
    _add_source(evaluate)
    _add_spec(evaluate)
    _add_common(evaluate)
    evaluate.add_argument("--policy", type=Path, help="Policy JSON (uniform when omitted)")
    evaluate.add_argument("--n", type=int, help="Evaluate on a generative estimate")
    evaluate.add_argument("--infer", action="store_true", help="Attach a confidence interval")

    sample = sub.add_parser("sample", help="Estimate a transition kernel")
    _add_source(sample)
    _add_common(sample)
    sample.add_argument("--n", type=int, required=True, help="Samples per cell, or dataset size")
    sample.add_argument("--offline", action="store_true", help="Uniform behavior offline data")
    sample.add_argument("--dataset", type=Path, help="Read an offline dataset CSV instead")
    sample.add_argument("--truncate", action="store_true", help="Uniform truncation estimator")

    for name, help_text in (
        ("coverage", "Coverage of plug-in confidence intervals"),
        ("convergence", "Convergence of robust solves on estimated kernels"),
    ):
        exp = sub.add_parser(name, help=help_text)
        _add_source(exp)
        _add_spec(exp, many=True)
        _add_common(exp)
        exp.add_argument("--n", type=_int_list, help="Comma-separated sample sizes")
        exp.add_argument("--reps", type=int)
        exp.add_argument("--workers", type=int)

    bounds = sub.add_parser("bounds", help="Finite-sample bounds")
    _add_spec(bounds)
    bounds.add_argument("--S", dest="num_states", type=int, required=True)
    bounds.add_argument("--A", dest="num_actions", type=int, required=True)
    bounds.add_argument("--gamma", type=float, required=True)
    bounds.add_argument("--n", type=int, required=True)
    bounds.add_argument("--delta", type=float, default=0.05)
    bounds.add_argument("--p-underbar", type=float)
    bounds.add_argument("--nu-min", type=float)
    bounds.add_argument("--offline", action="store_true")
    bounds.add_argument("--eps", type=float, help="Target accuracy for the lower bound")
    bounds.add_argument("--out", type=Path)

    return parser


# =============================================================================
# Helpers
# =============================================================================


def _load(args: argparse.Namespace, settings: Settings, seed: int) -> TabularMdp:
    if args.mdp is not None:
        mdp = load_mdp(args.mdp)
        if args.gamma is not None:
            mdp = TabularMdp.from_arrays(mdp.rewards, mdp.transitions, args.gamma, mdp.initial_dist)
        return mdp
    size = args.random or (settings.sa_num_states, settings.sa_num_actions)
    gamma = settings.experiment_gamma if args.gamma is None else args.gamma
    return random_mdp(size[0], size[1], gamma, seed)


def _spec(args: argparse.Namespace) -> AmbiguitySpec:
    return AmbiguitySpec(args.kind, args.rho, args.rect)


def _load_policy(path: Path | None, mdp: TabularMdp) -> Policy:
    if path is None:
        return Policy.uniform(mdp.num_states, mdp.num_actions)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read policy file: {e}", {"path": str(path)})
    probs = data.get("probs") if isinstance(data, dict) else data
    if isinstance(data, dict) and "actions" in data and probs is None:
        return Policy.deterministic(data["actions"], mdp.num_actions)
    if probs is None:
        raise ValidationError("policy file needs \"probs\" or \"actions\"", {"path": str(path)})
    arr = np.asarray(probs)
    if arr.ndim == 1:
        return Policy.deterministic(arr, mdp.num_actions)
    return Policy.stochastic(arr)


def _estimated(mdp: TabularMdp, n: int | None, seed: int) -> TabularMdp:
    if n is None:
        return mdp
    return generative_estimate(mdp, n, seed).to_mdp(mdp)


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _emit(payload: Any, out: Path | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        out.write_text(text + "\n")


# =============================================================================
# Commands
# =============================================================================


def cmd_solve(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    truth = _load(args, settings, seed)
    spec = _spec(args)
    mdp = _estimated(truth, args.n, seed)
    tol = settings.solver_tol if args.tol is None else args.tol
    T = settings.solver_max_iters if args.iters is None else args.iters

    report = robust_solve(mdp, spec, T=T, tol=tol)
    payload: dict[str, Any] = {"spec": spec.to_dict(), "report": report.to_dict()}
    payload["value_at_mu"] = report.value.at(mdp.initial_dist)
    if args.infer:
        if args.n is None:
            raise MissingParameter("--n")
        payload["inference"] = infer_optimal_value(
            mdp, spec, args.n, level=args.level, tol=tol, T=T, settings=settings
        ).to_dict()
    _emit(payload, args.out)


def cmd_evaluate(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    truth = _load(args, settings, seed)
    spec = _spec(args)
    mdp = _estimated(truth, args.n, seed)
    pi = _load_policy(args.policy, mdp)
    tol = settings.solver_tol if args.tol is None else args.tol
    max_iters = settings.solver_max_iters if args.iters is None else args.iters

    report = robust_policy_evaluation(mdp, spec, pi, tol=tol, max_iters=max_iters)
    payload: dict[str, Any] = {
        "spec": spec.to_dict(),
        "report": report.to_dict(),
        "value_at_mu": report.value.at(mdp.initial_dist),
    }
    if args.infer:
        if args.n is None:
            raise MissingParameter("--n")
        payload["inference"] = infer_policy_value(
            mdp, spec, pi, report.value, args.n, level=args.level, settings=settings
        ).to_dict()
    _emit(payload, args.out)


def cmd_sample(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    mdp = _load(args, settings, seed)
    if not (args.offline or args.dataset is not None):
        _emit(generative_estimate(mdp, args.n, seed).to_dict(), args.out)
        return

    if args.dataset is not None:
        dataset = read_dataset_csv(args.dataset, mdp.num_states, mdp.num_actions)
    else:
        nu = uniform_behavior(mdp.num_states, mdp.num_actions)
        dataset = offline_sample(mdp, nu, args.n, seed)
        if not args.truncate:
            write_dataset_csv(dataset, args.out if args.out is not None else sys.stdout)
            logger.info("offline_dataset_written", path=str(args.out), size=dataset.size)
            return
    model = truncate_uniform(dataset) if args.truncate else offline_estimate(dataset)
    _emit(model.to_dict(), args.out)


def _experiment_config(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    return build_config(
        settings,
        random_size=args.random,
        mdp_path=args.mdp,
        gamma=args.gamma,
        kinds=args.kind,
        rectangularity=args.rect,
        rhos=args.rho,
        n_list=args.n,
        reps=args.reps,
        level=args.level,
        tol=args.tol,
        T=args.iters,
        seed=args.seed,
        workers=args.workers,
        out_path=args.out,
    )


def cmd_coverage(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    config = _experiment_config(args, settings)
    rows = coverage_experiment(config)
    write_coverage_csv(rows, config.out_path if config.out_path is not None else sys.stdout)


def cmd_convergence(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    config = _experiment_config(args, settings)
    frame = convergence_experiment(config)
    frame.to_csv(config.out_path if config.out_path is not None else sys.stdout, index=False)


def cmd_bounds(args: argparse.Namespace, settings: Settings, seed: int) -> None:
    query = BoundQuery(
        kind=args.kind,
        rectangularity=args.rect,
        data_mode=DataMode.OFFLINE if args.offline else DataMode.GENERATIVE,
        num_states=args.num_states,
        num_actions=args.num_actions,
        gamma=args.gamma,
        rho=args.rho,
        n=args.n,
        delta=args.delta,
        p_underbar=args.p_underbar,
        nu_min=args.nu_min,
    )
    payload: dict[str, Any] = {
        "query": query.to_dict(),
        "upper_bound_eps": upper_bound_eps(query),
        "gap_bound": gap_bound(
            query.kind, query.rectangularity, query.rho, query.gamma, query.num_actions
        ),
        "lower_bound_samples": None,
    }
    if query.data_mode == DataMode.OFFLINE and query.nu_min is not None:
        payload["min_offline_samples"] = min_offline_samples(
            query.num_states, query.num_actions, query.nu_min, query.delta
        )
    if args.eps is not None and query.kind != Divergence.KL:
        payload["lower_bound_samples"] = {
            "value": lower_bound_samples(
                query.kind, query.num_states, query.num_actions, query.gamma, query.rho, args.eps
            ),
            "order_only": True,
        }
    _emit(payload, args.out)


COMMANDS = {
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "sample": cmd_sample,
    "coverage": cmd_coverage,
    "convergence": cmd_convergence,
    "bounds": cmd_bounds,
}


# =============================================================================
# Entry points
# =============================================================================


def cli_main(argv: list[str] | None = None, settings: Settings | None = None) -> int:
    """
    Run one command and return its exit code.

    Args:
        argv: Arguments without the program name (defaults to sys.argv[1:])
        settings: Settings override, mainly for tests

    Returns:
        0 on success, 2 on usage or validation errors, 3 on numerical failures
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    settings = settings or get_settings()
    configure_logging(
        log_level=settings.log_level,
        log_format=settings.log_format,
        service_name="robustmdp",
        stream=settings.log_stream,
    )
    set_run_id(uuid4().hex[:12])
    # ROBUSTMDP_SEED wins over --seed
    seed = settings.seed if settings.seed is not None else getattr(args, "seed", 0)

    with bind_run(command=args.command):
        logger.info("command_started", seed=seed)
        try:
            COMMANDS[args.command](args, settings, seed)
        except RobustMdpError as e:
            logger.error("command_failed", error=type(e).__name__, message=e.message)
            sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True, default=_json_default) + "\n")
            return e.exit_code
    logger.info("command_finished")
    return 0


def run() -> None:
    """Console-script entry point."""
    sys.exit(cli_main())


if __name__ == "__main__":
    run()
