"""
Monte-Carlo experiments.

The convergence experiment tracks ||V_t - V_r*|| along robust solves on
estimated kernels; the coverage experiment measures how often plug-in
confidence intervals contain the true optimal robust value. Replications
are independent given their keyed streams and may run in a process pool;
results are consumed in replication order.
"""

from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, TextIO, TypeVar

import numpy as np
import pandas as pd

from services.estimation.src.inference import infer_optimal_value
from services.estimation.src.sampling import generative_estimate
from services.experiments.src.config import ExperimentConfig
from services.experiments.src.environments import load_environment
from services.planning.src.ambiguity import AmbiguitySpec, Divergence
from services.planning.src.solvers import robust_solve
from services.shared.exceptions import RobustMdpError, UnsupportedCombination
from services.shared.logging import bind_run, get_logger
from services.shared.models.mdp import TabularMdp

logger = get_logger(__name__)

CONVERGENCE_COLUMNS = ["kind", "rect", "rho", "n", "iter", "mean_err", "se_err"]

TaskT = TypeVar("TaskT")
ResultT = TypeVar("ResultT")


@dataclass(frozen=True)
class ReplicationFailure:
    """A replication dropped because of a solver or inference error."""

    replication: int
    error: str
    message: str


@dataclass(frozen=True)
class CoverageRow:
    """Coverage and CI length of one (kind, rect, rho, n) cell."""

    kind: str
    rect: str
    rho: float
    n: int
    coverage_pct: float
    coverage_se_pct: float
    mean_ci_length: float
    ci_length_se: float
    excluded: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def run_replications(
    fn: Callable[[TaskT], ResultT], tasks: Iterable[TaskT], workers: int = 1
) -> list[ResultT]:
    """Map fn over tasks, in a process pool when workers > 1, preserving task order."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _standard_error(values: np.ndarray, axis: int = 0) -> np.ndarray:
    count = values.shape[axis]
    if count < 2:
        return np.zeros(np.delete(values.shape, axis))
    return values.std(axis=axis, ddof=1) / np.sqrt(count)


def _ground_truth(mdp: TabularMdp, spec: AmbiguitySpec, config: ExperimentConfig) -> np.ndarray:
    report = robust_solve(mdp, spec, T=config.T, tol=config.truth_tol)
    logger.info("ground_truth_solved", iterations=report.iterations, converged=report.converged)
    return report.value.values


# =============================================================================
# Convergence
# =============================================================================


@dataclass(frozen=True)
class _ConvergenceTask:
    mdp: TabularMdp
    spec: AmbiguitySpec
    n: int
    seed: int
    replication: int
    v_star: np.ndarray
    T: int
    tol: float


def _convergence_replication(task: _ConvergenceTask) -> np.ndarray | ReplicationFailure:
    try:
        estimate = generative_estimate(task.mdp, task.n, task.seed, task.replication)
        report = robust_solve(
            estimate.to_mdp(task.mdp), task.spec, T=task.T, tol=task.tol, track_values=True
        )
    except RobustMdpError as e:
        return ReplicationFailure(task.replication, type(e).__name__, e.message)
    assert report.value_history is not None
    return np.array([np.max(np.abs(v - task.v_star)) for v in report.value_history])


def _pad(histories: list[np.ndarray]) -> np.ndarray:
    """Stack error curves, extending early-converged runs with their last value."""
    length = max(h.size for h in histories)
    return np.array([np.pad(h, (0, length - h.size), mode="edge") for h in histories])


def convergence_experiment(
    config: ExperimentConfig,
    mdp: TabularMdp | None = None,
) -> pd.DataFrame:
    """
    Mean sup-norm error to V_r* per sweep, for every (kind, rho, n).

    Iteration 0 is V_0 = 0. Failed replications are logged and left out of
    the averages.
    """
    mdp = mdp or load_environment(config)
    rows: list[dict[str, Any]] = []
    for spec in config.specs():
        with bind_run(kind=spec.kind.value, rect=spec.rectangularity.value, rho=spec.rho):
            v_star = _ground_truth(mdp, spec, config)
            for n in config.n_list:
                tasks = [
                    _ConvergenceTask(mdp, spec, n, config.seed, rep, v_star, config.T, config.tol)
                    for rep in range(config.reps)
                ]
                results = run_replications(_convergence_replication, tasks, config.workers)
                histories = [r for r in results if isinstance(r, np.ndarray)]
                _log_failures(results, n)
                if not histories:
                    continue
                errors = _pad(histories)
                means = errors.mean(axis=0)
                ses = _standard_error(errors)
                for t in range(errors.shape[1]):
                    rows.append(
                        {
                            "kind": spec.kind.value,
                            "rect": spec.rectangularity.value,
                            "rho": spec.rho,
                            "n": n,
                            "iter": t,
                            "mean_err": float(means[t]),
                            "se_err": float(ses[t]),
                        }
                    )
                logger.info("convergence_cell_done", n=n, plateau=float(means[-1]))

    frame = pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)
    return frame.sort_values(["kind", "rect", "rho", "n", "iter"], kind="stable").reset_index(
        drop=True
    )


# =============================================================================
# Coverage
# =============================================================================


@dataclass(frozen=True)
class _CoverageTask:
    mdp: TabularMdp
    spec: AmbiguitySpec
    n: int
    seed: int
    replication: int
    truth: float
    level: float
    T: int
    tol: float


def _coverage_replication(task: _CoverageTask) -> tuple[bool, float] | ReplicationFailure:
    try:
        estimate = generative_estimate(task.mdp, task.n, task.seed, task.replication)
        report = infer_optimal_value(
            estimate.to_mdp(task.mdp), task.spec, task.n, level=task.level, tol=task.tol, T=task.T
        )
    except RobustMdpError as e:
        return ReplicationFailure(task.replication, type(e).__name__, e.message)
    return report.covers(task.truth), report.ci_length


def _log_failures(results: list[Any], n: int) -> int:
    failures = [r for r in results if isinstance(r, ReplicationFailure)]
    for failure in failures:
        logger.warning(
            "replication_excluded",
            n=n,
            replication=failure.replication,
            error=failure.error,
            message=failure.message,
        )
    return len(failures)


def coverage_experiment(
    config: ExperimentConfig,
    mdp: TabularMdp | None = None,
) -> list[CoverageRow]:
    """
    Empirical coverage and mean length of plug-in CIs for V_r*(mu).

    Raises:
        UnsupportedCombination: L1 with an s-rectangular set
    """
    specs = config.specs()
    for spec in specs:
        if spec.kind == Divergence.L1 and not spec.is_sa:
            raise UnsupportedCombination(spec.kind.value, spec.rectangularity.value)

    mdp = mdp or load_environment(config)
    rows: list[CoverageRow] = []
    for spec in specs:
        with bind_run(kind=spec.kind.value, rect=spec.rectangularity.value, rho=spec.rho):
            truth = float(np.dot(mdp.initial_dist, _ground_truth(mdp, spec, config)))
            for n in config.n_list:
                tasks = [
                    _CoverageTask(
                        mdp, spec, n, config.seed, rep, truth, config.level, config.T, config.tol
                    )
                    for rep in range(config.reps)
                ]
                results = run_replications(_coverage_replication, tasks, config.workers)
                excluded = _log_failures(results, n)
                kept = [r for r in results if not isinstance(r, ReplicationFailure)]
                rows.append(_coverage_row(spec, n, kept, excluded))
                logger.info("coverage_cell_done", n=n, coverage_pct=rows[-1].coverage_pct)

    return sorted(rows, key=lambda r: (r.kind, r.rect, r.rho, r.n))


def _coverage_row(
    spec: AmbiguitySpec, n: int, kept: list[tuple[bool, float]], excluded: int
) -> CoverageRow:
    if not kept:
        nan = float("nan")
        return CoverageRow(
            spec.kind.value, spec.rectangularity.value, spec.rho, n, nan, nan, nan, nan, excluded
        )
    covered = np.array([c for c, _ in kept], dtype=float)
    lengths = np.array([length for _, length in kept])
    p_hat = float(covered.mean())
    return CoverageRow(
        kind=spec.kind.value,
        rect=spec.rectangularity.value,
        rho=spec.rho,
        n=n,
        coverage_pct=100.0 * p_hat,
        coverage_se_pct=100.0 * float(np.sqrt(p_hat * (1.0 - p_hat) / len(kept))),
        mean_ci_length=float(lengths.mean()),
        ci_length_se=float(_standard_error(lengths)),
        excluded=excluded,
    )


def write_coverage_csv(rows: list[CoverageRow], path: str | Path | TextIO) -> None:
    pd.DataFrame([r.to_dict() for r in rows], columns=list(CoverageRow.__dataclass_fields__)).to_csv(
        path, index=False
    )
