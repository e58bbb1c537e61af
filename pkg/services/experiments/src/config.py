"""
Experiment configuration.

Defaults come from the shared settings; CLI flags override them through
``build_config``.
"""

from itertools import product
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from services.planning.src.ambiguity import AmbiguitySpec, Divergence, Rectangularity
from services.shared.config import Settings, get_settings
from services.shared.exceptions import InvalidExperimentConfig, RobustMdpError

# Default kinds for s-rectangular runs; L1 has no s-rectangular inference
S_RECT_KINDS = [Divergence.CHI2, Divergence.KL]


class ExperimentConfig(BaseModel):
    """Inputs of the convergence and coverage experiments."""

    model_config = ConfigDict(frozen=True)

    # MDP source: a random instance of the given size, or a JSON file
    random_size: tuple[int, int] | None = None
    mdp_path: Path | None = None
    gamma: float = Field(default=0.9, gt=0.0, lt=1.0)

    kinds: list[Divergence] = Field(default_factory=lambda: list(Divergence))
    rectangularity: Rectangularity = Rectangularity.SA
    rhos: list[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])

    n_list: list[int] = Field(default_factory=lambda: [10, 50, 100, 500, 1000])
    reps: int = Field(default=1000, ge=1)
    level: float = Field(default=0.975, gt=0.5, lt=1.0)
    tol: float = Field(default=1e-8, gt=0.0)
    truth_tol: float = Field(default=1e-10, gt=0.0)
    T: int = Field(default=10_000, ge=1, description="Maximum sweeps per solve")
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1, le=64)
    out_path: Path | None = None

    @field_validator("n_list")
    @classmethod
    def validate_n_list(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("n_list must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("sample sizes must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_list must be strictly ascending")
        return v

    @field_validator("kinds", "rhos")
    @classmethod
    def validate_non_empty(cls, v: list[Any]) -> list[Any]:
        if not v:
            raise ValueError("at least one value is required")
        return v

    @model_validator(mode="after")
    def validate_source(self) -> "ExperimentConfig":
        if (self.random_size is None) == (self.mdp_path is None):
            raise ValueError("exactly one of random_size and mdp_path must be given")
        if self.random_size is not None and min(self.random_size) < 1:
            raise ValueError("random MDP sizes must be positive")
        return self

    def specs(self) -> list[AmbiguitySpec]:
        """Every (kind, rho) combination at the configured rectangularity."""
        return [
            AmbiguitySpec(kind, rho, self.rectangularity)
            for kind, rho in product(self.kinds, self.rhos)
        ]


def build_config(settings: Settings | None = None, **overrides: Any) -> ExperimentConfig:
    """
    Experiment config from settings defaults plus explicit overrides.

    Raises:
        InvalidExperimentConfig: a field or an ambiguity set is invalid
    """
    settings = settings or get_settings()
    try:
        rect = Rectangularity(overrides.get("rectangularity") or Rectangularity.SA)
    except ValueError as e:
        raise InvalidExperimentConfig(str(e), {"field": "rectangularity"})
    size = (
        (settings.sa_num_states, settings.sa_num_actions)
        if rect == Rectangularity.SA
        else (settings.s_num_states, settings.s_num_actions)
    )
    values: dict[str, Any] = {
        "gamma": settings.experiment_gamma,
        "n_list": settings.experiment_n_grid,
        "reps": settings.experiment_reps,
        "level": settings.confidence_level,
        "tol": settings.solver_tol,
        "truth_tol": settings.truth_tol,
        "T": settings.solver_max_iters,
        "workers": settings.workers,
    }
    values.update({k: v for k, v in overrides.items() if v is not None})
    if rect == Rectangularity.S:
        values.setdefault("kinds", list(S_RECT_KINDS))
    if values.get("mdp_path") is None:
        values.setdefault("random_size", size)
    # ROBUSTMDP_SEED wins over --seed
    if settings.seed is not None:
        values["seed"] = settings.seed

    try:
        config = ExperimentConfig(**values)
        config.specs()
    except PydanticValidationError as e:
        raise InvalidExperimentConfig(str(e), {"errors": e.errors(include_url=False)})
    except RobustMdpError as e:
        raise InvalidExperimentConfig(e.message, e.details)
    return config
