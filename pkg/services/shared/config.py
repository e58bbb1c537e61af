"""
Configuration management for the robust-MDP toolkit.

Uses pydantic-settings for environment variable loading with validation.
All variables are read with the ``ROBUSTMDP_`` prefix (e.g. ``ROBUSTMDP_SEED``).
"""

from functools import lru_cache
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="ROBUSTMDP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # =========================================================================
    # Environment
    # =========================================================================
    environment: Literal["development", "staging", "production"] = "development"
    debug: bool = False

    # =========================================================================
    # Logging
    # =========================================================================
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    log_format: Literal["json", "text"] = "text"
    log_stream: Literal["stdout", "stderr"] = Field(
        default="stderr",
        description="Stream for log records; stdout is reserved for command output",
    )

    # =========================================================================
    # Reproducibility
    # =========================================================================
    seed: int | None = Field(
        default=None,
        ge=0,
        description="Overrides the --seed flag of every subcommand when set",
    )
    workers: int = Field(default=1, ge=1, le=64, description="Replication worker pool size")

    # =========================================================================
    # Solvers
    # =========================================================================
    solver_tol: float = Field(default=1e-8, gt=0.0, lt=1.0)
    solver_max_iters: int = Field(default=10_000, ge=1)
    truth_tol: float = Field(
        default=1e-10,
        gt=0.0,
        lt=1.0,
        description="Tolerance of the ground-truth solve used by experiments",
    )

    # =========================================================================
    # Inference
    # =========================================================================
    ordering_gap_tol: float = Field(default=1e-9, ge=0.0)
    action_gap_warn: float = Field(default=1e-6, ge=0.0)
    singular_condition: float = Field(default=1e12, gt=1.0)
    confidence_level: float = Field(default=0.975, gt=0.5, lt=1.0)

    # =========================================================================
    # Experiments
    # =========================================================================
    experiment_reps: int = Field(default=1000, ge=1)
    experiment_n_grid: list[int] = Field(default_factory=lambda: [10, 50, 100, 500, 1000])
    experiment_gamma: float = Field(default=0.9, gt=0.0, lt=1.0)
    sa_num_states: int = Field(default=20, ge=1)
    sa_num_actions: int = Field(default=10, ge=1)
    s_num_states: int = Field(default=5, ge=1)
    s_num_actions: int = Field(default=5, ge=1)

    # =========================================================================
    # Validators
    # =========================================================================
    @field_validator("experiment_n_grid")
    @classmethod
    def validate_n_grid(cls, v: list[int]) -> list[int]:
        """Ensure the sample-size grid is non-empty, positive and ascending."""
        if not v:
            raise ValueError("Sample-size grid must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("Sample sizes must be positive")
        if any(b <= a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("Sample sizes must be strictly ascending")
        return v

    @property
    def is_development(self) -> bool:
        """Check if running in development mode."""
        return self.environment == "development"

    @property
    def is_parallel(self) -> bool:
        """Check if replications should be spread over a worker pool."""
        return self.workers > 1


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
