"""
Error hierarchy shared by every service.

Validation errors describe bad inputs and map to exit code 2; numerical
errors describe solver or inference failures and map to exit code 3.
"""

from typing import Any


class RobustMdpError(Exception):
    """Base exception carrying a machine-readable details dict."""

    exit_code = 1

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, "details": self.details}


# =============================================================================
# Validation errors
# =============================================================================


class ValidationError(RobustMdpError):
    """Raised when an input violates a documented invariant."""

    exit_code = 2


class RowNotStochastic(ValidationError):
    def __init__(self, state: int, action: int, total: float):
        super().__init__(
            f"transitions[{state}][{action}] is not a probability vector (sum={total!r})",
            {"state": state, "action": action, "sum": total},
        )


class RewardOutOfRange(ValidationError):
    def __init__(self, state: int, action: int, reward: float):
        super().__init__(
            f"rewards[{state}][{action}]={reward!r} lies outside [0, 1]",
            {"state": state, "action": action, "reward": reward},
        )


class BadGamma(ValidationError):
    def __init__(self, gamma: float):
        super().__init__(f"gamma={gamma!r} must lie in [0, 1)", {"gamma": gamma})


class BadInitialDist(ValidationError):
    def __init__(self, reason: str, index: int | None = None):
        super().__init__(f"initial_dist is invalid: {reason}", {"index": index})


class BadPolicy(ValidationError):
    def __init__(self, state: int, reason: str):
        super().__init__(f"policy row {state} is invalid: {reason}", {"state": state})


class InvalidAmbiguitySpec(ValidationError):
    pass


class UnsupportedCombination(ValidationError):
    def __init__(self, kind: str, rectangularity: str):
        super().__init__(
            f"asymptotic inference is not available for {kind} x {rectangularity}",
            {"kind": kind, "rectangularity": rectangularity},
        )


class UnsupportedKind(ValidationError):
    def __init__(self, kind: str, operation: str):
        super().__init__(f"{operation} does not support kind {kind}", {"kind": kind})


class MissingParameter(ValidationError):
    def __init__(self, name: str):
        super().__init__(f"missing required parameter: {name}", {"name": name})


class BadLevel(ValidationError):
    def __init__(self, level: float):
        super().__init__(f"level={level!r} must lie in (0.5, 1)", {"level": level})


class UnvisitedCell(ValidationError):
    def __init__(self, state: int, action: int):
        super().__init__(
            f"cell ({state}, {action}) has no samples",
            {"state": state, "action": action},
        )


class InvalidExperimentConfig(ValidationError):
    pass


# =============================================================================
# Numerical errors
# =============================================================================


class NumericalError(RobustMdpError):
    """Raised when a numerical routine cannot deliver a trustworthy result."""

    exit_code = 3


class NumericalFailure(NumericalError):
    def __init__(self, message: str, residual: float):
        super().__init__(message, {"residual": residual})


class MaxItersExceeded(NumericalError):
    def __init__(self, iterations: int, residual: float, partial: Any = None):
        super().__init__(
            f"no convergence after {iterations} iterations (residual={residual:.3e})",
            {"iterations": iterations, "residual": residual},
        )
        self.partial = partial


class NonFiniteQ(NumericalError):
    def __init__(self, state: int):
        super().__init__(f"Q row {state} contains non-finite entries", {"state": state})


class DegenerateOrdering(NumericalError):
    def __init__(self, min_gap: float):
        super().__init__(
            f"value function has tied states (min gap {min_gap:.3e})",
            {"min_gap": min_gap},
        )


class SingularDerivative(NumericalError):
    def __init__(self, condition_estimate: float):
        super().__init__(
            f"derivative matrix is numerically singular (cond={condition_estimate:.3e})",
            {"condition_estimate": condition_estimate},
        )


class ConvergenceWarning(UserWarning):
    """Issued when an iterative inner solver stops above its tolerance."""
