"""
Exception hierarchy for the conservation-law discovery pipeline.

Library code raises these; orchestration layers (pipeline graph, scans, CLI
executor) catch PoincareError and turn it into a failed result entry.
"""
from typing import Optional, Tuple


class PoincareError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PoincareError):
    """Invalid or unreadable run configuration."""

    def __init__(self, message: str, keys: Optional[list] = None):
        super().__init__(message)
        self.keys = keys or []


class IntegrationSingularityError(PoincareError):
    """Equations of motion hit a collision or produced a non-finite derivative."""

    def __init__(
        self,
        message: str,
        step: Optional[int] = None,
        pair: Optional[Tuple[int, int]] = None,
        radius: Optional[float] = None,
    ):
        self.step = step
        self.pair = pair
        self.radius = radius
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)

    def at_step(self, step: int) -> "IntegrationSingularityError":
        """Copy of this error annotated with the integration step index."""
        return IntegrationSingularityError(
            str(self), step=step, pair=self.pair, radius=self.radius
        )


class InsufficientDataError(PoincareError):
    """Fewer samples than the estimator needs."""


class DimensionMismatchError(PoincareError):
    """A vector does not have the dimension the model expects."""


class TrainingDivergenceError(PoincareError):
    """The training loss became NaN or infinite."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class RunawayChainError(PoincareError):
    """A walk-pull chain left the whitened data region."""

    def __init__(self, step: int, norm: float):
        super().__init__(f"Walk-pull chain diverged at step {step}: |x| = {norm:.3g}")
        self.step = step
        self.norm = norm


class MixedSystemError(PoincareError):
    """Trajectories passed together come from different systems."""


class IndistinguishableTargetsError(PoincareError):
    """Gauge-fixing trajectories are identical, so their targets carry no information."""


class NoMaximumFoundError(PoincareError):
    """n_eff is flat over the bracket; there is no interior maximum to refine."""


class FormulaError(PoincareError):
    """A candidate formula failed to parse or references unknown symbols."""
