"""Exception types shared across the package.

Every failure mode that callers are expected to branch on gets its own class;
plain ValueError is reserved for malformed arguments caught at construction.
"""

from __future__ import annotations

__all__ = [
    "MechidError",
    "DimensionMismatchError",
    "DivergedTrajectoryError",
    "SingularMapError",
    "OffManifoldError",
    "BudgetExceededError",
    "ToleranceAmbiguityError",
    "DataDeficiencyError",
    "IllConditionedError",
    "NonFiniteSampleError",
    "ConfigError",
    "ReplayIncompatibilityError",
]


class MechidError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(MechidError):
    """Operands with incompatible latent or observation dimensions."""


class DivergedTrajectoryError(MechidError):
    """A simulated state left the finite-norm guard region.

    Carries the failing step index so callers can truncate or report.
    """

    def __init__(self, step: int, norm: float, bound: float):
        self.step = step
        self.norm = norm
        self.bound = bound
        super().__init__(
            f"trajectory diverged at step {step}: |z| = {norm:.3e} exceeds guard {bound:.3e}"
        )


class SingularMapError(MechidError):
    """A matrix that must be invertible is singular to working tolerance."""


class OffManifoldError(MechidError):
    """An encoder was evaluated at a point off the decoder's image."""

    def __init__(self, point_index: int, deviation: float, tol: float):
        self.point_index = point_index
        self.deviation = deviation
        self.tol = tol
        super().__init__(
            f"encoder undefined at grid point {point_index}: "
            f"reconstruction deviation {deviation:.3e} exceeds {tol:.3e}"
        )


class BudgetExceededError(MechidError):
    """Assignment enumeration would exceed the configured budget."""

    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"{required} candidate assignments exceed the budget of {budget}; "
            f"raise the budget or shrink the hypothesis class"
        )


class ToleranceAmbiguityError(MechidError):
    """A map matched multiple targets where theory allows at most one."""


class DataDeficiencyError(MechidError):
    """Observation pairs do not span enough directions to pose the problem."""

    def __init__(self, rank: int, needed: int):
        self.rank = rank
        self.needed = needed
        super().__init__(
            f"observed states span only {rank} directions, {needed} required; "
            f"supply more (or more varied) pairs"
        )


class IllConditionedError(MechidError):
    """Finite-difference estimates at two step sizes disagree."""


class NonFiniteSampleError(MechidError):
    """A sampler or pushforward produced non-finite values."""

    def __init__(self, context: str):
        super().__init__(f"non-finite values produced at {context}")


class ConfigError(MechidError):
    """Malformed experiment configuration; message names the offending field."""

    def __init__(self, field: str, problem: str):
        self.field = field
        self.problem = problem
        super().__init__(f"config field '{field}': {problem}")


class ReplayIncompatibilityError(MechidError):
    """Manifest was produced by an incompatible artifact version."""
