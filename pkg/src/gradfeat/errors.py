"""Exception types shared across the package.

The CLI maps these onto exit codes: invalid input -> 2, numeric failure -> 3.
"""


class InvalidInputError(ValueError):
    """Malformed or out-of-contract input (bad shapes, non-finite entries, bad indices)."""


class NumericError(RuntimeError):
    """A numerical routine failed in a way that retrying cannot fix."""


class RankDeficiencyError(NumericError):
    """A matrix that must be full rank for the operation is numerically rank deficient."""


class IllConditionedError(NumericError):
    """Too many samples produced degenerate local systems for the result to be trusted."""
