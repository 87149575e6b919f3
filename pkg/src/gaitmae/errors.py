"""Exception taxonomy, aligned with the CLI exit-code contract.

UsageError   -> exit 1 (bad invocation, missing/contradictory arguments)
DataError    -> exit 2 (unreadable/inconsistent input data)
NumericError -> exit 3 (numerical failure: divergence, degenerate geometry
                 that cannot be projected back to a valid state)
"""


class GaitError(Exception):
    """Base class for all package-raised errors."""

    exit_code = 3


class UsageError(GaitError):
    exit_code = 1


class DataError(GaitError):
    exit_code = 2


class NumericError(GaitError):
    exit_code = 3


class UnrecoverableLandmarkError(DataError):
    """A landmark has no observation in an entire trial."""

    def __init__(self, landmark: str):
        super().__init__(f"landmark {landmark!r} never observed in trial")
        self.landmark = landmark


class DegenerateFrameError(NumericError):
    """Frame geometry does not define the requested coordinate frame."""
