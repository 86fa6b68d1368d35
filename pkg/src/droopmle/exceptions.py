"""Exception types raised across the package."""


class DroopmleError(Exception):
    """Base class for package-specific errors."""


class InfeasibleOperatingPoint(DroopmleError):
    """The constant-power demand cannot be supported at any bus voltage.

    Raised when the current-balance discriminant is negative beyond
    rounding tolerance, or when the aggregate admittance is non-positive.
    """


class InvalidPlanError(DroopmleError):
    """A training plan violates a structural constraint (slot count,
    amplitude bound, or dimension mismatch against the grid config)."""


class InsufficientExcitationError(DroopmleError):
    """The regression matrix is numerically rank-deficient, so the
    least-squares estimate is not unique."""

    def __init__(self, message, rank=None, required=None, rcond=None):
        super().__init__(message)
        self.rank = rank
        self.required = required
        self.rcond = rcond


class SingularSensitivityError(DroopmleError):
    """The power-balance voltage derivative vanished at an operating
    point, so implicit-function sensitivities are undefined there."""


class SingularInformationError(DroopmleError):
    """The Fisher information matrix is singular; error bounds do not
    exist in one or more parameter directions."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction
