"""Exception types shared across the package."""


class PathsyncError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(PathsyncError):
    """Vector or matrix dimensions do not match the model dimension."""


class SingularInertiaError(PathsyncError):
    """Inertia matrix is numerically singular (condition estimate > 1e12)."""


class DegeneratePathError(PathsyncError):
    """Reduced inertia M_r(s) fell at or below its positive lower bound."""


class PathDomainError(PathsyncError):
    """Path parameter outside the domain, or a derivative was requested
    at the boundary of a clamped domain."""


class NumericFaultError(PathsyncError):
    """A non-finite value appeared mid-computation; the message names the
    offending term."""


class TraceModeError(PathsyncError):
    """A trace produced by the wrong controller mode was fed to a check."""


class ConfigError(PathsyncError):
    """Configuration text failed to parse or validate.

    Carries the full list of problems, not just the first one.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
