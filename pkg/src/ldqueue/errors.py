"""Exception types shared across the package."""


class LdqueueError(Exception):
    """Base class for all package-specific errors."""


class DomainError(LdqueueError):
    """An argument lies outside the mathematical domain of an operation
    (e.g. a cumulant evaluated at or beyond its divergence point)."""


class BracketError(LdqueueError):
    """A root could not be bracketed within the admissible domain."""


class PartitionError(LdqueueError):
    """A rectangular partition is malformed or incompatible with a grid."""


class GridError(LdqueueError):
    """A requested evaluation point does not lie on the built grid."""


class RangeError(LdqueueError):
    """A shifted lookup leaves the region over which a surface was built."""


class InfeasibleError(LdqueueError):
    """The rare-event condition is violated: the target level is reached
    by the typical path, so the variational problem has no positive-cost
    solution."""


class InsufficientHitsError(LdqueueError):
    """A Monte Carlo estimate has too few event hits to be reported."""


class ConfigError(LdqueueError):
    """A run configuration failed validation."""
