"""Exception types raised across the package."""


class DomainError(ValueError):
    """A quantity is undefined for the given argument (e.g. kappa at the root)."""


class ParameterError(ValueError):
    """Kernel or run parameters violate a required inequality."""


class SingularityError(ValueError):
    """Evaluation point sits on the support of the measure with no exclusion."""


class ResourceError(RuntimeError):
    """Requested depth exceeds the configured cap."""


class InexactError(RuntimeError):
    """An exact-only routine was forced onto a floating-point path."""
