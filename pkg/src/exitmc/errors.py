"""Exception types raised across the toolkit."""


class InputError(ValueError):
    """Invalid arguments: dimension mismatch, point outside the domain, bad parameter."""


class DegenerateDomainError(InputError):
    """Rejection sampling cannot find the domain inside its bounding box."""


class UnsupportedSchemeError(InputError):
    """The requested quantity cannot be computed with the chosen path scheme."""


class SingularKernelError(InputError):
    """The Newtonian kernel was evaluated at coincident points."""


class ConfigurationError(InputError):
    """A field or estimator was configured in a way that cannot be evaluated."""


class GeometryTooThinError(InputError):
    """No node has a full finite-difference stencil inside the domain."""


class UnboundedIntegrandError(RuntimeError):
    """An integrand exceeded its configured cap somewhere along a path."""

    def __init__(self, point, value, cap):
        self.point = tuple(float(c) for c in point)
        self.value = float(value)
        self.cap = float(cap)
        super().__init__(
            f"|g(x)| = {self.value:.6g} exceeds cap {self.cap:.6g} at x = {self.point}"
        )


class ConsistencyError(RuntimeError):
    """An internal analytic identity was violated."""
