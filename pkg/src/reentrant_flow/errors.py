"""Exception types raised by the solver stack."""


class FlowError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveVelocity(FlowError):
    pass


class DerivativeMismatch(FlowError):
    """A supplied partial derivative disagrees with finite differences of lambda."""


class MassCapExceeded(FlowError):
    """Total mass left the rectangle on which the velocity bounds were computed."""


class OutOfDomain(FlowError):
    pass


class IntegratorStall(FlowError):
    pass


class NoConvergence(FlowError):
    """Picard iteration on a slab failed to contract.

    ``slab`` is the zero-based slab index, ``residuals`` the sup-norm history.
    """

    def __init__(self, message, slab=None, residuals=None):
        super().__init__(message)
        self.slab = slab
        self.residuals = list(residuals or [])


class CFLViolation(FlowError):
    pass


class UnsupportedKind(FlowError):
    pass


class ConfigError(FlowError):
    """Invalid scenario configuration. ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
