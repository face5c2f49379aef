"""Exception types shared across the package."""


class CccError(Exception):
    """Base class for errors raised by ccclab."""


class NormalizationError(CccError, ValueError):
    """A state or distribution violates its normalization invariant."""


class ZeroProbabilityError(CccError, ValueError):
    """Renormalization or conditioning was requested on a (numerically) impossible event."""


class ImpossibleConstraintError(ZeroProbabilityError):
    """A boundary constraint cannot be satisfied by the model it is imposed on."""


class PreconditionError(CccError, ValueError):
    """Arguments violate an operation's documented preconditions."""
