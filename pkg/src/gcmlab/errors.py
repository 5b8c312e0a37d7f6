"""Exception types raised by gcmlab."""


class GcmError(Exception):
    """Base class for all gcmlab errors."""


class PoleAtPoint(GcmError, ZeroDivisionError):
    """A fractional-linear map was evaluated at (numerically) its pole."""


class ParamOutOfRange(GcmError, ValueError):
    """A site parameter lies outside the range where the map is defined."""


class NoRootInRange(GcmError, RuntimeError):
    """Bisection for the self-consistent parameter found no sign change."""


class FieldOutOfDomain(GcmError, ValueError):
    """A (noisy) field value left the feedback domain [-1/2, 1/2]."""


class ShapeMismatch(GcmError, ValueError):
    """Grid objects with incompatible resolutions were combined."""


class NoConvergence(GcmError, RuntimeError):
    """An iterative solver did not converge within its step budget."""


class ConfigError(GcmError, ValueError):
    """An experiment configuration is malformed or out of range."""
