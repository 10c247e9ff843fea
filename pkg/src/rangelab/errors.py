class RangeLabError(Exception):
    """Base class for errors raised by rangelab."""


class ConfigError(RangeLabError, ValueError):
    """A configuration or argument failed validation."""


class DomainError(RangeLabError, ValueError):
    """A point or parameter lies outside the domain it was required to be in."""


class CapExceeded(RangeLabError, RuntimeError):
    """A walk ran past its step cap without leaving the domain."""


class SizeExceeded(RangeLabError, ValueError):
    """An exact solve was requested on a lattice larger than the configured cap."""


class ConvergenceError(RangeLabError, RuntimeError):
    """An iterative solve did not reach its residual target."""


class IncompatibleSamples(RangeLabError, ValueError):
    """Samples from different configurations were merged."""


class PreconditionError(RangeLabError, ValueError):
    """An operation was called on input it is not defined for."""
