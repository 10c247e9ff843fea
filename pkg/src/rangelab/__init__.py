"""Range, multiple range and exit time of lattice walks stopped at exit from N D."""

__version__ = "0.1.0"

from .domain import DomainSpec, LatticeDomain  # noqa: E402
from .errors import (CapExceeded, ConfigError, ConvergenceError, DomainError,  # noqa: E402
                     IncompatibleSamples, PreconditionError, RangeLabError, SizeExceeded)
from .walks import WalkLaw  # noqa: E402

__all__ = ["DomainSpec", "LatticeDomain", "WalkLaw", "RangeLabError", "ConfigError", "DomainError",
           "CapExceeded", "SizeExceeded", "ConvergenceError", "IncompatibleSamples",
           "PreconditionError", "__version__"]
