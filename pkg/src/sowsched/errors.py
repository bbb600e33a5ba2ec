"""Exception and warning classes shared across the package."""


class SowschedError(Exception):
    """Base class for errors raised by this package."""


class IndexOutOfMenu(SowschedError, IndexError):
    """A launch plan or lookup addressed a start outside the announced menu window."""


class CapacityViolation(SowschedError, AssertionError):
    """Committed load exceeded capacity after the eviction loop."""


class RejectedOverride(SowschedError, ValueError):
    """A forced allocation does not cover its menu price."""


class SizeExceeded(SowschedError, RuntimeError):
    """An exact computation would exceed its configured enumeration cap."""


class ConstructionFailed(SowschedError, RuntimeError):
    """The bundle construction could not place an outcome."""


class InvalidPrior(SowschedError, ValueError):
    """A prior over statements of work produced an invalid statement."""


class ConfigError(SowschedError, ValueError):
    """An experiment configuration is inconsistent."""


class PreconditionWarning(UserWarning):
    """A capacity precondition assumed by the analysis does not hold."""
