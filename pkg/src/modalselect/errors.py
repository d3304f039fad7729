"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(ValueError):
    """Inputs were built for different problem instances."""


class StateError(RuntimeError):
    """An object was used before it was ready."""


class ExhaustedHorizonError(RuntimeError):
    """A decision was requested after the last observation."""


class UnsupportedError(ValueError):
    """The operation is not defined for the given turn budget."""


class SizeError(ValueError):
    """Input too large for an exhaustive routine."""
