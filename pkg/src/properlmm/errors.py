"""Exception hierarchy shared across the package."""


class ProperLmmError(Exception):
    """Base class for all package errors."""


class DomainError(ProperLmmError, ValueError):
    """A parameter lies outside its admissible domain."""


class DimensionError(ProperLmmError, ValueError):
    """Non-conforming array dimensions."""


class ConstructionError(ProperLmmError, ValueError):
    """Invalid model or prior construction."""


class ConfigurationError(ProperLmmError, ValueError):
    """A checker or sampler was invoked with an incompatible configuration."""


class TheoremInapplicableError(ConfigurationError):
    """The requested propriety result does not cover this configuration."""


class ScaleLimitError(ProperLmmError, ValueError):
    """Instance exceeds the desk-scale limits enforced by the oracle."""


class NumericalError(ProperLmmError, RuntimeError):
    """Quadrature or linear-algebra failure. Carries a partial value if any."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ProprietyGateError(ProperLmmError, RuntimeError):
    """Sampling refused because the spec did not pass a PROPER verdict."""


class SamplerError(ProperLmmError, RuntimeError):
    """Non-finite state encountered while sampling. Carries a state dump."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ConfigError(ProperLmmError, ValueError):
    """Invalid run configuration (CLI)."""
