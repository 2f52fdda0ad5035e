"""Exception and warning types."""


class ConfigurationError(ValueError):
    """A scenario, strategy or path does not fit the requested operation."""


class ScenarioValidationError(ConfigurationError):
    """A scenario violates one of its parameter constraints."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class SimulationError(RuntimeError):
    """A simulation produced output that breaks one of its guarantees."""


class ScenarioWarning(UserWarning):
    """The scenario is valid but the arbitrage claim attached to it does not hold."""
