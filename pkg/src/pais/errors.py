"""Exception hierarchy. Everything raised on purpose derives from PaisError."""


class PaisError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PaisError):
    """A numeric or structural parameter violates its precondition."""


class ConfigError(PaisError):
    """Configuration file problem; the message carries the offending field path."""


class IterationError(PaisError):
    """A sampler iteration failed (e.g. every proposal left the support).

    The partially completed output is attached as ``partial`` so callers can
    flush what exists before aborting.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DiagnosticError(PaisError):
    """A diagnostic was asked for on input where it is undefined."""


class IntegrationError(PaisError):
    """The ODE integrator failed its step-size convergence check."""
