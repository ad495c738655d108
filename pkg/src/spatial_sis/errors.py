"""Exception hierarchy shared by all solvers and the command line."""


class SISError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SISError, ValueError):
    """Invalid user input: bad domain, coefficient, or config file entry."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        self.detail = message
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class UsageError(SISError, ValueError):
    """API misuse, e.g. a field sampled on a different grid."""


class NumericalError(SISError, RuntimeError):
    """A solver failed to converge.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (last residual, iteration count, bracket, ...).
    """

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} [{detail}]"
        super().__init__(message)


class NoEndemicEquilibrium(SISError):
    """No endemic equilibrium was found (expected for p=1 with R0 <= 1)."""


class RegimeError(SISError, ValueError):
    """A limit quantity was requested outside the regime where it is defined."""


class InfeasibleError(SISError):
    """A prescribed target (e.g. a patch mass) cannot be reached."""
