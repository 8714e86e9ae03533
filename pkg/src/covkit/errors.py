"""Exception hierarchy shared across the toolkit."""


class CovkitError(Exception):
    """Base class for all toolkit errors."""


class DomainError(CovkitError, ValueError):
    """Argument outside the mathematical domain of a function."""


class SpecError(CovkitError, ValueError):
    """Invalid model specification (bad parameter, shape, or claim)."""


class EvaluationError(CovkitError, RuntimeError):
    """Kernel evaluation failed; message carries op and location context."""


class NotPositiveSemidefiniteError(CovkitError, RuntimeError):
    """A matrix required to be PSD failed factorization.

    Attributes
    ----------
    min_eigenvalue : float or None
        Diagnostic minimum eigenvalue when available.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConfigError(CovkitError, ValueError):
    """Malformed CLI configuration or data file; message carries position info."""
