"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class TumatchError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    code = "error"


class ConfigError(TumatchError, ValueError):
    """Malformed input: bad shapes, invalid probabilities, unparseable files."""

    exit_code = 2
    code = "config_error"


class ConvergenceError(TumatchError, RuntimeError):
    """An iterative routine stopped before reaching its tolerance."""

    exit_code = 3
    code = "non_convergence"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IdentificationError(TumatchError, ValueError):
    """Parameters cannot be recovered: boundary covariations, degenerate normalization, collinear basis."""

    exit_code = 4
    code = "identification_failure"
