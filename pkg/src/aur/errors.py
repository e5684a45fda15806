"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives non-finite or malformed inputs."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step fails beyond recovery (jitter exhausted)."""


class FitError(NumericalError):
    """Raised when every hyperparameter-optimization restart fails."""


class DuplicateInputError(ValueError):
    """Raised when a new training point coincides with an existing one."""


class ProbeError(RuntimeError):
    """Raised when a real-environment probe is requested outside the settable range."""


class SerializationError(RuntimeError):
    """Raised on malformed or version-mismatched model files."""


class ConfigError(ValueError):
    """Raised on invalid or unknown configuration content."""
