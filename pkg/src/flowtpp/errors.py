"""Error types shared across modules, mapped to CLI exit codes."""


class ValidationError(ValueError):
    """Bad input data, config, or arguments (CLI exit code 1)."""


class NumericalError(FloatingPointError):
    """Non-finite values or a diverged computation (CLI exit code 2)."""
