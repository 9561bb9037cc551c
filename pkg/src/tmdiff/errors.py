"""Exception taxonomy shared across the package.

The CLI maps these onto stable exit codes: usage/configuration problems
exit 1, data problems exit 2, anything else at runtime exits 3.
"""


class TmdiffError(Exception):
    """Base class for all package-specific errors."""


class DataError(TmdiffError):
    """A dataset file or its contents cannot be used."""


class ParseError(DataError):
    """Malformed record in a dataset file; message names the line."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(DataError):
    """Values violate a domain invariant (negative, NaN, wrong shape...)."""


class ConfigurationError(TmdiffError):
    """A configuration value or combination of values is unusable."""


class ShapeError(TmdiffError):
    """Tensor or matrix dimensions do not match the declared contract."""


class TrainingDivergedError(TmdiffError):
    """Non-finite loss encountered; carries a diagnostic payload."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
