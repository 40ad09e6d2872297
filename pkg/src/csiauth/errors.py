"""Exception hierarchy shared across the package."""


class CsiAuthError(Exception):
    """Base class for all csiauth errors."""


class ConfigError(CsiAuthError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class DataError(CsiAuthError):
    """Malformed or degenerate data (non-finite entries, zero signal, ...)."""


class StateError(CsiAuthError):
    """Operation applied in the wrong state (double-noising, missing meta, ...)."""


class ShapeError(CsiAuthError):
    """Array shape does not match the expected fingerprint geometry."""


class TrainingFault(CsiAuthError):
    """Training diverged or produced a non-finite loss; carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DatasetIOError(CsiAuthError):
    """External dataset ingestion failure with a machine-readable code.

    Codes: ``missing_file``, ``bad_container``, ``shape_mismatch``,
    ``index_out_of_range``.
    """

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"[{code}] {message}")
