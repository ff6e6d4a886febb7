"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value (qubit count, shots, backend, rule...)."""


class ContractViolation(ValueError):
    """Caller broke a shape or index precondition."""


class UnsupportedBackendError(ConfigurationError):
    """Requested operation is not available on the chosen backend."""


class IngestionError(ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class TrainingError(RuntimeError):
    """Training of one ensemble member failed."""

    def __init__(self, member: int, cause: BaseException):
        super().__init__(f"member {member} failed: {cause!r}")
        self.member = member
        self.cause = cause
