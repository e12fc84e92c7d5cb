"""Exception types shared across the package."""


class StegTraceError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(StegTraceError, ValueError):
    """A parameter is outside its valid domain."""


class InsufficientDataError(StegTraceError, ValueError):
    """Not enough records, gaps or probes to compute a result."""


class ScenarioParseError(StegTraceError, ValueError):
    """A scenario document could not be turned into a valid configuration.

    ``line`` is 1-based and may be ``None`` when no location is known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class RecordFormatError(StegTraceError, ValueError):
    """A record file line is malformed."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")
