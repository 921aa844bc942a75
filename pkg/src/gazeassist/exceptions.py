"""Exception types shared across the pipeline."""


class StreamOrderError(ValueError):
    """Raised when a time-ordered stream arrives out of order."""


class StreamFormatError(ValueError):
    """Raised for malformed stream records; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(ValueError):
    """Raised for inconsistent model or pipeline configuration."""


class NumericsError(RuntimeError):
    """Raised when a non-finite activation appears; names the offending layer."""

    def __init__(self, layer: str) -> None:
        super().__init__(f"non-finite activation in layer '{layer}'")
        self.layer = layer


class InferenceError(RuntimeError):
    """Raised when the language-model reply cannot be parsed after retry."""


class PlanningError(RuntimeError):
    """Raised when no valid action plan could be produced."""

    def __init__(self, message: str, violations: list[str] | None = None) -> None:
        super().__init__(message)
        self.violations = violations or []


class ReplayError(ValueError):
    """Raised when an event log is corrupt; carries the offending seq."""

    def __init__(self, seq: int, message: str) -> None:
        super().__init__(f"seq {seq}: {message}")
        self.seq = seq
