# Custom exception hierarchy for the opportunistic network simulator.
# Version: 1.0.0
# Provides structured error handling with key-level context and readable messages.

from typing import Any


class SimulationError(Exception):
    """Base exception for all simulator errors.

    All custom exceptions inherit from this class to allow catching
    any simulation-related error with a single except clause.

    Attributes:
        message: Human-readable error description.
        details: Additional context for debugging.
    """

    def __init__(self, message: str, details: dict[str, Any] | None = None) -> None:
        """Initialize the simulation error.

        Args:
            message: Human-readable error description.
            details: Optional dictionary of additional context.
        """
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        """Return formatted error message with details."""
        if self.details:
            detail_str = ", ".join(f"{k}={v}" for k, v in self.details.items())
            return f"{self.message} [{detail_str}]"
        return self.message


class ValidationError(SimulationError):
    """Raised when a settings value fails validation.

    Used for unparsable numbers, out-of-range values, dangling interface
    references and missing required keys.

    Attributes:
        field: Dotted settings key that failed validation.
        value: The invalid value that was provided.
        reason: Explanation of why the value is invalid.
        row: Optional line number in the settings source.
    """

    def __init__(
        self,
        field: str,
        value: Any,
        reason: str,
        row: int | None = None
    ) -> None:
        """Initialize the validation error.

        Args:
            field: Dotted settings key that failed validation.
            value: The invalid value provided.
            reason: Explanation of why validation failed.
            row: Optional line number (1-indexed) in the settings file.
        """
        self.field = field
        self.value = value
        self.reason = reason
        self.row = row

        details = {"field": field, "value": repr(value)}
        if row is not None:
            details["line"] = row

        location = f" on line {row}" if row else ""
        message = f"Invalid {field}{location}: {reason}. Got: {repr(value)}"
        super().__init__(message, details)


class ParseError(SimulationError):
    """Raised when a settings or WKT line cannot be parsed.

    Attributes:
        source: Name of the text source (file path or "<string>").
        line: 1-based line number of the offending line.
        reason: What is wrong with the line.
    """

    def __init__(self, source: str, line: int, reason: str) -> None:
        self.source = source
        self.line = line
        self.reason = reason

        message = f"Parse error in {source} line {line}: {reason}"
        super().__init__(message, {"source": source, "line": line})


class ConfigurationError(SimulationError):
    """Raised when a scenario is structurally broken.

    Used for unsupported movement models or routers, missing host groups,
    and POI files that cannot serve as destination sets.

    Attributes:
        config_source: Name of the configuration source (key, file, etc.).
        issue: Description of the configuration problem.
    """

    def __init__(self, config_source: str, issue: str) -> None:
        """Initialize the configuration error.

        Args:
            config_source: Name of the configuration source.
            issue: Description of what's wrong with the configuration.
        """
        self.config_source = config_source
        self.issue = issue

        message = f"Configuration error in {config_source}: {issue}"
        super().__init__(message, {"source": config_source})


class FileLoadError(SimulationError):
    """Raised when a required file cannot be loaded.

    Covers settings, map, POI and CSV files: not found, permission denied,
    undecodable text.

    Attributes:
        filepath: Path to the file that failed to load.
        cause: The underlying exception that caused the failure.
    """

    def __init__(self, filepath: str, cause: Exception) -> None:
        """Initialize the file load error.

        Args:
            filepath: Path to the file that failed to load.
            cause: The underlying exception.
        """
        self.filepath = filepath
        self.cause = cause

        # Extract just the filename for cleaner messages
        filename = filepath.split("/")[-1].split("\\")[-1]
        cause_type = type(cause).__name__

        message = f"Failed to load {filename}: {cause_type} - {cause}"
        super().__init__(message, {"filepath": filepath, "cause_type": cause_type})


class EventOrderError(SimulationError):
    """Raised when an event arrives earlier than the one before it.

    The world emits events in nondecreasing time order; seeing this error
    means the simulator itself is broken.

    Attributes:
        previous_time: Time of the last accepted event.
        event_time: Time of the rejected event.
        kind: Kind of the rejected event.
    """

    def __init__(self, previous_time: float, event_time: float, kind: str) -> None:
        self.previous_time = previous_time
        self.event_time = event_time
        self.kind = kind

        message = (
            f"Event {kind} at {event_time} arrived after an event at {previous_time}"
        )
        super().__init__(message, {"kind": kind})


class SweepRunError(SimulationError):
    """Raised when one run of a parameter sweep fails.

    Attributes:
        param: Swept settings key.
        value: Swept value of the failing run.
        router: Router of the failing run.
        seed: Seed of the failing run.
        cause: The underlying exception.
    """

    def __init__(
        self,
        param: str,
        value: float,
        router: str,
        seed: int,
        cause: Exception
    ) -> None:
        self.param = param
        self.value = value
        self.router = router
        self.seed = seed
        self.cause = cause

        message = (
            f"Sweep run failed at {param}={value}, router={router}, seed={seed}: "
            f"{type(cause).__name__} - {cause}"
        )
        super().__init__(
            message,
            {"param": param, "value": value, "router": router, "seed": seed}
        )
