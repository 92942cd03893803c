# Parse ONE-style settings files into a typed key-value table.
# Version: 1.0.0
# Provides the line parser, typed getters with key-level errors, overrides and unit scaling.

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

from .errors import FileLoadError, ParseError, ValidationError


logger = logging.getLogger(__name__)

# 1 sim-metre = 100 real metres, 1 sim-second = 60 real seconds
DISTANCE_SCALE = 100.0
TIME_SCALE = 60.0

QuantityKind = Literal["distance", "speed"]

# Decimal size suffixes: "30M" = 30,000,000 bytes
SIZE_SUFFIXES: dict[str, int] = {"": 1, "k": 10**3, "M": 10**6, "G": 10**9}

_SIZE_PATTERN = re.compile(r"^(\d+(?:\.\d+)?)\s*([kMG]?)$")


@dataclass
class SettingsTable:
    """Ordered `key = value` entries parsed from a settings source.

    Keys are case-sensitive. A repeated key overrides the earlier value
    and leaves a warning behind.

    Attributes:
        entries: Dotted key to raw string value, in first-seen order.
        lines: Dotted key to the line number of its winning value.
        warnings: Human-readable warnings collected while parsing.
        source: Name of the text source for diagnostics.
    """
    entries: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    source: str = "<string>"

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: object) -> bool:
        return key in self.entries

    def keys(self) -> list[str]:
        return list(self.entries)

    def set(self, key: str, value: str, line: int | None = None, warn_duplicate: bool = True) -> None:
        """Store a value, last write wins.

        Args:
            key: Dotted settings key.
            value: Raw string value.
            line: Line number the value came from.
            warn_duplicate: Record a warning if the key already exists.
        """
        if key in self.entries and warn_duplicate:
            earlier = self.lines.get(key)
            warning = (
                f"{self.source}: duplicate key {key} on line {line} "
                f"overrides line {earlier}"
            )
            self.warnings.append(warning)
            logger.warning(warning)
        self.entries[key] = value
        if line is not None:
            self.lines[key] = line
        else:
            self.lines.pop(key, None)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.entries.get(key, default)

    def require(self, key: str) -> str:
        """Return a raw value, failing with the key name if it is missing.

        Raises:
            ValidationError: If the key is absent.
        """
        if key not in self.entries:
            raise ValidationError(field=key, value=None, reason="Required setting is missing")
        return self.entries[key]

    def get_float(self, key: str, default: float | None = None) -> float | None:
        """Parse a value as a float.

        Raises:
            ValidationError: If the value is not a finite number.
        """
        raw = self.entries.get(key)
        if raw is None:
            return default
        return _to_float(raw, key, self.lines.get(key))

    def get_int(self, key: str, default: int | None = None) -> int | None:
        """Parse a value as an integer.

        Raises:
            ValidationError: If the value is not an integer.
        """
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ValidationError(
                field=key,
                value=raw,
                reason="Must be an integer",
                row=self.lines.get(key)
            )

    def get_size(self, key: str, default: int | None = None) -> int | None:
        """Parse a byte quantity such as "30M" or "500k".

        Raises:
            ValidationError: If the value is not a size.
        """
        raw = self.entries.get(key)
        if raw is None:
            return default
        try:
            return parse_size(raw)
        except ValueError as e:
            raise ValidationError(field=key, value=raw, reason=str(e), row=self.lines.get(key))

    def get_numbers(self, key: str) -> list[float] | None:
        """Parse a comma-separated list of numbers ("3,5" or "79500, 53000")."""
        raw = self.entries.get(key)
        if raw is None:
            return None
        line = self.lines.get(key)
        return [_to_float(part, key, line) for part in _split_list(raw)]

    def get_range(self, key: str) -> tuple[float, float] | None:
        """Parse "min,max" (or a single number meaning min = max).

        Raises:
            ValidationError: If there are not one or two numbers, or min > max.
        """
        numbers = self.get_numbers(key)
        if numbers is None:
            return None
        if len(numbers) == 1:
            numbers = numbers * 2
        if len(numbers) != 2:
            raise ValidationError(
                field=key,
                value=self.entries[key],
                reason="Expected 'min,max'",
                row=self.lines.get(key)
            )
        low, high = numbers
        if low > high:
            raise ValidationError(
                field=key,
                value=self.entries[key],
                reason="Minimum exceeds maximum",
                row=self.lines.get(key)
            )
        return low, high

    def get_coord(self, key: str) -> tuple[float, float] | None:
        """Parse "x, y".

        Raises:
            ValidationError: If the value is not exactly two numbers.
        """
        numbers = self.get_numbers(key)
        if numbers is None:
            return None
        if len(numbers) != 2:
            raise ValidationError(
                field=key,
                value=self.entries[key],
                reason="Expected 'x, y'",
                row=self.lines.get(key)
            )
        return numbers[0], numbers[1]

    def get_list(self, key: str) -> list[str] | None:
        raw = self.entries.get(key)
        if raw is None:
            return None
        return _split_list(raw)

    def copy(self) -> "SettingsTable":
        return SettingsTable(
            entries=dict(self.entries),
            lines=dict(self.lines),
            warnings=list(self.warnings),
            source=self.source,
        )

    def to_text(self) -> str:
        """Render the table back as settings text, one entry per line."""
        return "".join(f"{key} = {value}\n" for key, value in self.entries.items())


def parse_settings(text: str, source: str = "<string>") -> SettingsTable:
    """Parse settings text into a SettingsTable.

    Blank lines and lines whose first non-blank character is `#` are
    skipped. Whitespace around `=` and at line ends is stripped.

    Args:
        text: Settings text.
        source: Name used in diagnostics.

    Returns:
        Parsed SettingsTable.

    Raises:
        ParseError: If a line has no `=` or an empty key.
    """
    table = SettingsTable(source=source)
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(source, line_number, f"expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(source, line_number, "empty key")
        table.set(key, value.strip(), line_number)
    return table


def load_settings(path: str | Path) -> SettingsTable:
    """Read and parse a settings file.

    Raises:
        FileLoadError: If the file cannot be read.
        ParseError: If a line is malformed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise FileLoadError(str(path), e)
    return parse_settings(text, source=str(path))


def apply_overrides(table: SettingsTable, overrides: Iterable[str]) -> SettingsTable:
    """Return a copy of the table with `key=value` overrides applied.

    Args:
        table: Parsed settings.
        overrides: Strings of the form "key=value", applied in order.

    Returns:
        New SettingsTable; the input is not modified.

    Raises:
        ValidationError: If an override has no `=` or an empty key.
    """
    result = table.copy()
    for override in overrides:
        key, sep, value = override.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValidationError(field="--set", value=override, reason="Expected 'key=value'")
        result.set(key, value.strip(), warn_duplicate=False)
    return result


def parse_size(raw: str) -> int:
    """Parse a decimal byte quantity: "30M" -> 30000000, "500k" -> 500000.

    Raises:
        ValueError: If the text is not a non-negative size.
    """
    match = _SIZE_PATTERN.match(raw.strip())
    if not match:
        raise ValueError("Must be a size such as 500k, 30M or 100000")
    number, suffix = match.groups()
    return int(round(float(number) * SIZE_SUFFIXES[suffix]))


def real_to_sim(value: float, kind: QuantityKind) -> float:
    """Convert a real-world quantity into sim units.

    Distances are real metres and become sim-metres (1:100). Speeds are
    real metres per second and become sim-metres per sim-second (1:100
    distance, 1:60 time).

    Args:
        value: Non-negative real-world quantity.
        kind: "distance" or "speed".

    Returns:
        The scaled value.

    Raises:
        ValidationError: If value is negative or kind is unknown.
    """
    if value < 0:
        raise ValidationError(field=kind, value=value, reason="Must be non-negative")
    if kind == "distance":
        return value / DISTANCE_SCALE
    if kind == "speed":
        return value / DISTANCE_SCALE * TIME_SCALE
    raise ValidationError(field="kind", value=kind, reason="Must be 'distance' or 'speed'")


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _to_float(raw: str, key: str, line: int | None) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValidationError(field=key, value=raw, reason="Must be a number", row=line)
    if value != value or value in (float("inf"), float("-inf")):
        raise ValidationError(field=key, value=raw, reason="Must be finite", row=line)
    return value
