import logging

import pytest

from src.errors import FileLoadError, ParseError, ValidationError
from src.settings import (
    apply_overrides,
    load_settings,
    parse_settings,
    parse_size,
    real_to_sim,
)


def test_single_entry():
    table = parse_settings("Group1.nrofHosts = 5")
    assert table.entries == {"Group1.nrofHosts": "5"}
    assert table.get_int("Group1.nrofHosts") == 5


def test_comments_and_blank_lines_are_skipped():
    table = parse_settings("# a comment\n\n   # indented comment\n")
    assert len(table) == 0


def test_whitespace_around_key_and_value_is_stripped():
    table = parse_settings("   Scenario.name   =   scenario_b   \n")
    assert table.get("Scenario.name") == "scenario_b"


def test_value_may_contain_equals_sign():
    table = parse_settings("Scenario.name = a=b")
    assert table.get("Scenario.name") == "a=b"


def test_range_value():
    table = parse_settings("Group2.speed = 3,5")
    assert table.get_range("Group2.speed") == (3.0, 5.0)


def test_single_number_range_means_fixed_value():
    table = parse_settings("Events1.interval = 30")
    assert table.get_range("Events1.interval") == (30.0, 30.0)


def test_inverted_range_is_rejected():
    table = parse_settings("Group2.speed = 5,3")
    with pytest.raises(ValidationError) as exc_info:
        table.get_range("Group2.speed")
    assert exc_info.value.field == "Group2.speed"


def test_coordinate_value():
    table = parse_settings("Group1.nodeLocation = 79500, 53000")
    assert table.get_coord("Group1.nodeLocation") == (79500.0, 53000.0)


def test_line_without_equals_reports_line_number():
    with pytest.raises(ParseError) as exc_info:
        parse_settings("Scenario.name = x\nGroup1.nrofHosts 5\n", source="bad.settings")
    assert exc_info.value.line == 2
    assert exc_info.value.source == "bad.settings"


def test_empty_key_is_rejected():
    with pytest.raises(ParseError):
        parse_settings(" = 5")


def test_duplicate_key_last_wins_with_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="src.settings"):
        table = parse_settings("Group1.nrofHosts = 5\nGroup1.nrofHosts = 7\n")
    assert table.get_int("Group1.nrofHosts") == 7
    assert table.lines["Group1.nrofHosts"] == 2
    assert len(table.warnings) == 1
    assert "duplicate key Group1.nrofHosts" in caplog.text


def test_unparsable_integer_names_key_and_line():
    table = parse_settings("Scenario.name = x\nGroup1.nrofHosts = five\n")
    with pytest.raises(ValidationError) as exc_info:
        table.get_int("Group1.nrofHosts")
    assert exc_info.value.field == "Group1.nrofHosts"
    assert exc_info.value.row == 2


def test_non_finite_float_is_rejected():
    table = parse_settings("Scenario.endTime = inf")
    with pytest.raises(ValidationError):
        table.get_float("Scenario.endTime")


def test_missing_key_returns_default():
    table = parse_settings("")
    assert table.get_float("Scenario.updateInterval", 1.0) == 1.0
    assert table.get_size("Group.bufferSize") is None


def test_require_names_missing_key():
    with pytest.raises(ValidationError) as exc_info:
        parse_settings("").require("Scenario.endTime")
    assert exc_info.value.field == "Scenario.endTime"


@pytest.mark.parametrize("raw,expected", [
    ("30M", 30_000_000),
    ("500k", 500_000),
    ("100M", 100_000_000),
    ("2G", 2_000_000_000),
    ("250000", 250_000),
    ("1.5M", 1_500_000),
])
def test_parse_size(raw, expected):
    assert parse_size(raw) == expected


@pytest.mark.parametrize("raw", ["", "abc", "-5M", "30 MB", "30m"])
def test_parse_size_rejects_garbage(raw):
    with pytest.raises(ValueError):
        parse_size(raw)


def test_get_size_wraps_error_with_key():
    table = parse_settings("Group.bufferSize = lots")
    with pytest.raises(ValidationError) as exc_info:
        table.get_size("Group.bufferSize")
    assert exc_info.value.field == "Group.bufferSize"


def test_overrides_do_not_touch_the_original():
    table = parse_settings("VHFInterface.transmitRange = 300")
    overridden = apply_overrides(table, ["VHFInterface.transmitRange=600", "Scenario.endTime = 10"])
    assert table.get("VHFInterface.transmitRange") == "300"
    assert overridden.get("VHFInterface.transmitRange") == "600"
    assert overridden.get("Scenario.endTime") == "10"
    assert overridden.warnings == []


def test_override_without_equals_is_rejected():
    with pytest.raises(ValidationError):
        apply_overrides(parse_settings(""), ["Scenario.endTime"])


def test_to_text_parses_back_to_same_entries():
    table = parse_settings("A.b = 1\n# skip\nC.d = 3,5\n")
    assert parse_settings(table.to_text()).entries == table.entries


def test_load_settings_missing_file(tmp_path):
    with pytest.raises(FileLoadError):
        load_settings(tmp_path / "missing.settings")


def test_load_settings_uses_path_as_source(tmp_path):
    path = tmp_path / "x.settings"
    path.write_text("oops\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc_info:
        load_settings(path)
    assert exc_info.value.source == str(path)


def test_real_distance_to_sim():
    assert real_to_sim(30_000, "distance") == pytest.approx(300.0)
    assert real_to_sim(0, "distance") == 0.0


def test_real_speed_to_sim():
    # 28 km/h ~ 7.78 m/s ~ 4.67 sim-m per sim-s
    assert real_to_sim(28_000 / 3600, "speed") == pytest.approx(4.6667, abs=1e-3)


def test_negative_real_quantity_is_rejected():
    with pytest.raises(ValidationError):
        real_to_sim(-1, "distance")
