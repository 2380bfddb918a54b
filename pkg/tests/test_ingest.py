import io
from datetime import date, time

import numpy as np
import pandas as pd
import pytest

from volcast.exceptions import (
    BarOrderError, BarParseError, BoundsError, IncompleteSessionError, SchemaError,
)
from volcast.ingest import (
    Bar, BarSeries, SessionCalendar, filter_regular_session, load_calendar, parse_bars,
    restrict_window, session_completeness, write_bars,
)

HEADER = "timestamp,open,high,low,close,volume\n"


def _parse(text, **kwargs):
    return parse_bars(io.StringIO(HEADER + text), **kwargs)


def test_parse_reads_naive_times_as_exchange_local(mixed_bars):
    assert len(mixed_bars) == 22
    assert mixed_bars.granularity == "intraday"
    assert str(mixed_bars.frame.index.tz) == "UTC"
    # 08:00 EST is 13:00 UTC
    assert mixed_bars.frame.index[0] == pd.Timestamp("2024-03-04 13:00", tz="UTC")
    assert mixed_bars.session_dates()[0] == date(2024, 3, 4)


def test_filter_drops_off_session_weekend_and_incomplete(mixed_bars, calendar):
    kept = filter_regular_session(mixed_bars, calendar)
    assert len(kept) == 16
    assert set(kept.session_dates()) == {date(2024, 3, 4), date(2024, 3, 5)}
    clock = kept.local_index.time
    assert min(clock) == time(9, 0) and max(clock) == time(16, 0)


def test_incomplete_session_fail_policy(mixed_bars, calendar):
    with pytest.raises(IncompleteSessionError) as info:
        filter_regular_session(mixed_bars, calendar, incomplete="fail")
    assert info.value.report.incomplete == {date(2024, 3, 6): 3}
    assert info.value.exit_code == 2
    with pytest.raises(BoundsError):
        filter_regular_session(mixed_bars, calendar, incomplete="keep")


def test_holiday_file_removes_the_session(mixed_bars, fixtures_dir):
    cal = load_calendar(fixtures_dir / "holidays.txt", session_open=time(9, 0), session_close=time(17, 0))
    assert cal.holidays == frozenset({date(2024, 3, 5)})
    kept = filter_regular_session(mixed_bars, cal)
    assert set(kept.session_dates()) == {date(2024, 3, 4)}
    assert len(kept) == 8


def test_missing_holiday_file_means_no_holidays(tmp_path):
    cal = load_calendar(tmp_path / "absent.txt")
    assert cal.holidays == frozenset()


def test_completeness_report_uses_modal_count(mixed_bars, calendar):
    in_session = filter_regular_session(mixed_bars, SessionCalendar(
        session_open=time(9, 0), session_close=time(17, 0), bars_per_session=3))
    assert set(in_session.session_dates()) == {date(2024, 3, 6)}

    # counts of 8 and 3 tie as modes; the larger wins
    report = session_completeness(restrict_window(mixed_bars, "2024-03-05", "2024-03-06"), calendar)
    assert report.expected == 8
    assert report.complete == [date(2024, 3, 5)]
    assert report.to_dict()["incomplete_sessions"]["2024-03-06"] == 3


def test_daily_file_with_schema_mapping(fixtures_dir, calendar):
    schema = {"timestamp": "Date", "open": "Open", "high": "High", "low": "Low",
              "close": "Close", "volume": "Volume"}
    bars = parse_bars(fixtures_dir / "daily_bars.csv", schema=schema, delimiter=";")
    assert bars.granularity == "daily"
    kept = filter_regular_session(bars, calendar)
    # Saturday dropped; time-of-day is ignored for daily bars
    assert [d.isoformat() for d in kept.session_dates()] == ["2024-03-01", "2024-03-04", "2024-03-05", "2024-03-06"]


def test_offset_timestamps_are_converted_to_utc():
    bars = _parse("2024-03-04T14:30:00Z,10,11,9,10.5,100\n2024-03-04T10:30:00-05:00,10.5,11,10,10.8,50\n")
    assert list(bars.frame.index) == [pd.Timestamp("2024-03-04 14:30", tz="UTC"),
                                      pd.Timestamp("2024-03-04 15:30", tz="UTC")]


def test_invalid_bar_reports_row_and_line():
    with pytest.raises(BarParseError) as info:
        _parse("2024-03-04 09:00:00,10,11,9,10,100\n2024-03-04 10:00:00,10,9,11,10,100\n")
    assert info.value.row == 2 and info.value.line == 3
    assert "row 2 (line 3)" in str(info.value)


@pytest.mark.parametrize("text", [
    "2024-03-04 09:00:00,10,11,9,abc,100\n",
    "not a time,10,11,9,10,100\n",
    "2024-03-04 09:00:00,10,11,9,10,-5\n",
    "2024-03-04 09:00:00,0,11,0,10,100\n",
    "2024-03-04 09:00:00,12,13,9,10,100\n2024-03-04 10:00:00,10,11,9,14,100\n",
])
def test_malformed_rows(text):
    with pytest.raises(BarParseError):
        _parse(text)


def test_duplicate_and_unordered_timestamps():
    with pytest.raises(BarOrderError, match="duplicate"):
        _parse("2024-03-04 09:00:00,10,11,9,10,1\n2024-03-04 09:00:00,10,11,9,10,1\n")
    with pytest.raises(BarOrderError, match="out-of-order"):
        _parse("2024-03-04 10:00:00,10,11,9,10,1\n2024-03-04 09:00:00,10,11,9,10,1\n")


def test_nonexistent_local_time_is_rejected():
    # clocks jump from 02:00 to 03:00 on 2024-03-10 in New York
    with pytest.raises(BarParseError):
        _parse("2024-03-10 02:30:00,10,11,9,10,1\n")


def test_missing_column_and_empty_file():
    with pytest.raises(SchemaError, match="volume"):
        parse_bars(io.StringIO("timestamp,open,high,low,close\n2024-03-04,1,1,1,1\n"))
    with pytest.raises(SchemaError):
        parse_bars(io.StringIO(""))


def test_written_bars_parse_back(mixed_bars, calendar, tmp_path):
    kept = filter_regular_session(mixed_bars, calendar)
    path = write_bars(kept, tmp_path / "clean" / "bars.csv")
    assert path.read_text().splitlines()[1].startswith("2024-03-04T14:00:00Z,")
    again = parse_bars(path)
    pd.testing.assert_index_equal(again.frame.index, kept.frame.index, check_names=False)
    np.testing.assert_allclose(again.volume, kept.volume)


def test_restrict_window(mixed_bars):
    kept = restrict_window(mixed_bars, "2024-03-05", date(2024, 3, 6))
    assert set(kept.session_dates()) == {date(2024, 3, 5), date(2024, 3, 6)}
    assert len(restrict_window(mixed_bars, "2025-01-01", "2025-01-31")) == 0
    with pytest.raises(BoundsError):
        restrict_window(mixed_bars, "2024-03-06", "2024-03-05")


def test_bar_series_from_bar_records():
    bars = BarSeries.from_bars([
        Bar(pd.Timestamp("2024-03-04 09:00"), 10, 11, 9, 10.5, 100),
        Bar(pd.Timestamp("2024-03-04 10:00"), 10.5, 11, 10, 10.8, 80),
    ])
    assert bars.frame.index[0] == pd.Timestamp("2024-03-04 14:00", tz="UTC")
    np.testing.assert_array_equal(bars.volume, [100, 80])
    with pytest.raises(BarParseError):
        Bar(pd.Timestamp("2024-03-04 09:00"), 10, 9, 11, 10, 1).validate()


def test_calendar_rejects_inverted_hours():
    with pytest.raises(BoundsError):
        SessionCalendar(session_open=time(16, 0), session_close=time(9, 30))


def test_sessions_on_both_sides_of_a_dst_switch_keep_eight_bars(calendar):
    # New York moves from UTC-5 to UTC-4 on 2024-03-10; the same local hours
    # arrive one UTC hour earlier after the switch
    friday = [f"2024-03-08T{h:02d}:00:00Z" for h in range(14, 22)]
    monday = [f"2024-03-11T{h:02d}:00:00Z" for h in range(13, 21)]
    stray = ["2024-03-11T12:00:00Z", "2024-03-11T21:00:00Z"]
    stamps = sorted(friday + monday + stray)
    bars = _parse("".join(f"{s},10,11,9,10,100\n" for s in stamps))
    kept = filter_regular_session(bars, calendar)
    counts = pd.Series(kept.session_dates()).value_counts()
    assert counts.to_dict() == {date(2024, 3, 8): 8, date(2024, 3, 11): 8}
    clock = kept.local_index.time
    assert min(clock) == time(9, 0) and max(clock) == time(16, 0)


def test_offset_timestamps_parse_without_warnings(recwarn):
    _parse("2024-03-04T14:30:00Z,10,11,9,10.5,100\n2024-03-04 10:30:00,10.5,11,10,10.8,50\n")
    assert not [w for w in recwarn if issubclass(w.category, UserWarning)]
