"""Descriptive statistics of an event log.

Counts, case length extremes and mean, and the longest case duration.
Averages and durations are exact rationals; rendering decides precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from fractions import Fraction

from .errors import DomainError
from .event_model import EventLog, LabelRegistry
from .formatting import decimal_string

_MS_PER_DAY = 86_400_000


def _milliseconds(delta: timedelta) -> int:
    # Event timestamps are millisecond-truncated, so this division is exact.
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


@dataclass(frozen=True)
class LogStatistics:
    cases: int
    activities: int
    roles: int
    events: int
    max_case_length: int
    min_case_length: int
    avg_case_length: Fraction
    max_duration_days: Fraction


def log_statistics(log: EventLog, registry: LabelRegistry) -> LogStatistics:
    """Compute the summary row set for a log.

    Activity and role counts come from the registry, so they reflect the
    label universe the log was registered with; the end marker is synthetic
    and never counted. Case duration is last minus first event timestamp;
    the maximum is taken per case, in days.
    """
    if len(log) == 0:
        raise DomainError("statistics of an empty log are undefined")
    lengths = [len(trace) for trace in log]
    events = sum(lengths)
    max_duration = max(_milliseconds(trace.end - trace.start) for trace in log)
    return LogStatistics(
        cases=len(log),
        activities=len(registry.activities),
        roles=len(registry.roles),
        events=events,
        max_case_length=max(lengths),
        min_case_length=min(lengths),
        avg_case_length=Fraction(events, len(log)),
        max_duration_days=Fraction(max_duration, _MS_PER_DAY),
    )


def statistics_rows(stats: LogStatistics) -> list[tuple[str, str]]:
    """(name, value) rows for tabular output; rationals at 2 decimals."""
    return [
        ("cases", str(stats.cases)),
        ("activities", str(stats.activities)),
        ("roles", str(stats.roles)),
        ("events", str(stats.events)),
        ("max_case_length", str(stats.max_case_length)),
        ("min_case_length", str(stats.min_case_length)),
        ("avg_case_length", decimal_string(stats.avg_case_length, 2)),
        ("max_duration_days", decimal_string(stats.max_duration_days, 2)),
    ]
