"""Shared builders and fixtures for the test suite."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from smallog.event_model import Event, EventLog, Trace

FIXTURES = Path(__file__).parent / "fixtures"

BASE_TIME = datetime(2021, 3, 1, 9, 0, 0, tzinfo=timezone.utc)

_COUNTER = iter(range(1, 10**9))


def ts(minutes: float = 0) -> datetime:
    return BASE_TIME + timedelta(minutes=minutes)


def make_event(
    case_id: str,
    activity: str,
    when: datetime | float = 0,
    resource: str | None = None,
    payload: dict | None = None,
    event_id: str | None = None,
) -> Event:
    if not isinstance(when, datetime):
        when = ts(when)
    return Event(
        event_id=event_id or f"e{next(_COUNTER)}",
        case_id=case_id,
        activity=activity,
        timestamp=when,
        resource=resource,
        payload=payload or {},
    )


def make_trace(
    case_id: str,
    activities: list[str],
    start: float = 0,
    resources: list[str | None] | None = None,
    step: float = 1,
) -> Trace:
    events = []
    for i, activity in enumerate(activities):
        resource = resources[i] if resources else None
        events.append(make_event(case_id, activity, start + i * step, resource))
    return Trace(case_id, tuple(events))


def make_log(traces: list[Trace], payload_keys: tuple[str, ...] = ()) -> EventLog:
    return EventLog.from_traces(traces, payload_keys)


def simple_log(rows: list[tuple[str, list[str]]], spacing: float = 60) -> EventLog:
    """Traces from (case_id, activities) pairs; trace i starts i*spacing
    minutes in, so temporal order equals list order."""
    return make_log([
        make_trace(case_id, activities, start=i * spacing)
        for i, (case_id, activities) in enumerate(rows)
    ])


def uniform_log(n: int, activities: list[str]) -> EventLog:
    """n traces with identical control flow and staggered start times."""
    return simple_log([(f"case{i:03d}", list(activities)) for i in range(n)])


@pytest.fixture(scope="session")
def sample_csv_path() -> Path:
    return FIXTURES / "sample_log.csv"


@pytest.fixture(scope="session")
def sample_xes_path() -> Path:
    return FIXTURES / "sample_log.xes"


@pytest.fixture()
def sample_log(sample_csv_path):
    from smallog.log_io import load_log

    return load_log(sample_csv_path)
