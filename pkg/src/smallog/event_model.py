"""In-memory event log model: attributed events, traces, logs, label registry.

Events carry three mandatory attributes (case id, activity, timestamp) and
optional ones (resource, named payload fields). ``None`` encodes the absent
marker for optional attributes; mandatory attributes are never absent.
All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime

from .errors import ConfigurationError, DomainError

#: Distinguished prediction target marking the end of a case. Reserved: it
#: must not occur as an activity, resource, or role in any loaded log.
END_MARKER = "⟂END"


class AttributeKind(enum.Enum):
    CASE_ID = "case_id"
    ACTIVITY = "activity"
    TIMESTAMP = "timestamp"
    RESOURCE = "resource"
    PAYLOAD = "payload"


@dataclass(frozen=True)
class AttributeKey:
    """One event attribute. Payload keys carry a non-empty name."""

    kind: AttributeKind
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind is AttributeKind.PAYLOAD:
            if not self.name:
                raise ConfigurationError("payload attribute keys need a non-empty name")
        elif self.name is not None:
            raise ConfigurationError(f"{self.kind.value} keys do not take a name")

    def __str__(self) -> str:
        return self.name if self.kind is AttributeKind.PAYLOAD else self.kind.value


CASE_ID = AttributeKey(AttributeKind.CASE_ID)
ACTIVITY = AttributeKey(AttributeKind.ACTIVITY)
TIMESTAMP = AttributeKey(AttributeKind.TIMESTAMP)
RESOURCE = AttributeKey(AttributeKind.RESOURCE)


def payload_key(name: str) -> AttributeKey:
    return AttributeKey(AttributeKind.PAYLOAD, name)


def parse_attribute_key(token: str) -> AttributeKey:
    """Parse a CLI token: a built-in attribute name, else a payload name."""
    token = token.strip()
    if not token:
        raise ConfigurationError("empty attribute key token")
    for kind in (AttributeKind.CASE_ID, AttributeKind.ACTIVITY,
                 AttributeKind.TIMESTAMP, AttributeKind.RESOURCE):
        if token == kind.value:
            return AttributeKey(kind)
    return payload_key(token)


@dataclass(frozen=True)
class Event:
    """A single recorded step. ``payload`` maps every payload key declared by
    the owning log to its value, with ``None`` for absent values."""

    event_id: str
    case_id: str
    activity: str
    timestamp: datetime
    resource: str | None = None
    payload: Mapping[str, str | None] = field(default_factory=dict)


def attribute_of(event: Event, key: AttributeKey) -> object:
    """Read one attribute value; ``None`` means the optional value is absent.

    Raises KeyError for a payload name the event's log does not declare.
    """
    if key.kind is AttributeKind.CASE_ID:
        return event.case_id
    if key.kind is AttributeKind.ACTIVITY:
        return event.activity
    if key.kind is AttributeKind.TIMESTAMP:
        return event.timestamp
    if key.kind is AttributeKind.RESOURCE:
        return event.resource
    assert key.name is not None
    if key.name not in event.payload:
        raise KeyError(f"payload attribute {key.name!r} is not declared for this log")
    return event.payload[key.name]


@dataclass(frozen=True)
class Trace:
    """Time-ordered, non-empty event sequence sharing one case id."""

    case_id: str
    events: tuple[Event, ...]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def end(self) -> datetime:
        return self.events[-1].timestamp


def trace_start(trace: Trace) -> datetime:
    """Timestamp of the first event; the temporal sort key for a trace."""
    return trace.start


def validate_trace(trace: Trace) -> list[str]:
    """Diagnostic report: one entry per violated trace invariant, empty if valid.

    Checks: non-empty, uniform case ids, non-decreasing timestamps,
    unique event ids. Positions are 1-based.
    """
    problems: list[str] = []
    if not trace.events:
        problems.append("empty trace")
        return problems
    seen_ids: set[str] = set()
    previous: datetime | None = None
    for position, event in enumerate(trace.events, start=1):
        if event.case_id != trace.case_id:
            problems.append(
                f"event {event.event_id} at position {position} carries case id "
                f"{event.case_id!r}, expected {trace.case_id!r}"
            )
        if event.event_id in seen_ids:
            problems.append(f"duplicate event id {event.event_id!r} at position {position}")
        seen_ids.add(event.event_id)
        if previous is not None and event.timestamp < previous:
            problems.append(f"decreasing timestamp at position {position}")
        previous = event.timestamp
    return problems


@dataclass(frozen=True)
class EventLog:
    """A set of completed traces keyed by case id.

    ``flagged`` holds case ids of traces a parser found unfit for the model
    (missing mandatory values), mapped to the defect reason; they carry no
    events and are dropped, and tallied, by preprocessing.
    """

    traces: Mapping[str, Trace]
    payload_keys: tuple[str, ...] = ()
    flagged: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_traces(
        cls,
        traces: Iterable[Trace],
        payload_keys: Iterable[str] = (),
        flagged: Mapping[str, str] | None = None,
    ) -> "EventLog":
        by_case: dict[str, Trace] = {}
        for trace in traces:
            if trace.case_id in by_case:
                raise DomainError(f"duplicate case id {trace.case_id!r}")
            by_case[trace.case_id] = trace
        return cls(by_case, tuple(sorted(set(payload_keys))), dict(flagged or {}))

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces.values())

    @property
    def case_ids(self) -> tuple[str, ...]:
        return tuple(self.traces)

    def event_count(self) -> int:
        return sum(len(trace) for trace in self)

    def restrict(self, case_ids: Iterable[str]) -> "EventLog":
        """Sub-log with the given traces, in the given order."""
        picked = {}
        for case_id in case_ids:
            if case_id not in self.traces:
                raise DomainError(f"unknown case id {case_id!r}")
            picked[case_id] = self.traces[case_id]
        return EventLog(picked, self.payload_keys, {})


@dataclass(frozen=True)
class RoleSource:
    """How an event's role label is derived.

    In order of precedence: the named payload attribute when the log
    declares it, else the resource-to-role ``mapping``, else the resource
    itself acts as the role.
    """

    attribute: str | None = "org:role"
    mapping: Mapping[str, str] | None = None


def role_of(event: Event, source: RoleSource) -> str | None:
    """Derived role of an event, ``None`` when it cannot be derived."""
    if source.attribute is not None and source.attribute in event.payload:
        return event.payload[source.attribute]
    if source.mapping is not None:
        if event.resource is None:
            return None
        if event.resource not in source.mapping:
            raise ConfigurationError(
                f"role mapping does not cover resource {event.resource!r}"
            )
        return source.mapping[event.resource]
    return event.resource


@dataclass(frozen=True)
class LabelRegistry:
    """The buffered label universe of a reference log.

    Extracted from the full log before any split or reduction, so every
    label a predictor may meet later is registered even when no training
    sample carries it. Label tuples are sorted, which keeps label-index
    assignment reproducible across runs.
    """

    activities: tuple[str, ...]
    resources: tuple[str, ...]
    roles: tuple[str, ...]
    end_marker: str = END_MARKER

    def activity_targets(self) -> tuple[str, ...]:
        """Prediction target space for next-activity tasks."""
        return self.activities + (self.end_marker,)

    def role_targets(self) -> tuple[str, ...]:
        """Prediction target space for next-role tasks."""
        return self.roles + (self.end_marker,)

    def covers(self, other: "LabelRegistry") -> bool:
        return (
            set(self.activities) >= set(other.activities)
            and set(self.resources) >= set(other.resources)
            and set(self.roles) >= set(other.roles)
        )


def extract_registry(log: EventLog, role_source: RoleSource | None = None) -> LabelRegistry:
    """Collect all activities, resources, and derived roles of a log.

    Call this on the reference log before splitting or reducing; sub-logs
    can only ever shrink the label sets.
    """
    source = role_source or RoleSource()
    if source.mapping is not None:
        resources_in_log = {
            event.resource for trace in log for event in trace if event.resource is not None
        }
        attribute_mode = source.attribute is not None and source.attribute in log.payload_keys
        if not attribute_mode:
            unknown = sorted(set(source.mapping) - resources_in_log)
            if unknown:
                raise ConfigurationError(
                    f"role mapping references unknown resources: {', '.join(unknown)}"
                )
            uncovered = sorted(resources_in_log - set(source.mapping))
            if uncovered:
                raise ConfigurationError(
                    f"role mapping does not cover resources: {', '.join(uncovered)}"
                )

    activities: set[str] = set()
    resources: set[str] = set()
    roles: set[str] = set()
    for trace in log:
        for event in trace:
            activities.add(event.activity)
            if event.resource is not None:
                resources.add(event.resource)
            role = role_of(event, source)
            if role is not None:
                roles.add(role)
    for label_set, what in ((activities, "an activity"), (resources, "a resource"), (roles, "a role")):
        if END_MARKER in label_set:
            raise DomainError(f"reserved label {END_MARKER!r} occurs as {what} in the log")
    return LabelRegistry(
        activities=tuple(sorted(activities)),
        resources=tuple(sorted(resources)),
        roles=tuple(sorted(roles)),
    )
