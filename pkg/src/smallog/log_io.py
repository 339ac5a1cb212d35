"""Event log parsing (XES, CSV), preprocessing, and canonical serialization.

Timestamps are normalized to UTC instants at millisecond precision on load.
Traces whose events lack a mandatory value are not admitted into the model;
they are flagged on the log and removed, with reasons tallied, by
:func:`preprocess`. The canonical CSV writer is deterministic: the same log
content always serializes to the same bytes.
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
import re
import xml.etree.ElementTree as ET
from collections.abc import Iterable
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import BinaryIO

from .errors import ConfigurationError, ParseError
from .event_model import Event, EventLog, Trace

log = logging.getLogger(__name__)

CANONICAL_COLUMNS = ("case_id", "activity", "timestamp", "resource")

_GZIP_MAGIC = b"\x1f\x8b"

_ISO_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d+))?"
    r"(Z|z|[+-]\d{2}:?\d{2})?$"
)


def parse_timestamp(text: str, fmt: str = "iso8601") -> datetime:
    """Parse a timestamp and normalize it to a UTC instant, millisecond precision.

    ``fmt`` is either the literal ``"iso8601"`` or a ``strptime`` pattern.
    Values without a zone designator are taken as UTC.
    """
    text = text.strip()
    if fmt == "iso8601":
        match = _ISO_RE.match(text)
        if not match:
            raise ParseError(f"unparseable ISO-8601 timestamp {text!r}")
        year, month, day, hour, minute, second = (int(g) for g in match.groups()[:6])
        fraction = match.group(7) or ""
        microsecond = int(fraction[:6].ljust(6, "0")) if fraction else 0
        zone = match.group(8)
        try:
            parsed = datetime(year, month, day, hour, minute, second, microsecond)
        except ValueError as exc:
            raise ParseError(f"unparseable timestamp {text!r}: {exc}") from exc
        if zone and zone not in ("Z", "z"):
            sign = 1 if zone[0] == "+" else -1
            offset_h = int(zone[1:3])
            offset_m = int(zone.replace(":", "")[3:5])
            parsed -= sign * timedelta(hours=offset_h, minutes=offset_m)
    else:
        try:
            parsed = datetime.strptime(text, fmt)
        except ValueError as exc:
            raise ParseError(f"timestamp {text!r} does not match format {fmt!r}") from exc
        if parsed.tzinfo is not None:
            parsed = parsed.astimezone(timezone.utc).replace(tzinfo=None)
    parsed = parsed.replace(microsecond=parsed.microsecond - parsed.microsecond % 1000)
    return parsed.replace(tzinfo=timezone.utc)


def format_timestamp(instant: datetime) -> str:
    """Canonical text form: ``YYYY-MM-DDTHH:MM:SS.sssZ``."""
    utc = instant.astimezone(timezone.utc)
    return f"{utc.strftime('%Y-%m-%dT%H:%M:%S')}.{utc.microsecond // 1000:03d}Z"


@dataclass(frozen=True)
class ColumnMapping:
    """Declares which CSV columns carry which event attributes."""

    case_column: str
    activity_column: str
    timestamp_column: str
    timestamp_format: str = "iso8601"
    resource_column: str | None = None
    payload_columns: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        mandatory = (self.case_column, self.activity_column, self.timestamp_column)
        if len(set(mandatory)) != 3:
            raise ConfigurationError("case, activity, and timestamp columns must be distinct")
        object.__setattr__(self, "payload_columns", tuple(self.payload_columns))


CANONICAL_MAPPING = ColumnMapping(
    case_column="case_id",
    activity_column="activity",
    timestamp_column="timestamp",
    resource_column="resource",
)


def canonical_mapping(header: Iterable[str]) -> ColumnMapping | None:
    """Mapping for a canonical-format header, or None if it is not one."""
    columns = tuple(header)
    if columns[: len(CANONICAL_COLUMNS)] != CANONICAL_COLUMNS:
        return None
    return ColumnMapping(
        case_column="case_id",
        activity_column="activity",
        timestamp_column="timestamp",
        resource_column="resource",
        payload_columns=tuple(columns[len(CANONICAL_COLUMNS):]),
    )


@dataclass(frozen=True)
class PreprocessPolicy:
    require_resource: bool = False
    min_length: int = 1


@dataclass(frozen=True)
class PreprocessReport:
    input_traces: int
    removed_traces: int
    removal_reasons: dict[str, int] = field(default_factory=dict)


def _open_binary(source: str | Path | BinaryIO) -> BinaryIO:
    if isinstance(source, (str, Path)):
        stream: BinaryIO = open(source, "rb")
    else:
        stream = source
    if not stream.seekable():
        raise ParseError("log sources must be seekable streams or paths")
    head = stream.read(2)
    stream.seek(-len(head), io.SEEK_CUR)
    if head == _GZIP_MAGIC:
        return gzip.open(stream, "rb")  # type: ignore[return-value]
    return stream


def _local_tag(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


_XES_VALUE_TAGS = {"string", "date", "int", "float", "boolean", "id"}


def _xes_attribute_text(element: ET.Element) -> str:
    """Render an XES attribute value as canonical text."""
    tag = _local_tag(element.tag)
    value = element.get("value", "")
    if tag == "date":
        return format_timestamp(parse_timestamp(value))
    if tag == "boolean":
        return value.strip().lower()
    return value


def parse_xes(source: str | Path | BinaryIO) -> EventLog:
    """Parse an XES document (optionally gzip-compressed).

    ``concept:name`` becomes the case id (trace level) and activity (event
    level); ``time:timestamp`` the timestamp; ``org:resource`` the resource.
    Every other event attribute, ``org:role`` included, is kept as a payload
    field. Events are re-sorted stably by timestamp within each trace.
    Traces with an event missing a mandatory value are flagged for removal
    by preprocessing rather than failing the parse.
    """
    stream = _open_binary(source)
    try:
        tree = ET.parse(stream)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XES XML: {exc}") from exc
    root = tree.getroot()
    if _local_tag(root.tag) != "log":
        raise ParseError(f"expected a <log> root element, found <{_local_tag(root.tag)}>")

    traces: list[Trace] = []
    flagged: dict[str, str] = {}
    payload_keys: set[str] = set()
    seen_cases: set[str] = set()
    event_counter = 0
    unnamed = 0

    for child in root:
        tag = _local_tag(child.tag)
        if tag != "trace":
            if tag not in ("extension", "global", "classifier") and tag not in _XES_VALUE_TAGS:
                log.debug("ignoring <%s> element at log level", tag)
            continue
        case_id: str | None = None
        for attr in child:
            if _local_tag(attr.tag) in _XES_VALUE_TAGS and attr.get("key") == "concept:name":
                case_id = attr.get("value")
                break
        if case_id is None:
            unnamed += 1
            flagged[f"<unnamed trace {unnamed}>"] = "missing_case_id"
            continue
        if case_id in seen_cases:
            raise ParseError(f"duplicate case id {case_id!r} in XES input")
        seen_cases.add(case_id)

        events: list[Event] = []
        defect: str | None = None
        for element in child:
            if _local_tag(element.tag) != "event":
                continue
            event_counter += 1
            activity: str | None = None
            timestamp: datetime | None = None
            resource: str | None = None
            payload: dict[str, str | None] = {}
            for attr in element:
                if _local_tag(attr.tag) not in _XES_VALUE_TAGS:
                    continue
                key = attr.get("key", "")
                if key == "concept:name":
                    activity = attr.get("value")
                elif key == "time:timestamp":
                    timestamp = parse_timestamp(attr.get("value", ""))
                elif key == "org:resource":
                    value = attr.get("value", "")
                    resource = value if value != "" else None
                elif key:
                    text = _xes_attribute_text(attr)
                    payload[key] = text if text != "" else None
            if activity is None:
                defect = defect or "missing_activity"
                continue
            if timestamp is None:
                defect = defect or "missing_timestamp"
                continue
            payload_keys.update(payload)
            events.append(
                Event(
                    event_id=f"e{event_counter}",
                    case_id=case_id,
                    activity=activity,
                    timestamp=timestamp,
                    resource=resource,
                    payload=payload,
                )
            )
        if defect is not None:
            flagged[case_id] = defect
        elif not events:
            flagged[case_id] = "empty_trace"
        else:
            events.sort(key=lambda e: e.timestamp)
            traces.append(Trace(case_id, tuple(events)))

    keys = tuple(sorted(payload_keys))
    normalized = [
        Trace(t.case_id, tuple(_with_declared_payload(e, keys) for e in t.events))
        for t in traces
    ]
    return EventLog.from_traces(normalized, keys, flagged)


def _with_declared_payload(event: Event, keys: tuple[str, ...]) -> Event:
    payload = {key: event.payload.get(key) for key in keys}
    return Event(event.event_id, event.case_id, event.activity,
                 event.timestamp, event.resource, payload)


def parse_csv(source: str | Path | BinaryIO, mapping: ColumnMapping) -> EventLog:
    """Parse a delimited event log per ``mapping``.

    Rows are grouped by the case column; events are ordered by parsed
    timestamp with ties keeping file order. Empty cells in optional columns
    become absent values; an empty mandatory cell flags the whole trace for
    preprocessing removal. A non-empty, unparseable timestamp is a hard
    parse error naming the offending line.
    """
    stream = _open_binary(source)
    text = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("CSV input is empty, expected a header row") from None

    positions: dict[str, int] = {}
    wanted = [mapping.case_column, mapping.activity_column, mapping.timestamp_column]
    if mapping.resource_column:
        wanted.append(mapping.resource_column)
    wanted.extend(mapping.payload_columns)
    for column in wanted:
        if column not in header:
            raise ParseError(f"CSV header is missing mapped column {column!r}")
        positions[column] = header.index(column)

    rows_by_case: dict[str, list[Event]] = {}
    flagged: dict[str, str] = {}
    unnamed = 0
    event_counter = 0
    for line_number, row in enumerate(reader, start=2):
        if not row or all(cell == "" for cell in row):
            continue

        def cell(column: str) -> str:
            index = positions[column]
            return row[index] if index < len(row) else ""

        case_id = cell(mapping.case_column)
        if case_id == "":
            unnamed += 1
            flagged[f"<unnamed trace {unnamed}>"] = "missing_case_id"
            continue
        activity = cell(mapping.activity_column)
        raw_timestamp = cell(mapping.timestamp_column)
        if activity == "":
            flagged.setdefault(case_id, "missing_activity")
            continue
        if raw_timestamp == "":
            flagged.setdefault(case_id, "missing_timestamp")
            continue
        try:
            timestamp = parse_timestamp(raw_timestamp, mapping.timestamp_format)
        except ParseError as exc:
            raise ParseError(f"line {line_number}: {exc}") from None
        resource = cell(mapping.resource_column) if mapping.resource_column else ""
        event_counter += 1
        payload = {
            column: (cell(column) if cell(column) != "" else None)
            for column in mapping.payload_columns
        }
        rows_by_case.setdefault(case_id, []).append(
            Event(
                event_id=f"e{event_counter}",
                case_id=case_id,
                activity=activity,
                timestamp=timestamp,
                resource=resource if resource != "" else None,
                payload=payload,
            )
        )

    keys = tuple(sorted(mapping.payload_columns))
    traces = []
    for case_id, events in rows_by_case.items():
        if case_id in flagged:
            continue
        events.sort(key=lambda e: e.timestamp)
        traces.append(Trace(case_id, tuple(_with_declared_payload(e, keys) for e in events)))
    return EventLog.from_traces(traces, keys, flagged)


def load_log(path: str | Path, fmt: str | None = None,
             mapping: ColumnMapping | None = None) -> EventLog:
    """Load a log by format, inferring ``fmt`` from the file suffix if absent.

    CSV files without an explicit mapping must be in canonical format.
    """
    path = Path(path)
    if fmt is None:
        name = path.name.lower()
        if name.endswith((".xes", ".xes.gz")):
            fmt = "xes"
        elif name.endswith((".csv", ".csv.gz")):
            fmt = "csv"
        else:
            raise ConfigurationError(
                f"cannot infer the format of {path.name!r}; pass --format"
            )
    if fmt == "xes":
        return parse_xes(path)
    if fmt == "csv":
        if mapping is None:
            with open(path, "rb") as probe:
                head_stream = _open_binary(probe)
                text = io.TextIOWrapper(head_stream, encoding="utf-8", newline="")
                try:
                    header = next(csv.reader(text))
                except StopIteration:
                    raise ParseError(f"{path}: CSV input is empty") from None
            mapping = canonical_mapping(header)
            if mapping is None:
                raise ConfigurationError(
                    f"{path} is not in canonical column order; pass --mapping"
                )
        return parse_csv(path, mapping)
    raise ConfigurationError(f"unknown log format {fmt!r}; expected 'xes' or 'csv'")


def preprocess(log_: EventLog, policy: PreprocessPolicy | None = None) -> tuple[EventLog, PreprocessReport]:
    """Drop traces unfit for analysis and tally why.

    Removes parser-flagged traces, traces with any event lacking a resource
    (when the policy requires one), and traces shorter than the minimum
    length. Removal is always whole-trace, never per-event. Idempotent.
    """
    policy = policy or PreprocessPolicy()
    reasons: dict[str, int] = {}
    for reason in log_.flagged.values():
        reasons[reason] = reasons.get(reason, 0) + 1
    survivors: dict[str, Trace] = {}
    for case_id, trace in log_.traces.items():
        if policy.require_resource and any(e.resource is None for e in trace):
            reasons["missing_resource"] = reasons.get("missing_resource", 0) + 1
            continue
        if len(trace) < policy.min_length:
            reasons["too_short"] = reasons.get("too_short", 0) + 1
            continue
        survivors[case_id] = trace
    input_traces = len(log_.traces) + len(log_.flagged)
    removed = input_traces - len(survivors)
    report = PreprocessReport(input_traces, removed, dict(sorted(reasons.items())))
    return EventLog(survivors, log_.payload_keys, {}), report


def canonical_rows(log_: EventLog) -> list[list[str]]:
    """Header plus one row per event, in canonical order."""
    columns = list(CANONICAL_COLUMNS) + sorted(log_.payload_keys)
    rows = [columns]
    for trace in sorted(log_, key=lambda t: (t.start, t.case_id)):
        for event in trace:
            row = [
                event.case_id,
                event.activity,
                format_timestamp(event.timestamp),
                event.resource or "",
            ]
            row.extend(event.payload.get(key) or "" for key in sorted(log_.payload_keys))
            rows.append(row)
    return rows


def canonical_bytes(log_: EventLog) -> bytes:
    """Deterministic CSV serialization; equal logs give equal bytes."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerows(canonical_rows(log_))
    return buffer.getvalue().encode("utf-8")


def write_canonical(log_: EventLog, sink: str | Path | BinaryIO) -> None:
    """Serialize to canonical CSV: traces ordered by (start, case id),
    events in trace order, fixed column order, ISO-8601 UTC timestamps."""
    data = canonical_bytes(log_)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
    else:
        sink.write(data)


def content_equal(first: EventLog, second: EventLog) -> bool:
    """Event-model content equality, ignoring synthesized event ids."""
    return (
        first.payload_keys == second.payload_keys
        and canonical_bytes(first) == canonical_bytes(second)
    )


def mapping_from_toml(path: str | Path) -> ColumnMapping:
    """Load a ColumnMapping from a TOML file."""
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib  # type: ignore[no-redef]
    with open(path, "rb") as handle:
        raw = tomllib.load(handle)
    try:
        return ColumnMapping(
            case_column=raw["case_column"],
            activity_column=raw["activity_column"],
            timestamp_column=raw["timestamp_column"],
            timestamp_format=raw.get("timestamp_format", "iso8601"),
            resource_column=raw.get("resource_column"),
            payload_columns=tuple(raw.get("payload_columns", ())),
        )
    except KeyError as exc:
        raise ConfigurationError(f"{path}: missing mapping key {exc.args[0]!r}") from None
