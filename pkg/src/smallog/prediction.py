"""Next-label prediction: instance generation, a built-in baseline, and the
file protocol through which external predictors are evaluated.

An instance is a trace prefix paired with the label that follows it; the
final prefix of every trace targets the end marker, so predictors also
learn when a case is over. The built-in baseline is a back-off frequency
model: it looks up the longest seen suffix of the prefix, falls back to
shorter suffixes, then to the global label frequency, and as a last resort
names the lexicographically least registered label. Ties always break
lexicographically, which keeps every prediction reproducible.

External predictors are separate programs. They receive the training log,
the label registry, and the instances as files, and answer with one label
per line. The registry tells them the full label universe of the reference
log, so labels missing from a reduced training log can still be encoded.
"""

from __future__ import annotations

import csv
import io
import shlex
import subprocess
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, DomainError, ProtocolError, PredictorFailure
from .event_model import (
    END_MARKER,
    Event,
    EventLog,
    LabelRegistry,
    RoleSource,
    Trace,
    role_of,
)
from .log_io import write_canonical

TASKS = ("next_activity", "next_role")
PREDICTOR_KINDS = ("builtin_markov", "external")

ROLE_COLUMN = "role"
_PREFIX_JOIN = "|"

TRAIN_FILE = "train.csv"
REGISTRY_FILE = "registry.txt"
INSTANCES_FILE = "instances.csv"
PREDICTIONS_FILE = "predictions.txt"

_INSTANCE_COLUMNS = ("case_id", "prefix_length", "prefix_activities", "prefix_roles", "task")


def check_task(task: str) -> str:
    if task not in TASKS:
        raise ConfigurationError(
            f"unknown task {task!r}; expected one of {', '.join(TASKS)}"
        )
    return task


def target_space(registry: LabelRegistry, task: str) -> tuple[str, ...]:
    """All labels a predictor may answer with for a task."""
    check_task(task)
    if task == "next_activity":
        return registry.activity_targets()
    return registry.role_targets()


@dataclass(frozen=True)
class PredictionInstance:
    """A trace prefix and, when known, the label that follows it."""

    case_id: str
    prefix: tuple[tuple[str, str | None], ...]
    prefix_length: int
    target: str | None = None


def _trace_roles(trace: Trace, source: RoleSource) -> list[str | None]:
    return [role_of(event, source) for event in trace]


def generate_instances(
    log: EventLog,
    task: str,
    registry: LabelRegistry,
    role_source: RoleSource | None = None,
) -> list[PredictionInstance]:
    """One instance per prefix length per trace, ordered by (case id, length).

    Every label that can become a target is checked against the registry;
    an unregistered label means the registry was extracted from the wrong
    log (it must come from the reference log, before splitting or reducing).
    """
    check_task(task)
    source = role_source or RoleSource()
    known_activities = set(registry.activities)
    known_roles = set(registry.roles)
    instances: list[PredictionInstance] = []
    for case_id in sorted(log.case_ids):
        trace = log.traces[case_id]
        roles = _trace_roles(trace, source)
        activities = [event.activity for event in trace]
        for activity in activities:
            if activity not in known_activities:
                raise DomainError(
                    f"activity {activity!r} is not in the registry; the registry "
                    "must be extracted from the reference log before any split "
                    "or reduction"
                )
        if task == "next_role":
            for position, role in enumerate(roles, start=1):
                if role is None:
                    raise DomainError(
                        f"case {case_id!r} has no derivable role at position "
                        f"{position}; preprocess with require_resource or "
                        "configure a role mapping"
                    )
                if role not in known_roles:
                    raise DomainError(
                        f"role {role!r} is not in the registry; the registry "
                        "must be extracted from the reference log before any "
                        "split or reduction"
                    )
        pairs = tuple(zip(activities, roles))
        labels = activities if task == "next_activity" else roles
        for length in range(1, len(trace) + 1):
            target = labels[length] if length < len(trace) else END_MARKER
            instances.append(
                PredictionInstance(case_id, pairs[:length], length, target)
            )
    return instances


@dataclass(frozen=True)
class BaselineModel:
    """Back-off frequency tables: context window of length j maps to counts
    of the label that followed it in training; the empty window is global."""

    task: str
    order: int
    tables: Mapping[tuple[str, ...], Mapping[str, int]]
    targets: tuple[str, ...]


def _label_sequence(trace: Trace, task: str, source: RoleSource) -> list[str]:
    if task == "next_activity":
        return [event.activity for event in trace]
    roles = _trace_roles(trace, source)
    for position, role in enumerate(roles, start=1):
        if role is None:
            raise DomainError(
                f"case {trace.case_id!r} has no derivable role at position "
                f"{position}; preprocess with require_resource or configure "
                "a role mapping"
            )
    return roles  # type: ignore[return-value]


def train_baseline(
    train: EventLog,
    task: str,
    order: int,
    registry: LabelRegistry,
    role_source: RoleSource | None = None,
) -> BaselineModel:
    """Count, for every context window up to ``order`` labels long, which
    label followed it. The first label of a trace is never a target; the
    end marker always is."""
    check_task(task)
    if order < 1:
        raise ConfigurationError(f"baseline order must be at least 1, got {order}")
    if len(train) == 0:
        raise DomainError("cannot train on an empty log")
    source = role_source or RoleSource()
    tables: dict[tuple[str, ...], dict[str, int]] = {(): {}}
    for trace in train:
        labels = _label_sequence(trace, task, source) + [END_MARKER]
        for position in range(1, len(labels)):
            target = labels[position]
            for j in range(0, min(order, position) + 1):
                window = tuple(labels[position - j:position])
                counts = tables.setdefault(window, {})
                counts[target] = counts.get(target, 0) + 1
    return BaselineModel(task, order, tables, target_space(registry, task))


def predict(model: BaselineModel, instance: PredictionInstance) -> str:
    """Longest matching context wins; ties break lexicographically; an
    untrained model answers the least registered label."""
    if model.task == "next_activity":
        labels: list[str | None] = [activity for activity, _ in instance.prefix]
    else:
        labels = [role for _, role in instance.prefix]
    for j in range(min(model.order, len(labels)), -1, -1):
        window = tuple(labels[len(labels) - j:])
        counts = model.tables.get(window)  # type: ignore[arg-type]
        if counts:
            top = max(counts.values())
            return min(label for label, count in counts.items() if count == top)
    return min(model.targets)


def predict_all(model: BaselineModel, instances: Sequence[PredictionInstance]) -> list[str]:
    return [predict(model, instance) for instance in instances]


@dataclass(frozen=True)
class PredictorHandle:
    """A predictor the experiment can invoke.

    builtin_markov runs in-process at the given order. external predictors
    run as a command; the template's {train}, {instances}, {registry}, and
    {out} placeholders are replaced with file paths inside the cell's
    scratch directory.
    """

    name: str
    kind: str = "builtin_markov"
    order: int = 3
    command: str | None = None
    cwd: str | None = None
    timeout: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in PREDICTOR_KINDS:
            raise ConfigurationError(
                f"unknown predictor kind {self.kind!r}; "
                f"expected one of {', '.join(PREDICTOR_KINDS)}"
            )
        if not self.name or "/" in self.name or self.name != self.name.strip():
            raise ConfigurationError(
                f"predictor name {self.name!r} must be non-empty, trimmed, "
                "and free of path separators (it names files and table columns)"
            )
        if self.kind == "external":
            if not self.command:
                raise ConfigurationError(
                    f"external predictor {self.name!r} needs a command template"
                )
            missing = [
                p for p in ("{train}", "{instances}", "{out}") if p not in self.command
            ]
            if missing:
                raise ConfigurationError(
                    f"external predictor {self.name!r} command template lacks "
                    f"placeholders: {', '.join(missing)}"
                )
        elif self.command is not None:
            raise ConfigurationError(
                f"builtin predictor {self.name!r} does not take a command"
            )


def with_role_payload(log: EventLog, role_source: RoleSource | None = None) -> EventLog:
    """Copy of the log with each event's derived role materialized as the
    payload column ``role``, so external predictors need no role logic."""
    source = role_source or RoleSource()
    keys = tuple(sorted(set(log.payload_keys) | {ROLE_COLUMN}))
    traces = []
    for trace in log:
        events = tuple(
            Event(
                event.event_id,
                event.case_id,
                event.activity,
                event.timestamp,
                event.resource,
                {**event.payload, ROLE_COLUMN: role_of(event, source)},
            )
            for event in trace
        )
        traces.append(Trace(trace.case_id, events))
    return EventLog.from_traces(traces, keys, dict(log.flagged))


def write_registry_file(registry: LabelRegistry, path: str | Path) -> None:
    """Sections [activities] and [roles], one label per line, then the end
    marker under [end]."""
    lines = ["[activities]", *registry.activities, "[roles]", *registry.roles,
             "[end]", registry.end_marker]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_registry_file(path: str | Path) -> LabelRegistry:
    """Inverse of :func:`write_registry_file`. Resources are not part of the
    wire format; predictors only ever answer activity or role labels."""
    sections: dict[str, list[str]] = {"activities": [], "roles": [], "end": []}
    current: list[str] | None = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1]
            if name not in sections:
                raise ProtocolError(f"{path}: unknown registry section {line}")
            current = sections[name]
        elif current is None:
            raise ProtocolError(f"{path}: label {line!r} appears before any section")
        else:
            current.append(line)
    if len(sections["end"]) != 1:
        raise ProtocolError(f"{path}: registry needs exactly one [end] marker line")
    return LabelRegistry(
        activities=tuple(sections["activities"]),
        resources=(),
        roles=tuple(sections["roles"]),
        end_marker=sections["end"][0],
    )


def _check_protocol_label(label: str | None, where: str) -> None:
    if label is None:
        return
    if _PREFIX_JOIN in label or "\n" in label or "\r" in label:
        raise DomainError(
            f"{where} label {label!r} contains a protocol delimiter "
            f"({_PREFIX_JOIN!r} or a line break) and cannot be serialized"
        )


def write_instances_file(
    instances: Sequence[PredictionInstance], task: str, path: str | Path
) -> None:
    """Instance rows for external predictors; targets are deliberately
    absent from this file."""
    check_task(task)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(_INSTANCE_COLUMNS)
    for instance in instances:
        for activity, role in instance.prefix:
            _check_protocol_label(activity, "activity")
            _check_protocol_label(role, "role")
        writer.writerow([
            instance.case_id,
            str(instance.prefix_length),
            _PREFIX_JOIN.join(activity for activity, _ in instance.prefix),
            _PREFIX_JOIN.join(role or "" for _, role in instance.prefix),
            task,
        ])
    Path(path).write_bytes(buffer.getvalue().encode("utf-8"))


def read_instances_file(path: str | Path) -> tuple[list[PredictionInstance], str]:
    """Inverse of :func:`write_instances_file`; returns (instances, task)."""
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ProtocolError(f"{path}: instances file is empty") from None
        if header != _INSTANCE_COLUMNS:
            raise ProtocolError(
                f"{path}: expected header {','.join(_INSTANCE_COLUMNS)}, "
                f"got {','.join(header)}"
            )
        instances: list[PredictionInstance] = []
        task: str | None = None
        for row in reader:
            if len(row) != len(_INSTANCE_COLUMNS):
                raise ProtocolError(f"{path}: malformed instance row {row!r}")
            case_id, raw_length, raw_activities, raw_roles, row_task = row
            if task is None:
                task = check_task(row_task)
            elif row_task != task:
                raise ProtocolError(f"{path}: mixed tasks {task!r} and {row_task!r}")
            activities = raw_activities.split(_PREFIX_JOIN)
            roles = [r if r != "" else None for r in raw_roles.split(_PREFIX_JOIN)]
            length = int(raw_length)
            if len(activities) != length or len(roles) != length:
                raise ProtocolError(
                    f"{path}: prefix fields of case {case_id!r} do not match "
                    f"prefix_length {length}"
                )
            instances.append(
                PredictionInstance(case_id, tuple(zip(activities, roles)), length)
            )
    if task is None:
        raise ProtocolError(f"{path}: instances file has no rows")
    return instances, task


def write_targets_file(
    instances: Sequence[PredictionInstance], path: str | Path
) -> None:
    """One true label per line, aligned with the instances file."""
    for instance in instances:
        if instance.target is None:
            raise DomainError(
                f"instance of case {instance.case_id!r} carries no target"
            )
    Path(path).write_text(
        "".join(f"{instance.target}\n" for instance in instances), encoding="utf-8"
    )


def read_label_lines(path: str | Path, expected: int, what: str) -> list[str]:
    """Read a one-label-per-line file and enforce the expected line count."""
    content = Path(path).read_text(encoding="utf-8")
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != expected:
        raise ProtocolError(
            f"{path}: expected {expected} {what} line(s), found {len(lines)}"
        )
    return lines


def run_external(
    handle: PredictorHandle,
    train: EventLog,
    instances: Sequence[PredictionInstance],
    registry: LabelRegistry,
    scratch: str | Path,
    task: str,
    role_source: RoleSource | None = None,
) -> list[str]:
    """Materialize the protocol files, invoke the command, read the answers.

    Raises PredictorFailure on nonzero exit or timeout and ProtocolError
    when the output does not answer every instance with a registered label.
    """
    if handle.kind != "external":
        raise ConfigurationError(f"predictor {handle.name!r} is not external")
    check_task(task)
    scratch = Path(scratch)
    scratch.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": scratch / TRAIN_FILE,
        "registry": scratch / REGISTRY_FILE,
        "instances": scratch / INSTANCES_FILE,
        "out": scratch / PREDICTIONS_FILE,
    }
    write_canonical(with_role_payload(train, role_source), paths["train"])
    write_registry_file(registry, paths["registry"])
    write_instances_file(instances, task, paths["instances"])

    assert handle.command is not None
    substitutions = {key: str(path) for key, path in paths.items()}
    argv = [token.format(**substitutions) for token in shlex.split(handle.command)]
    try:
        completed = subprocess.run(
            argv,
            cwd=handle.cwd,
            timeout=handle.timeout,
            capture_output=True,
            text=True,
        )
    except subprocess.TimeoutExpired:
        raise PredictorFailure(
            f"predictor {handle.name!r} exceeded its {handle.timeout}s timeout"
        ) from None
    except OSError as exc:
        raise PredictorFailure(f"predictor {handle.name!r} failed to start: {exc}") from exc
    if completed.returncode != 0:
        detail = (completed.stderr or "").strip().splitlines()
        tail = f": {detail[-1]}" if detail else ""
        raise PredictorFailure(
            f"predictor {handle.name!r} exited with code {completed.returncode}{tail}"
        )
    if not paths["out"].exists():
        raise ProtocolError(
            f"predictor {handle.name!r} exited 0 but wrote no {PREDICTIONS_FILE}"
        )
    predictions = read_label_lines(paths["out"], len(instances), "prediction")
    allowed = set(target_space(registry, task))
    for line_number, label in enumerate(predictions, start=1):
        if label not in allowed:
            raise ProtocolError(
                f"{paths['out']}: line {line_number} predicts {label!r}, "
                "which is not a registered label for this task"
            )
    return predictions
