"""Order-1 frequency predictor speaking the smallog external-predictor
file protocol.

Invocation: four positional paths, train instances registry out. The model
is a table from the last prefix label to next-label counts, with the global
count table as fallback; ties resolve to the lexicographically least label.
That is exactly the builtin baseline at order 1, which is the point: this
package exists to be copied when wiring a real model into the harness.
"""

from __future__ import annotations

import csv
import sys
from collections import Counter
from pathlib import Path

PREFIX_JOIN = "|"

INSTANCE_COLUMNS = ("case_id", "prefix_length", "prefix_activities",
                    "prefix_roles", "task")


class MalformedInput(Exception):
    """Anything that makes an input file unusable; reported on stderr."""


def read_registry(path: Path) -> str:
    """Only the end marker is needed here, but a registry without one (or
    without its section headers) is broken enough to refuse."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedInput(f"cannot read registry: {exc}") from exc
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1], [])
        elif current is None:
            raise MalformedInput(f"{path}: label {line!r} before any section")
        else:
            current.append(line)
    for required in ("activities", "roles", "end"):
        if required not in sections:
            raise MalformedInput(f"{path}: missing [{required}] section")
    if len(sections["end"]) != 1:
        raise MalformedInput(f"{path}: [end] must hold exactly one marker")
    return sections["end"][0]


def read_instances(path: Path) -> tuple[list[str], str | None]:
    """Last prefix label per instance, plus the task all rows agree on."""
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise MalformedInput(f"cannot read instances: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != INSTANCE_COLUMNS:
            raise MalformedInput(f"{path}: unexpected header {header!r}")
        last_labels: list[str] = []
        task: str | None = None
        for row_number, row in enumerate(reader, start=2):
            if len(row) != len(INSTANCE_COLUMNS):
                raise MalformedInput(f"{path}: row {row_number} has {len(row)} fields")
            _, _, activities, roles, row_task = row
            if row_task not in ("next_activity", "next_role"):
                raise MalformedInput(f"{path}: row {row_number} has task {row_task!r}")
            if task is None:
                task = row_task
            elif row_task != task:
                raise MalformedInput(f"{path}: mixed tasks {task!r} and {row_task!r}")
            joined = activities if task == "next_activity" else roles
            labels = joined.split(PREFIX_JOIN)
            if not labels or labels[-1] == "" and task == "next_activity":
                raise MalformedInput(f"{path}: row {row_number} has an empty prefix")
            last_labels.append(labels[-1])
    return last_labels, task


def train_tables(path: Path, task: str, end_marker: str):
    """Count next-label frequencies per last label, and globally.

    The training file is canonical: rows of one case are contiguous and in
    temporal order, so sequences rebuild by walking groups.
    """
    try:
        handle = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise MalformedInput(f"cannot read training log: {exc}") from exc
    by_last: dict[str, Counter] = {}
    overall: Counter = Counter()

    def absorb(sequence: list[str]) -> None:
        sequence = sequence + [end_marker]
        for position in range(1, len(sequence)):
            target = sequence[position]
            overall[target] += 1
            by_last.setdefault(sequence[position - 1], Counter())[target] += 1

    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise MalformedInput(f"{path}: training log has no header")
        needed = {"case_id", "activity"} if task == "next_activity" else {"case_id", "role"}
        missing = needed - set(reader.fieldnames)
        if missing:
            raise MalformedInput(
                f"{path}: training log lacks column(s) {', '.join(sorted(missing))}"
            )
        label_column = "activity" if task == "next_activity" else "role"
        current_case: str | None = None
        sequence: list[str] = []
        for row_number, row in enumerate(reader, start=2):
            case_id = row.get("case_id") or ""
            label = row.get(label_column) or ""
            if not case_id:
                raise MalformedInput(f"{path}: row {row_number} has no case id")
            if not label:
                raise MalformedInput(
                    f"{path}: row {row_number} has no {label_column}; cannot "
                    f"train a {task} model on it"
                )
            if case_id != current_case:
                if sequence:
                    absorb(sequence)
                current_case, sequence = case_id, []
            sequence.append(label)
        if sequence:
            absorb(sequence)
    if not overall:
        raise MalformedInput(f"{path}: training log holds no events")
    return by_last, overall


def best_label(counts: Counter) -> str:
    return min(counts.items(), key=lambda item: (-item[1], item[0]))[0]


def plugin_main(train: str, instances: str, registry: str, out: str) -> int:
    try:
        end_marker = read_registry(Path(registry))
        last_labels, task = read_instances(Path(instances))
        if task is None:
            # No instances, nothing to predict; an empty answer is complete.
            Path(out).write_text("", encoding="utf-8")
            return 0
        by_last, overall = train_tables(Path(train), task, end_marker)
    except MalformedInput as exc:
        print(f"smallog-frequency-plugin: {exc}", file=sys.stderr)
        return 1
    predictions = [
        best_label(by_last.get(last) or overall) for last in last_labels
    ]
    Path(out).write_text("".join(p + "\n" for p in predictions), encoding="utf-8")
    return 0


def cli(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 4:
        print(
            "usage: smallog-frequency-plugin TRAIN INSTANCES REGISTRY OUT",
            file=sys.stderr,
        )
        return 1
    return plugin_main(*argv)


if __name__ == "__main__":
    sys.exit(cli())
