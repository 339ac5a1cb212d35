"""Trace variant analysis: grouping traces by shared attribute projections.

Two traces belong to the same variant, relative to a chosen set of event
attributes, when their per-position projections agree once the shorter
trace is padded with absent values. Variant frequencies are exact
rationals, so distribution comparisons carry no float error.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigurationError, DomainError
from .event_model import (
    ACTIVITY,
    AttributeKey,
    AttributeKind,
    EventLog,
    Trace,
    attribute_of,
)

# Rows of projected values, one per event position. Trailing all-absent rows
# are stripped, so key equality coincides with padded positionwise equality.
VariantKey = tuple[tuple[object, ...], ...]


@dataclass(frozen=True)
class PerspectiveSet:
    """Ordered, duplicate-free attribute keys that define variant equality."""

    keys: tuple[AttributeKey, ...]
    allow_degenerate: bool = False

    def __post_init__(self) -> None:
        keys = tuple(self.keys)
        object.__setattr__(self, "keys", keys)
        if not keys:
            raise ConfigurationError("a perspective needs at least one attribute key")
        if len(set(keys)) != len(keys):
            raise ConfigurationError("perspective keys must not repeat")
        if not self.allow_degenerate:
            for key in keys:
                if key.kind in (AttributeKind.CASE_ID, AttributeKind.TIMESTAMP):
                    raise ConfigurationError(
                        f"a perspective on {key} would separate nearly every "
                        "trace; pass allow_degenerate to force it"
                    )

    def __str__(self) -> str:
        return ",".join(str(key) for key in self.keys)


DEFAULT_PERSPECTIVE = PerspectiveSet((ACTIVITY,))


def variant_key(trace: Trace, perspective: PerspectiveSet) -> VariantKey:
    """Canonical projection of a trace onto the perspective's attributes."""
    rows = []
    for event in trace:
        try:
            rows.append(tuple(attribute_of(event, key) for key in perspective.keys))
        except KeyError:
            raise DomainError(
                f"perspective {perspective} reads a payload attribute the log "
                "does not declare"
            ) from None
    while rows and all(value is None for value in rows[-1]):
        rows.pop()
    return tuple(rows)


@dataclass(frozen=True)
class VariantPartition:
    """Quotient of a log by variant equality under one perspective."""

    perspective: PerspectiveSet
    classes: Mapping[VariantKey, tuple[str, ...]]
    log_size: int


def partition(log: EventLog, perspective: PerspectiveSet) -> VariantPartition:
    """Group a log's traces into variant classes.

    Class members are sorted case ids; iteration order of the classes is
    deterministic (by first encounter over sorted case ids).
    """
    for key in perspective.keys:
        if key.kind is AttributeKind.PAYLOAD and key.name not in log.payload_keys:
            raise DomainError(
                f"perspective key {key} is not declared in this log "
                f"(declared payload attributes: {', '.join(log.payload_keys) or 'none'})"
            )
    classes: dict[VariantKey, list[str]] = {}
    for case_id in sorted(log.case_ids):
        key = variant_key(log.traces[case_id], perspective)
        classes.setdefault(key, []).append(case_id)
    frozen = {key: tuple(members) for key, members in classes.items()}
    return VariantPartition(perspective, frozen, len(log))


@dataclass(frozen=True)
class VariantDistribution:
    """Empirical variant probabilities; values sum to exactly 1."""

    probabilities: Mapping[VariantKey, Fraction]

    def get(self, key: VariantKey) -> Fraction:
        return self.probabilities.get(key, Fraction(0))


def distribution(part: VariantPartition) -> VariantDistribution:
    """Probability of each class: class size over log size, exactly."""
    if part.log_size == 0:
        raise DomainError("an empty log has no variant distribution")
    probabilities = {
        key: Fraction(len(members), part.log_size)
        for key, members in part.classes.items()
    }
    return VariantDistribution(probabilities)


def distribution_distance(d1: VariantDistribution, d2: VariantDistribution) -> Fraction:
    """Total variation distance: half the absolute probability differences,
    summed over the union of variant keys. Always in [0, 1]."""
    keys = set(d1.probabilities) | set(d2.probabilities)
    total = sum((abs(d1.get(key) - d2.get(key)) for key in keys), Fraction(0))
    return total / 2


def ranked_classes(part: VariantPartition) -> list[tuple[VariantKey, tuple[str, ...]]]:
    """Classes by descending size, ties by least member case id."""
    return sorted(part.classes.items(), key=lambda item: (-len(item[1]), item[1][0]))
