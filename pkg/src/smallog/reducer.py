"""Controlled shrinking of training logs.

A reduction removes a whole-trace share of the training side, never the
test side, simulating the small logs that real projects start from. Four
removal orders are supported: seeded random, oldest first, newest first,
and targeted at chosen variant classes. Every reduction yields a manifest
naming exactly which cases were removed.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError, DomainError, ParseError
from .event_model import EventLog
from .rng import shuffled
from .variants import (
    PerspectiveSet,
    VariantKey,
    distribution,
    distribution_distance,
    partition,
    variant_key,
)

REDUCTION_METHODS = ("random", "temporal_oldest", "temporal_newest", "variant_targeted")


@dataclass(frozen=True)
class ReductionSpec:
    """How much to remove and in which order."""

    factor: Fraction
    method: str = "random"
    seed: int | None = None
    perspective: PerspectiveSet | None = None
    target_variants: frozenset[VariantKey] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "factor", Fraction(self.factor))
        if not 0 <= self.factor < 1:
            raise ConfigurationError(
                f"reduction factor must be in [0, 1), got {self.factor}"
            )
        if self.method not in REDUCTION_METHODS:
            raise ConfigurationError(
                f"unknown reduction method {self.method!r}; "
                f"expected one of {', '.join(REDUCTION_METHODS)}"
            )
        if self.method == "random":
            if self.seed is None:
                raise ConfigurationError("a random reduction needs a seed")
            if not 0 <= self.seed < 2**64:
                raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if self.method == "variant_targeted":
            if not self.target_variants:
                raise ConfigurationError(
                    "a variant-targeted reduction needs a non-empty target variant set"
                )
            if self.perspective is None:
                raise ConfigurationError(
                    "a variant-targeted reduction needs the perspective its "
                    "target variants were keyed under"
                )


@dataclass(frozen=True)
class RemovalManifest:
    method: str
    factor: Fraction
    seed: int | None
    removed: tuple[str, ...]
    shortfall: int = 0


def removal_count(factor: Fraction, n: int) -> int:
    """Traces to remove: round half-even, capped so one trace always survives."""
    return min(round(factor * n), n - 1)


def reduce(train: EventLog, spec: ReductionSpec) -> tuple[EventLog, RemovalManifest]:
    """Remove a factor-sized share of traces from a training log.

    Removal is whole-trace; kept traces are untouched. variant_targeted
    removes earliest-starting members of the target classes first and
    records a shortfall when the classes cannot cover the requested count.
    """
    n = len(train)
    if n == 0:
        raise DomainError("cannot reduce an empty log")
    count = removal_count(spec.factor, n)
    ascending = sorted(train.case_ids, key=lambda cid: (train.traces[cid].start, cid))
    shortfall = 0
    if count == 0:
        victims: list[str] = []
    elif spec.method == "temporal_oldest":
        victims = ascending[:count]
    elif spec.method == "temporal_newest":
        victims = ascending[-count:]
    elif spec.method == "random":
        victims = shuffled(train.case_ids, spec.seed or 0)[:count]
    else:
        assert spec.target_variants is not None and spec.perspective is not None
        candidates = [
            cid for cid in ascending
            if variant_key(train.traces[cid], spec.perspective) in spec.target_variants
        ]
        victims = candidates[:count]
        shortfall = max(0, count - len(candidates))
    removed_set = set(victims)
    kept = [cid for cid in train.case_ids if cid not in removed_set]
    manifest = RemovalManifest(spec.method, spec.factor, spec.seed, tuple(victims), shortfall)
    return train.restrict(kept), manifest


def targets_from_cases(
    log: EventLog, case_ids: list[str], perspective: PerspectiveSet
) -> frozenset[VariantKey]:
    """Variant keys of the named cases; how target classes are pointed at."""
    keys = set()
    for case_id in case_ids:
        if case_id not in log.traces:
            raise DomainError(f"unknown case id {case_id!r}")
        keys.add(variant_key(log.traces[case_id], perspective))
    return frozenset(keys)


def reduction_bias(
    train: EventLog, reduced: EventLog, perspective: PerspectiveSet
) -> Fraction:
    """Total variation distance between the variant distributions of a
    training log and its reduction. 0 means the reduction kept the variant
    mix intact; larger values mean rarer variants were hit unevenly."""
    extra = set(reduced.case_ids) - set(train.case_ids)
    if extra:
        raise DomainError(
            f"reduced log is not a sub-log: unknown case ids {', '.join(sorted(extra)[:5])}"
        )
    return distribution_distance(
        distribution(partition(train, perspective)),
        distribution(partition(reduced, perspective)),
    )


def write_removal_manifest(manifest: RemovalManifest, path: str | Path) -> None:
    """Audit file: the spec, then one removed case id per line."""
    lines = [
        f"method={manifest.method}",
        f"factor={manifest.factor}",
        f"seed={'' if manifest.seed is None else manifest.seed}",
        f"shortfall={manifest.shortfall}",
        "[removed]",
        *manifest.removed,
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_removal_manifest(path: str | Path) -> RemovalManifest:
    """Inverse of :func:`write_removal_manifest`."""
    header: dict[str, str] = {}
    removed: list[str] = []
    in_removed = False
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "[removed]":
            in_removed = True
        elif in_removed:
            removed.append(line)
        elif "=" in line:
            key, _, value = line.partition("=")
            header[key] = value
        else:
            raise ParseError(f"{path}: unexpected manifest line {line!r}")
    try:
        return RemovalManifest(
            method=header["method"],
            factor=Fraction(header["factor"]),
            seed=int(header["seed"]) if header.get("seed") else None,
            removed=tuple(removed),
            shortfall=int(header.get("shortfall", "0")),
        )
    except KeyError as exc:
        raise ParseError(f"{path}: manifest is missing the {exc.args[0]!r} header") from None
