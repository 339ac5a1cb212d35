"""Train/test splitting with a frozen, auditable assignment.

A split happens exactly once per experiment; the test side is never touched
again. Both methods are fully deterministic: the temporal method orders
traces by first-event timestamp, and the random method uses the seeded
shuffle from :mod:`smallog.rng`, so a manifest can always be reproduced
from (log, spec).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError, DomainError, ParseError
from .event_model import EventLog
from .rng import shuffled

SPLIT_METHODS = ("random", "temporal")


@dataclass(frozen=True)
class SplitSpec:
    """Training share plus the assignment method."""

    ratio: Fraction
    method: str = "temporal"
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "ratio", Fraction(self.ratio))
        if not 0 < self.ratio < 1:
            raise ConfigurationError(
                f"split ratio must be strictly between 0 and 1, got {self.ratio}"
            )
        if self.method not in SPLIT_METHODS:
            raise ConfigurationError(
                f"unknown split method {self.method!r}; expected one of {', '.join(SPLIT_METHODS)}"
            )
        if self.method == "random":
            if self.seed is None:
                raise ConfigurationError("a random split needs a seed")
            if not 0 <= self.seed < 2**64:
                raise ConfigurationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class SplitManifest:
    spec: SplitSpec
    train_cases: tuple[str, ...]
    test_cases: tuple[str, ...]


@dataclass(frozen=True)
class SplitResult:
    train: EventLog
    test: EventLog
    manifest: SplitManifest


def train_count(ratio: Fraction, n: int) -> int:
    """Training-side size: round half-even, clamped so both sides stay non-empty."""
    return min(max(round(ratio * n), 1), n - 1)


def split(log: EventLog, spec: SplitSpec) -> SplitResult:
    """Partition a log's traces into train and test.

    temporal: traces ordered by (first-event timestamp, case id) ascending;
    the oldest go to training, the newest to test. random: the seeded
    deterministic shuffle of the case ids decides, first share to training.
    """
    n = len(log)
    if n < 2:
        raise DomainError(f"cannot split a log of {n} trace(s); both sides must be non-empty")
    if spec.method == "temporal":
        order = sorted(log.case_ids, key=lambda cid: (log.traces[cid].start, cid))
    else:
        order = shuffled(log.case_ids, spec.seed or 0)
    k = train_count(spec.ratio, n)
    manifest = SplitManifest(spec, tuple(order[:k]), tuple(order[k:]))
    return SplitResult(
        train=log.restrict(manifest.train_cases),
        test=log.restrict(manifest.test_cases),
        manifest=manifest,
    )


def write_split_manifest(manifest: SplitManifest, path: str | Path) -> None:
    """Audit file: the spec, then one case id per line per side."""
    lines = [
        f"method={manifest.spec.method}",
        f"ratio={manifest.spec.ratio}",
        f"seed={'' if manifest.spec.seed is None else manifest.spec.seed}",
        "[train]",
        *manifest.train_cases,
        "[test]",
        *manifest.test_cases,
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_manifest(path: str | Path) -> SplitManifest:
    """Inverse of :func:`write_split_manifest`."""
    header: dict[str, str] = {}
    sides: dict[str, list[str]] = {"train": [], "test": []}
    current: list[str] | None = None
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line in ("[train]", "[test]"):
            current = sides[line[1:-1]]
        elif current is not None:
            current.append(line)
        elif "=" in line:
            key, _, value = line.partition("=")
            header[key] = value
        else:
            raise ParseError(f"{path}: unexpected manifest line {line!r}")
    try:
        spec = SplitSpec(
            ratio=Fraction(header["ratio"]),
            method=header["method"],
            seed=int(header["seed"]) if header.get("seed") else None,
        )
    except KeyError as exc:
        raise ParseError(f"{path}: manifest is missing the {exc.args[0]!r} header") from None
    if not sides["train"] or not sides["test"]:
        raise ParseError(f"{path}: manifest must list cases for both sides")
    return SplitManifest(spec, tuple(sides["train"]), tuple(sides["test"]))


def apply_manifest(log: EventLog, manifest: SplitManifest) -> SplitResult:
    """Rebuild a split from its audit manifest."""
    assigned = set(manifest.train_cases) | set(manifest.test_cases)
    missing = assigned.symmetric_difference(log.case_ids)
    if missing:
        raise DomainError(
            f"manifest does not partition this log; mismatched case ids: "
            f"{', '.join(sorted(missing)[:5])}"
        )
    return SplitResult(
        train=log.restrict(manifest.train_cases),
        test=log.restrict(manifest.test_cases),
        manifest=manifest,
    )
