"""Confusion matrices and classification metrics over exact rationals.

Per-class values are one-vs-rest readings of the multiclass matrix. The
headline precision, recall, and F-measure are macro averages over classes
that actually occur; per-class values are always available so frequent and
rare labels can be compared directly.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError

ZERO = Fraction(0)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed [true][predicted], in label order."""

    labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def support(self, index: int) -> int:
        return sum(self.counts[index])


def confusion(
    targets: Sequence[str], predictions: Sequence[str], labels: Sequence[str]
) -> ConfusionMatrix:
    """Tally (true, predicted) pairs into a matrix over the given label order."""
    if len(targets) != len(predictions):
        raise DomainError(
            f"{len(targets)} targets but {len(predictions)} predictions"
        )
    ordered = tuple(labels)
    if len(set(ordered)) != len(ordered):
        raise DomainError("label set contains duplicates")
    index = {label: i for i, label in enumerate(ordered)}
    counts = [[0] * len(ordered) for _ in ordered]
    for target, predicted in zip(targets, predictions):
        if target not in index:
            raise DomainError(f"target label {target!r} is not in the label set")
        if predicted not in index:
            raise DomainError(f"predicted label {predicted!r} is not in the label set")
        counts[index[target]][index[predicted]] += 1
    return ConfusionMatrix(ordered, tuple(tuple(row) for row in counts))


@dataclass(frozen=True)
class ClassMetrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction
    support: int


@dataclass(frozen=True)
class MacroMetrics:
    precision: Fraction
    recall: Fraction
    f1: Fraction


@dataclass(frozen=True)
class MetricsReport:
    accuracy: Fraction
    per_class: Mapping[str, ClassMetrics]
    macro: MacroMetrics

    @property
    def total(self) -> int:
        return sum(m.support for m in self.per_class.values())


def report(matrix: ConfusionMatrix) -> MetricsReport:
    """Derive accuracy, per-class, and macro metrics from a matrix.

    Zero-denominator conventions: a class never predicted has precision 0;
    a class with no true instances is reported with recall 0 but excluded
    from the macro averages; f1 is 0 whenever precision and recall are both 0.
    """
    total = matrix.total
    if total == 0:
        raise DomainError("metrics of an empty prediction set are undefined")
    per_class: dict[str, ClassMetrics] = {}
    occurring: list[ClassMetrics] = []
    for i, label in enumerate(matrix.labels):
        tp = matrix.counts[i][i]
        support = matrix.support(i)
        fn = support - tp
        fp = sum(matrix.counts[r][i] for r in range(len(matrix.labels))) - tp
        precision = Fraction(tp, tp + fp) if tp + fp else ZERO
        recall = Fraction(tp, tp + fn) if tp + fn else ZERO
        f1 = (
            2 * recall * precision / (recall + precision)
            if recall + precision
            else ZERO
        )
        metrics = ClassMetrics(precision, recall, f1, support)
        per_class[label] = metrics
        if support > 0:
            occurring.append(metrics)
    accuracy = Fraction(sum(matrix.counts[i][i] for i in range(len(matrix.labels))), total)
    k = len(occurring)
    macro = MacroMetrics(
        precision=sum((m.precision for m in occurring), ZERO) / k,
        recall=sum((m.recall for m in occurring), ZERO) / k,
        f1=sum((m.f1 for m in occurring), ZERO) / k,
    )
    return MetricsReport(accuracy, per_class, macro)


def score(
    targets: Sequence[str], predictions: Sequence[str], labels: Sequence[str]
) -> MetricsReport:
    """Convenience: confusion then report."""
    return report(confusion(targets, predictions, labels))


def report_to_json(rep: MetricsReport) -> dict:
    """JSON-safe form; rationals as 'p/q' strings so nothing is rounded."""
    return {
        "accuracy": str(rep.accuracy),
        "macro": {
            "precision": str(rep.macro.precision),
            "recall": str(rep.macro.recall),
            "f1": str(rep.macro.f1),
        },
        "per_class": {
            label: {
                "precision": str(m.precision),
                "recall": str(m.recall),
                "f1": str(m.f1),
                "support": m.support,
            }
            for label, m in rep.per_class.items()
        },
    }


def report_from_json(raw: Mapping) -> MetricsReport:
    """Inverse of :func:`report_to_json`."""
    per_class = {
        label: ClassMetrics(
            precision=Fraction(m["precision"]),
            recall=Fraction(m["recall"]),
            f1=Fraction(m["f1"]),
            support=int(m["support"]),
        )
        for label, m in raw["per_class"].items()
    }
    macro = MacroMetrics(
        precision=Fraction(raw["macro"]["precision"]),
        recall=Fraction(raw["macro"]["recall"]),
        f1=Fraction(raw["macro"]["f1"]),
    )
    return MetricsReport(Fraction(raw["accuracy"]), per_class, macro)
