"""Grid experiments: one frozen test set, many shrunken training logs.

For every configured log the pipeline is: preprocess, extract the label
registry from the full reference log, split once per split spec, then for
every (reduction method, factor) pair shrink only the training side. Every
predictor and task is scored against the same test instances, so cells are
comparable across the whole grid. All randomness flows from one master
seed through stable per-purpose derivations; rerunning a config reproduces
every output file byte for byte.

Cell results are appended to ``cells.jsonl`` as they finish, so a crash
loses at most the cell in flight. Failures of a single cell (typically a
misbehaving external predictor) are recorded and do not stop the grid.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigurationError, DomainError
from .event_model import (
    EventLog,
    LabelRegistry,
    RoleSource,
    extract_registry,
    parse_attribute_key,
)
from .formatting import decimal_string, fraction_label, parse_fraction
from .log_io import (
    ColumnMapping,
    PreprocessPolicy,
    canonical_bytes,
    load_log,
    mapping_from_toml,
    preprocess,
)
from .metrics import MetricsReport, report_from_json, report_to_json, score
from .prediction import (
    TASKS,
    PredictorHandle,
    check_task,
    generate_instances,
    predict_all,
    run_external,
    target_space,
    train_baseline,
)
from .reducer import (
    REDUCTION_METHODS,
    ReductionSpec,
    reduce,
    reduction_bias,
    targets_from_cases,
    write_removal_manifest,
)
from .rng import derive_seed
from .splitter import SplitSpec, split, write_split_manifest
from .variants import DEFAULT_PERSPECTIVE, PerspectiveSet

log = logging.getLogger(__name__)

DEFAULT_FACTORS = (
    Fraction(1, 5), Fraction(2, 5), Fraction(3, 5), Fraction(4, 5),
    Fraction(9, 10), Fraction(19, 20), Fraction(99, 100),
)

CELLS_FILE = "cells.jsonl"
RESULTS_FILE = "results_long.csv"

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

_RESULT_COLUMNS = (
    "log", "split", "task", "predictor", "method", "factor", "status", "reason",
    "train_size", "reduced_size", "test_size", "instances", "seed", "test_digest",
    "bias", "accuracy", "macro_precision", "macro_recall", "macro_f1",
)


@dataclass(frozen=True)
class LogConfig:
    """One input log plus everything needed to interpret it."""

    name: str
    path: Path
    format: str | None = None
    mapping: ColumnMapping | None = None
    policy: PreprocessPolicy = PreprocessPolicy()
    role_source: RoleSource = RoleSource()
    target_cases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise ConfigurationError(
                f"log name {self.name!r} must be alphanumeric with ._- "
                "(it names output files)"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    logs: tuple[LogConfig, ...]
    splits: tuple[SplitSpec, ...]
    reduction_methods: tuple[str, ...] = ("random", "temporal_oldest")
    factors: tuple[Fraction, ...] = DEFAULT_FACTORS
    predictors: tuple[PredictorHandle, ...] = (PredictorHandle("markov"),)
    tasks: tuple[str, ...] = ("next_activity",)
    perspective: PerspectiveSet = DEFAULT_PERSPECTIVE
    seed: int = 0
    out: Path = Path("out")

    def __post_init__(self) -> None:
        for field_name in ("logs", "splits", "reduction_methods", "factors",
                           "predictors", "tasks"):
            if not isinstance(getattr(self, field_name), tuple):
                object.__setattr__(self, field_name, tuple(getattr(self, field_name)))
        if not self.logs:
            raise ConfigurationError("config needs at least one log")
        if not self.splits:
            raise ConfigurationError("config needs at least one split")
        if not self.predictors:
            raise ConfigurationError("config needs at least one predictor")
        if not self.tasks:
            raise ConfigurationError("config needs at least one task")
        if not self.reduction_methods:
            raise ConfigurationError("config needs at least one reduction method")
        for task in self.tasks:
            check_task(task)
        for method in self.reduction_methods:
            if method not in REDUCTION_METHODS:
                raise ConfigurationError(
                    f"unknown reduction method {method!r}; "
                    f"expected one of {', '.join(REDUCTION_METHODS)}"
                )
        # Factor 0 is always run as the reference, never configured.
        factors = tuple(f for f in self.factors if f != 0)
        object.__setattr__(self, "factors", factors)
        for factor in factors:
            if not 0 < factor < 1:
                raise ConfigurationError(f"reduction factor {factor} is outside [0, 1)")
        if any(a >= b for a, b in zip(factors, factors[1:])):
            raise ConfigurationError("factors must be strictly increasing")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        names = [lc.name for lc in self.logs]
        if len(set(names)) != len(names):
            raise ConfigurationError("log names must be unique")
        predictor_names = [p.name for p in self.predictors]
        if len(set(predictor_names)) != len(predictor_names):
            raise ConfigurationError("predictor names must be unique")
        labels = [split_label(s) for s in self.splits]
        if len(set(labels)) != len(labels):
            raise ConfigurationError(
                f"split specs are not distinguishable: {', '.join(labels)}"
            )
        object.__setattr__(self, "out", Path(self.out))


def split_label(spec: SplitSpec) -> str:
    """File-name-safe identifier of a split spec."""
    label = f"{spec.method}_{fraction_label(spec.ratio)}"
    if spec.method == "random":
        label += f"_s{spec.seed}"
    return label


@dataclass(frozen=True)
class RunResult:
    """Outcome of one grid cell."""

    log: str
    split: str
    task: str
    predictor: str
    method: str
    factor: Fraction
    status: str
    reason: str | None
    seed: int | None
    bias: Fraction | None
    train_size: int
    reduced_size: int
    test_size: int
    instances: int
    test_digest: str
    train_seconds: float
    predict_seconds: float
    report: MetricsReport | None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def sort_key(result: RunResult):
    return (result.log, result.split, result.task, result.predictor,
            result.method, result.factor)


def cell_identifier(result: RunResult) -> str:
    return "_".join([
        result.log, result.split, result.task, result.predictor,
        result.method, fraction_label(result.factor),
    ])


def result_to_json(result: RunResult) -> dict:
    return {
        "log": result.log,
        "split": result.split,
        "task": result.task,
        "predictor": result.predictor,
        "method": result.method,
        "factor": str(result.factor),
        "status": result.status,
        "reason": result.reason,
        "seed": result.seed,
        "bias": None if result.bias is None else str(result.bias),
        "train_size": result.train_size,
        "reduced_size": result.reduced_size,
        "test_size": result.test_size,
        "instances": result.instances,
        "test_digest": result.test_digest,
        "train_seconds": result.train_seconds,
        "predict_seconds": result.predict_seconds,
        "report": None if result.report is None else report_to_json(result.report),
    }


def result_from_json(raw: dict) -> RunResult:
    return RunResult(
        log=raw["log"],
        split=raw["split"],
        task=raw["task"],
        predictor=raw["predictor"],
        method=raw["method"],
        factor=Fraction(raw["factor"]),
        status=raw["status"],
        reason=raw.get("reason"),
        seed=raw.get("seed"),
        bias=None if raw.get("bias") is None else Fraction(raw["bias"]),
        train_size=raw["train_size"],
        reduced_size=raw["reduced_size"],
        test_size=raw["test_size"],
        instances=raw["instances"],
        test_digest=raw["test_digest"],
        train_seconds=raw["train_seconds"],
        predict_seconds=raw["predict_seconds"],
        report=None if raw.get("report") is None else report_from_json(raw["report"]),
    )


def read_cells(path: str | Path) -> list[RunResult]:
    results = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            results.append(result_from_json(json.loads(line)))
    return results


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class _CellJob:
    log_name: str
    split_name: str
    task: str
    handle: PredictorHandle
    method: str
    factor: Fraction
    reduced: EventLog
    seed: int | None
    bias: Fraction
    train_size: int
    test_size: int
    test_digest: str
    instances: list
    registry: LabelRegistry
    role_source: RoleSource
    scratch: Path


def _run_cell(job: _CellJob) -> RunResult:
    base = dict(
        log=job.log_name, split=job.split_name, task=job.task,
        predictor=job.handle.name, method=job.method, factor=job.factor,
        seed=job.seed, bias=job.bias, train_size=job.train_size,
        reduced_size=len(job.reduced), test_size=job.test_size,
        instances=len(job.instances), test_digest=job.test_digest,
    )
    started = time.perf_counter()
    trained = started
    try:
        if job.handle.kind == "builtin_markov":
            model = train_baseline(
                job.reduced, job.task, job.handle.order, job.registry, job.role_source
            )
            trained = time.perf_counter()
            predictions = predict_all(model, job.instances)
        else:
            predictions = run_external(
                job.handle, job.reduced, job.instances, job.registry,
                job.scratch, job.task, job.role_source,
            )
            trained = time.perf_counter()
        finished = time.perf_counter()
        targets = [instance.target for instance in job.instances]
        rep = score(targets, predictions, target_space(job.registry, job.task))
        return RunResult(
            **base, status="ok", reason=None,
            train_seconds=trained - started,
            predict_seconds=finished - trained,
            report=rep,
        )
    except Exception as exc:
        log.warning("cell %s failed: %s", cell_identifier_from(base), exc)
        return RunResult(
            **base, status="failed", reason=f"{type(exc).__name__}: {exc}",
            train_seconds=time.perf_counter() - started, predict_seconds=0.0,
            report=None,
        )


def cell_identifier_from(coords: dict) -> str:
    return "_".join([
        coords["log"], coords["split"], coords["task"], coords["predictor"],
        coords["method"], fraction_label(coords["factor"]),
    ])


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[RunResult]:
    """Execute the whole grid and return one result per cell.

    Splits, reductions, and manifests are prepared sequentially up front
    (they are cheap and shared between cells); training and scoring run on
    a worker pool of ``jobs`` threads. External predictors get one scratch
    directory per cell, so they can run concurrently.
    """
    if jobs < 1:
        raise ConfigurationError(f"jobs must be at least 1, got {jobs}")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_dir = out / "manifests"
    manifest_dir.mkdir(exist_ok=True)

    cell_jobs: list[_CellJob] = []
    for log_config in config.logs:
        raw = load_log(log_config.path, log_config.format, log_config.mapping)
        reference, prep = preprocess(raw, log_config.policy)
        log.info(
            "log %s: %d of %d traces kept after preprocessing %s",
            log_config.name, len(reference), prep.input_traces,
            prep.removal_reasons or "",
        )
        registry = extract_registry(reference, log_config.role_source)
        target_variants = None
        if "variant_targeted" in config.reduction_methods:
            if not log_config.target_cases:
                raise ConfigurationError(
                    f"log {log_config.name!r} needs target_cases for the "
                    "variant_targeted reduction method"
                )
            target_variants = targets_from_cases(
                reference, list(log_config.target_cases), config.perspective
            )
        for split_spec in config.splits:
            split_name = split_label(split_spec)
            outcome = split(reference, split_spec)
            write_split_manifest(
                outcome.manifest,
                manifest_dir / f"split_{log_config.name}_{split_name}.txt",
            )
            test_digest = _digest(canonical_bytes(outcome.test))
            instances_by_task = {
                task: generate_instances(
                    outcome.test, task, registry, log_config.role_source
                )
                for task in config.tasks
            }
            for method in config.reduction_methods:
                for factor in (Fraction(0), *config.factors):
                    seed = None
                    if method == "random":
                        seed = derive_seed(
                            config.seed, log_config.name, split_name,
                            method, str(factor),
                        )
                    spec = ReductionSpec(
                        factor=factor, method=method, seed=seed,
                        perspective=config.perspective if target_variants else None,
                        target_variants=target_variants if method == "variant_targeted" else None,
                    )
                    reduced, manifest = reduce(outcome.train, spec)
                    bias = reduction_bias(outcome.train, reduced, config.perspective)
                    write_removal_manifest(
                        manifest,
                        manifest_dir / (
                            f"removal_{log_config.name}_{split_name}_"
                            f"{method}_{fraction_label(factor)}.txt"
                        ),
                    )
                    for task in config.tasks:
                        for handle in config.predictors:
                            coords = dict(
                                log=log_config.name, split=split_name, task=task,
                                predictor=handle.name, method=method, factor=factor,
                            )
                            cell_jobs.append(_CellJob(
                                log_name=log_config.name,
                                split_name=split_name,
                                task=task,
                                handle=handle,
                                method=method,
                                factor=factor,
                                reduced=reduced,
                                seed=seed,
                                bias=bias,
                                train_size=len(outcome.train),
                                test_size=len(outcome.test),
                                test_digest=test_digest,
                                instances=instances_by_task[task],
                                registry=registry,
                                role_source=log_config.role_source,
                                scratch=out / "scratch" / cell_identifier_from(coords),
                            ))

    log.info("running %d grid cells on %d worker(s)", len(cell_jobs), jobs)
    results: list[RunResult] = []
    cells_path = out / CELLS_FILE
    lock = threading.Lock()
    with open(cells_path, "w", encoding="utf-8") as sink:
        def finish(result: RunResult) -> None:
            with lock:
                sink.write(json.dumps(result_to_json(result), ensure_ascii=False,
                                      sort_keys=True) + "\n")
                sink.flush()
                results.append(result)

        if jobs == 1:
            for job in cell_jobs:
                finish(_run_cell(job))
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_run_cell, job) for job in cell_jobs]
                for future in as_completed(futures):
                    finish(future.result())
    results.sort(key=sort_key)
    failed = sum(1 for r in results if not r.ok)
    if failed:
        log.warning("%d of %d cells failed", failed, len(results))
    return results


def emit_report(results: list[RunResult], sink: str | Path) -> None:
    """Write the result tables: one long CSV over all cells, one wide
    accuracy table per (log, split, task, predictor) with the reference and
    best cells marked, and one per-class CSV per succeeded cell."""
    if not results:
        raise DomainError("no results to report")
    sink = Path(sink)
    sink.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=sort_key)

    rows = [",".join(_RESULT_COLUMNS)]
    for r in ordered:
        rep = r.report
        rows.append(",".join(_csv_escape(value) for value in (
            r.log, r.split, r.task, r.predictor, r.method,
            fraction_label(r.factor), r.status, r.reason or "",
            str(r.train_size), str(r.reduced_size), str(r.test_size),
            str(r.instances), "" if r.seed is None else str(r.seed),
            r.test_digest,
            "" if r.bias is None else decimal_string(r.bias, 6),
            "" if rep is None else decimal_string(rep.accuracy, 6),
            "" if rep is None else decimal_string(rep.macro.precision, 6),
            "" if rep is None else decimal_string(rep.macro.recall, 6),
            "" if rep is None else decimal_string(rep.macro.f1, 6),
        )))
    (sink / RESULTS_FILE).write_bytes(("\r\n".join(rows) + "\r\n").encode("utf-8"))

    groups: dict[tuple, list[RunResult]] = {}
    for r in ordered:
        groups.setdefault((r.log, r.split, r.task, r.predictor), []).append(r)
    for (log_name, split_name, task, predictor), cells in groups.items():
        factors = sorted({r.factor for r in cells})
        methods = sorted({r.method for r in cells})
        by_coord = {(r.method, r.factor): r for r in cells}
        lines = [",".join(["method"] + [fraction_label(f) for f in factors])]
        for method in methods:
            ok_cells = [
                by_coord[(method, f)] for f in factors
                if (method, f) in by_coord and by_coord[(method, f)].ok
            ]
            best = None
            if ok_cells:
                best = min(ok_cells, key=lambda r: (-r.report.accuracy, r.factor))
            row = [method]
            for factor in factors:
                cell = by_coord.get((method, factor))
                if cell is None or not cell.ok:
                    row.append("—")
                    continue
                text = decimal_string(cell.report.accuracy, 3)
                if factor == 0:
                    text += " REFERENCE"
                if cell is best:
                    text += " BEST"
                row.append(text)
            lines.append(",".join(_csv_escape(value) for value in row))
        name = f"table_{log_name}_{split_name}_{task}_{predictor}.csv"
        (sink / name).write_bytes(("\r\n".join(lines) + "\r\n").encode("utf-8"))

    per_class_dir = sink / "per_class"
    per_class_dir.mkdir(exist_ok=True)
    for r in ordered:
        if not r.ok:
            continue
        lines = ["label,support,precision,recall,f1"]
        for label, m in r.report.per_class.items():
            lines.append(",".join([
                _csv_escape(label), str(m.support),
                decimal_string(m.precision, 6), decimal_string(m.recall, 6),
                decimal_string(m.f1, 6),
            ]))
        path = per_class_dir / f"{cell_identifier(r)}.csv"
        path.write_bytes(("\r\n".join(lines) + "\r\n").encode("utf-8"))


def _csv_escape(value: str) -> str:
    if any(ch in value for ch in ',"\r\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from TOML; relative paths resolve against
    the config file's directory."""
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib  # type: ignore[no-redef]
    path = Path(path)
    base = path.parent
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None

    def bad(message: str) -> ConfigurationError:
        return ConfigurationError(f"{path}: {message}")

    logs = []
    for i, entry in enumerate(raw.get("logs", [])):
        if "name" not in entry or "path" not in entry:
            raise bad(f"logs[{i}] needs both 'name' and 'path'")
        mapping = None
        if "mapping" in entry:
            mapping = mapping_from_toml(base / entry["mapping"])
        role_kwargs = {}
        if "roles_attribute" in entry:
            role_kwargs["attribute"] = entry["roles_attribute"] or None
        if "roles_mapping" in entry:
            mapping_value = entry["roles_mapping"]
            if not isinstance(mapping_value, dict):
                raise bad(f"logs[{i}].roles_mapping must be a table of resource = role")
            role_kwargs["mapping"] = dict(mapping_value)
        logs.append(LogConfig(
            name=entry["name"],
            path=base / entry["path"],
            format=entry.get("format"),
            mapping=mapping,
            policy=PreprocessPolicy(
                require_resource=bool(entry.get("require_resource", False)),
                min_length=int(entry.get("min_length", 1)),
            ),
            role_source=RoleSource(**role_kwargs) if role_kwargs else RoleSource(),
            target_cases=tuple(entry.get("target_cases", ())),
        ))

    splits = []
    for i, entry in enumerate(raw.get("splits", [])):
        try:
            splits.append(SplitSpec(
                ratio=parse_fraction(entry.get("ratio", "7/10"), "split ratio"),
                method=entry.get("method", "temporal"),
                seed=entry.get("seed"),
            ))
        except ValueError as exc:
            raise bad(f"splits[{i}]: {exc}") from None

    predictors = []
    for i, entry in enumerate(raw.get("predictors", [{"name": "markov"}])):
        if "name" not in entry:
            raise bad(f"predictors[{i}] needs a 'name'")
        cwd = entry.get("cwd")
        predictors.append(PredictorHandle(
            name=entry["name"],
            kind=entry.get("kind", "builtin_markov"),
            order=int(entry.get("order", 3)),
            command=entry.get("command"),
            cwd=str(base / cwd) if cwd else None,
            timeout=float(entry["timeout"]) if "timeout" in entry else None,
        ))

    try:
        factors = tuple(
            parse_fraction(f, "reduction factor") for f in raw.get("factors", DEFAULT_FACTORS)
        )
    except ValueError as exc:
        raise bad(str(exc)) from None
    perspective = DEFAULT_PERSPECTIVE
    if "perspective" in raw:
        tokens = raw["perspective"]
        if not isinstance(tokens, list) or not tokens:
            raise bad("perspective must be a non-empty list of attribute names")
        perspective = PerspectiveSet(tuple(parse_attribute_key(t) for t in tokens))
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise bad("seed must be an integer")

    return ExperimentConfig(
        logs=tuple(logs),
        splits=tuple(splits),
        reduction_methods=tuple(raw.get("reduction_methods",
                                        ("random", "temporal_oldest"))),
        factors=factors,
        predictors=tuple(predictors),
        tasks=tuple(raw.get("tasks", ("next_activity",))),
        perspective=perspective,
        seed=seed,
        out=base / raw.get("out", "out"),
    )
