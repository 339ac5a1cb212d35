"""Command-line interface.

Each pipeline stage is its own subcommand so intermediates (manifests,
reduced logs, instance files) can be inspected, and `run` executes the
whole grid from a TOML config. Every command is deterministic given its
arguments and declared seeds. Exit codes: 0 success, 1 input or validation
problem, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, DomainError, SmallogError
from .event_model import RoleSource, extract_registry, parse_attribute_key
from .experiment import (
    emit_report,
    load_config,
    read_cells,
    run_experiment,
)
from .formatting import decimal_string, parse_fraction
from .log_io import (
    PreprocessPolicy,
    load_log,
    mapping_from_toml,
    preprocess,
    write_canonical,
)
from .metrics import score
from .prediction import (
    TASKS,
    generate_instances,
    predict_all,
    read_instances_file,
    read_registry_file,
    target_space,
    train_baseline,
    write_instances_file,
    write_registry_file,
    write_targets_file,
)
from .reducer import (
    REDUCTION_METHODS,
    ReductionSpec,
    reduce,
    reduction_bias,
    targets_from_cases,
    write_removal_manifest,
)
from .splitter import SPLIT_METHODS, SplitSpec, split, write_split_manifest
from .stats import log_statistics, statistics_rows
from .variants import DEFAULT_PERSPECTIVE, PerspectiveSet, distribution, partition, ranked_classes


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage by default; these are input errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_input_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log", required=True, help="path to an event log (XES or CSV)")
    parser.add_argument("--format", choices=("xes", "csv"),
                        help="input format; inferred from the suffix when omitted")
    parser.add_argument("--mapping", help="TOML column mapping for non-canonical CSV")
    parser.add_argument("--require-resource", action="store_true",
                        help="drop traces that have events without a resource")
    parser.add_argument("--min-length", type=int, default=1, metavar="N",
                        help="drop traces shorter than N events (default 1)")
    _add_role_flags(parser)


def _add_role_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--roles-attribute", metavar="NAME",
                        help="payload attribute carrying the role "
                             "(default org:role; pass '' to disable)")
    parser.add_argument("--roles-mapping", metavar="FILE",
                        help="TOML file of resource = \"role\" pairs")


def _role_source(args: argparse.Namespace) -> RoleSource:
    kwargs = {}
    if args.roles_attribute is not None:
        kwargs["attribute"] = args.roles_attribute or None
    if args.roles_mapping:
        kwargs["mapping"] = _read_role_mapping(args.roles_mapping)
    return RoleSource(**kwargs) if kwargs else RoleSource()


def _read_role_mapping(path: str) -> dict[str, str]:
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:
        import tomli as tomllib  # type: ignore[no-redef]
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigurationError(f"role mapping file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from None
    for resource, role in raw.items():
        if not isinstance(role, str):
            raise ConfigurationError(
                f"{path}: role for resource {resource!r} must be a string"
            )
    return dict(raw)


def _load_prepared(args: argparse.Namespace):
    mapping = mapping_from_toml(args.mapping) if args.mapping else None
    raw = load_log(args.log, args.format, mapping)
    policy = PreprocessPolicy(args.require_resource, args.min_length)
    prepared, report = preprocess(raw, policy)
    if report.removed_traces:
        logging.getLogger(__name__).info(
            "dropped %d of %d traces: %s", report.removed_traces,
            report.input_traces, report.removal_reasons,
        )
    return prepared


def _perspective(raw: str | None) -> PerspectiveSet:
    if not raw:
        return DEFAULT_PERSPECTIVE
    tokens = [token for token in raw.split(",") if token.strip()]
    if not tokens:
        raise ConfigurationError("--perspective must name at least one attribute")
    return PerspectiveSet(tuple(parse_attribute_key(token) for token in tokens))


def _emit(lines: list[str], out: str | None) -> None:
    text = "\r\n".join(lines) + "\r\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text.replace("\r\n", "\n"))


def _cmd_stats(args: argparse.Namespace) -> int:
    prepared = _load_prepared(args)
    registry = extract_registry(prepared, _role_source(args))
    rows = statistics_rows(log_statistics(prepared, registry))
    _emit([f"{name},{value}" for name, value in rows], args.out)
    return 0


def _cmd_variants(args: argparse.Namespace) -> int:
    prepared = _load_prepared(args)
    part = partition(prepared, _perspective(args.perspective))
    dist = distribution(part)
    lines = ["rank,representative,size,probability"]
    for rank, (key, members) in enumerate(ranked_classes(part), start=1):
        lines.append(
            f"{rank},{members[0]},{len(members)},"
            f"{decimal_string(dist.get(key), 6)}"
        )
    _emit(lines, args.out)
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    prepared = _load_prepared(args)
    try:
        ratio = parse_fraction(args.ratio, "split ratio")
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    spec = SplitSpec(ratio=ratio, method=args.method, seed=args.seed)
    result = split(prepared, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_canonical(result.train, out / "train.csv")
    write_canonical(result.test, out / "test.csv")
    write_split_manifest(result.manifest, out / "split_manifest.txt")
    write_registry_file(extract_registry(prepared, _role_source(args)),
                        out / "registry.txt")
    print(f"train={len(result.train)} test={len(result.test)} -> {out}")
    return 0


def _cmd_reduce(args: argparse.Namespace) -> int:
    prepared = _load_prepared(args)
    try:
        factor = parse_fraction(args.factor, "reduction factor")
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None
    perspective = _perspective(args.perspective)
    targets = None
    if args.target_cases:
        cases = [case.strip() for case in args.target_cases.split(",") if case.strip()]
        targets = targets_from_cases(prepared, cases, perspective)
    spec = ReductionSpec(
        factor=factor, method=args.method, seed=args.seed,
        perspective=perspective, target_variants=targets,
    )
    reduced, manifest = reduce(prepared, spec)
    bias = reduction_bias(prepared, reduced, perspective)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_canonical(reduced, out / "reduced.csv")
    write_removal_manifest(manifest, out / "removal_manifest.txt")
    message = (
        f"kept={len(reduced)} removed={len(manifest.removed)} "
        f"bias={decimal_string(bias, 6)} -> {out}"
    )
    if manifest.shortfall:
        message += f" (shortfall={manifest.shortfall})"
    print(message)
    return 0


def _cmd_instances(args: argparse.Namespace) -> int:
    prepared = _load_prepared(args)
    source = _role_source(args)
    if args.registry:
        registry = read_registry_file(args.registry)
    else:
        registry = extract_registry(prepared, source)
    instances = generate_instances(prepared, args.task, registry, source)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_instances_file(instances, args.task, out / "instances.csv")
    write_targets_file(instances, out / "targets.txt")
    print(f"instances={len(instances)} -> {out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    train = load_log(args.train, "csv")
    instances, task = read_instances_file(args.instances)
    registry = read_registry_file(args.registry)
    model = train_baseline(train, task, args.order, registry, _role_source(args))
    predictions = predict_all(model, instances)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(f"{label}\n" for label in predictions), encoding="utf-8")
    print(f"predictions={len(predictions)} -> {out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    registry = read_registry_file(args.registry)
    targets = _read_lines(args.targets)
    predictions = _read_lines(args.predictions)
    if len(targets) != len(predictions):
        raise DomainError(
            f"{len(targets)} target(s) but {len(predictions)} prediction(s)"
        )
    report = score(targets, predictions, target_space(registry, args.task))
    lines = [
        f"accuracy,{decimal_string(report.accuracy, 6)}",
        f"macro_precision,{decimal_string(report.macro.precision, 6)}",
        f"macro_recall,{decimal_string(report.macro.recall, 6)}",
        f"macro_f1,{decimal_string(report.macro.f1, 6)}",
        "label,support,precision,recall,f1",
    ]
    for label, m in report.per_class.items():
        lines.append(
            f"{label},{m.support},{decimal_string(m.precision, 6)},"
            f"{decimal_string(m.recall, 6)},{decimal_string(m.f1, 6)}"
        )
    _emit(lines, args.out)
    return 0


def _read_lines(path: str) -> list[str]:
    content = Path(path).read_text(encoding="utf-8")
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.out:
        config = replace(config, out=Path(args.out))
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    results = run_experiment(config, jobs=jobs)
    emit_report(results, config.out)
    ok = sum(1 for r in results if r.ok)
    print(f"cells ok={ok} failed={len(results) - ok} -> {config.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    results = read_cells(args.cells)
    emit_report(results, args.out)
    print(f"cells={len(results)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="smallog",
        description="Generate small event logs and evaluate next-label "
                    "predictors on a frozen test set.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("stats", help="summary statistics of a log")
    _add_input_flags(p)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(handler=_cmd_stats)

    p = commands.add_parser("variants", help="variant classes and probabilities")
    _add_input_flags(p)
    p.add_argument("--perspective", metavar="KEYS",
                   help="comma-joined attribute names (default: activity)")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(handler=_cmd_variants)

    p = commands.add_parser("split", help="split a log into train and test")
    _add_input_flags(p)
    p.add_argument("--ratio", default="7/10",
                   help="training share, e.g. 0.7 or 7/10 (default 7/10)")
    p.add_argument("--method", choices=SPLIT_METHODS, default="temporal")
    p.add_argument("--seed", type=int, help="required for the random method")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_split)

    p = commands.add_parser("reduce", help="shrink a training log")
    _add_input_flags(p)
    p.add_argument("--factor", required=True, help="share of traces to remove")
    p.add_argument("--method", choices=REDUCTION_METHODS, default="random")
    p.add_argument("--seed", type=int, help="required for the random method")
    p.add_argument("--perspective", metavar="KEYS",
                   help="variant perspective for bias and targeting")
    p.add_argument("--target-cases", metavar="IDS",
                   help="comma-joined case ids whose variants are removal targets")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_reduce)

    p = commands.add_parser("instances", help="prediction instances of a log")
    _add_input_flags(p)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--registry", help="registry file from the reference log "
                                      "(default: extracted from --log)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_instances)

    p = commands.add_parser("predict", help="train the builtin baseline and predict")
    p.add_argument("--train", required=True, help="canonical training CSV")
    p.add_argument("--instances", required=True, help="instances.csv")
    p.add_argument("--registry", required=True, help="registry.txt")
    p.add_argument("--order", type=int, default=3, help="context length (default 3)")
    _add_role_flags(p)
    p.add_argument("--out", required=True, help="predictions file to write")
    p.set_defaults(handler=_cmd_predict)

    p = commands.add_parser("evaluate", help="score predictions against targets")
    p.add_argument("--targets", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(handler=_cmd_evaluate)

    p = commands.add_parser("run", help="run a full experiment grid")
    p.add_argument("--config", required=True, help="experiment TOML")
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--jobs", type=int, help="worker threads (default: CPU count)")
    p.set_defaults(handler=_cmd_run)

    p = commands.add_parser("report", help="regenerate result tables from cells.jsonl")
    p.add_argument("--cells", required=True, help="cells.jsonl from a run")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("SMALLOG_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except SmallogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        # Unreadable inputs and unwritable outputs are usage errors, not bugs.
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except Exception as exc:  # pragma: no cover - defensive last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
