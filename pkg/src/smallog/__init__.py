"""smallog: generate small event logs and evaluate next-label predictors.

The pipeline: parse a reference log, extract its label registry, split it
once into train and test, shrink only the training side by a controlled
factor, train predictors on each shrunken log, and score every one of them
against the same frozen test instances. All arithmetic on probabilities
and metrics is exact, and all randomness is seeded, so results reproduce
byte for byte.
"""

from .errors import (
    ConfigurationError,
    DomainError,
    ParseError,
    PredictorError,
    PredictorFailure,
    ProtocolError,
    SmallogError,
)
from .event_model import (
    ACTIVITY,
    CASE_ID,
    END_MARKER,
    RESOURCE,
    TIMESTAMP,
    AttributeKey,
    AttributeKind,
    Event,
    EventLog,
    LabelRegistry,
    RoleSource,
    Trace,
    attribute_of,
    extract_registry,
    parse_attribute_key,
    payload_key,
    role_of,
    trace_start,
    validate_trace,
)
from .experiment import (
    DEFAULT_FACTORS,
    ExperimentConfig,
    LogConfig,
    RunResult,
    emit_report,
    load_config,
    run_experiment,
)
from .log_io import (
    ColumnMapping,
    PreprocessPolicy,
    PreprocessReport,
    canonical_bytes,
    load_log,
    parse_csv,
    parse_timestamp,
    parse_xes,
    preprocess,
    write_canonical,
)
from .metrics import (
    ClassMetrics,
    ConfusionMatrix,
    MetricsReport,
    confusion,
    report,
    score,
)
from .prediction import (
    BaselineModel,
    PredictionInstance,
    PredictorHandle,
    generate_instances,
    predict,
    predict_all,
    run_external,
    train_baseline,
)
from .reducer import ReductionSpec, reduce, reduction_bias
from .splitter import SplitSpec, split
from .stats import LogStatistics, log_statistics
from .variants import (
    DEFAULT_PERSPECTIVE,
    PerspectiveSet,
    VariantPartition,
    distribution,
    distribution_distance,
    partition,
    variant_key,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVITY",
    "AttributeKey",
    "AttributeKind",
    "BaselineModel",
    "CASE_ID",
    "ClassMetrics",
    "ColumnMapping",
    "ConfigurationError",
    "ConfusionMatrix",
    "DEFAULT_FACTORS",
    "DEFAULT_PERSPECTIVE",
    "DomainError",
    "END_MARKER",
    "Event",
    "EventLog",
    "ExperimentConfig",
    "LabelRegistry",
    "LogConfig",
    "LogStatistics",
    "MetricsReport",
    "ParseError",
    "PerspectiveSet",
    "PredictionInstance",
    "PredictorError",
    "PredictorFailure",
    "PredictorHandle",
    "PreprocessPolicy",
    "PreprocessReport",
    "ProtocolError",
    "RESOURCE",
    "ReductionSpec",
    "RoleSource",
    "RunResult",
    "SmallogError",
    "SplitSpec",
    "TIMESTAMP",
    "Trace",
    "VariantPartition",
    "attribute_of",
    "canonical_bytes",
    "confusion",
    "distribution",
    "distribution_distance",
    "emit_report",
    "extract_registry",
    "generate_instances",
    "load_config",
    "load_log",
    "log_statistics",
    "parse_attribute_key",
    "parse_csv",
    "parse_timestamp",
    "parse_xes",
    "partition",
    "payload_key",
    "predict",
    "predict_all",
    "preprocess",
    "reduce",
    "reduction_bias",
    "report",
    "role_of",
    "run_experiment",
    "run_external",
    "score",
    "split",
    "trace_start",
    "train_baseline",
    "validate_trace",
    "variant_key",
    "write_canonical",
]
