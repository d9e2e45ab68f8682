"""Reference interpreter with mock evaluators and audit traces."""

from .context import EvaluationContext
from .evaluators import (
    AuthzEvaluator,
    BowCosineEvaluator,
    ConstantEvaluator,
    EvaluatorConfigError,
    EvaluatorRange,
    EvaluatorRegistry,
    KeywordEvaluator,
    MissingEvaluator,
    RegexPiiEvaluator,
    SignalEvaluator,
    bow_cosine,
    default_registry,
    load_registry,
    registry_from_config,
)
from .interpreter import (
    ExtractionFailure,
    GateDecision,
    GateSpecMismatch,
    MissingScore,
    RoutingDecision,
    SequenceResult,
    SignalScoreMap,
    TestReport,
    TestResult,
    apply_gate,
    decide,
    evaluate_signals,
    explain,
    extract_text,
    route,
    run_sequence,
    run_tests,
    scores_from_raw,
)
from .trace import (
    AuditTraceEntry,
    ChainBreak,
    ChainVerdict,
    TraceFormatError,
    append_trace,
    chain,
    dumps_line,
    entry_digest,
    read_ndjson,
    verify_chain,
    verify_lines,
    write_ndjson,
)

__all__ = [
    "AuditTraceEntry",
    "AuthzEvaluator",
    "BowCosineEvaluator",
    "ChainBreak",
    "ChainVerdict",
    "ConstantEvaluator",
    "EvaluationContext",
    "EvaluatorConfigError",
    "EvaluatorRange",
    "EvaluatorRegistry",
    "ExtractionFailure",
    "GateDecision",
    "GateSpecMismatch",
    "KeywordEvaluator",
    "MissingEvaluator",
    "MissingScore",
    "RegexPiiEvaluator",
    "RoutingDecision",
    "SequenceResult",
    "SignalEvaluator",
    "SignalScoreMap",
    "TestReport",
    "TestResult",
    "TraceFormatError",
    "append_trace",
    "apply_gate",
    "bow_cosine",
    "chain",
    "decide",
    "default_registry",
    "dumps_line",
    "entry_digest",
    "evaluate_signals",
    "explain",
    "extract_text",
    "load_registry",
    "read_ndjson",
    "registry_from_config",
    "route",
    "run_sequence",
    "run_tests",
    "scores_from_raw",
    "verify_chain",
    "verify_lines",
    "write_ndjson",
]
