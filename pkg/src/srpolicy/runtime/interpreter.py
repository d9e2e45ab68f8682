"""Reference interpreter: routes scored inputs through decision trees and protocol gates."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

from ..ast_core import (
    DecisionTree,
    Policy,
    SignalKind,
    SignalRef,
    TestCase,
    distinct_refs,
    eval_condition,
    fmt_real,
)
from ..emitters.common import branch_labels
from ..normalizer import group_fire, softmax_values
from .context import EvaluationContext
from .evaluators import EvaluatorRegistry
from .trace import AuditTraceEntry, chain

RAW_SUFFIX = "_raw"
PASS_THROUGH = "allow"


class MissingScore(KeyError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"no score for signal {name!r}")


class ExtractionFailure(ValueError):
    pass


class GateSpecMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SignalScoreMap:
    """Scores by name. Group members carry ``name`` (normalized) and ``name_raw``; authz also has a flag."""

    scores: Mapping[str, float]
    flags: Mapping[str, bool] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        try:
            return self.scores[name]
        except KeyError:
            raise MissingScore(name) from None

    def __contains__(self, name: object) -> bool:
        return name in self.scores

    def raw(self, name: str) -> float:
        key = name + RAW_SUFFIX
        return self[key] if key in self.scores else self[name]

    def flag(self, name: str) -> bool:
        if name in self.flags:
            return self.flags[name]
        return self[name] > 0.5


def scores_from_raw(policy: Policy, raw: Mapping[str, float], flags: Optional[Mapping[str, bool]] = None) -> SignalScoreMap:
    """Build a score map from raw per-signal scores, applying group softmax."""
    scores = {n: float(v) for n, v in raw.items()}
    flags = dict(flags or {})
    for sig in policy.signals.values():
        if sig.kind is SignalKind.AUTHZ and sig.name in scores and sig.name not in flags:
            flags[sig.name] = scores[sig.name] > 0.5
    for group in policy.signal_groups.values():
        if not all(m in scores for m in group.members):
            continue
        members = [scores[m] for m in group.members]
        for m, r, n in zip(group.members, members, softmax_values(members, group.temperature)):
            scores[m + RAW_SUFFIX] = r
            scores[m] = n
    return SignalScoreMap(scores, flags)


def evaluate_signals(
    policy: Policy,
    text: str,
    ctx: Optional[EvaluationContext] = None,
    evaluators: Optional[EvaluatorRegistry] = None,
) -> SignalScoreMap:
    """Raw score for every declared signal, then softmax per group.

    Raises MissingEvaluator when a kind has no evaluator and EvaluatorRange
    when an evaluator leaves [0, 1].
    """
    ctx = ctx or EvaluationContext()
    evaluators = evaluators or EvaluatorRegistry()
    raw = {s.name: evaluators.score(s, text, ctx) for s in policy.signals.values()}
    return scores_from_raw(policy, raw)


@dataclass(frozen=True)
class RoutingDecision:
    tree: str
    branch: str
    branch_idx: int
    backend: str


def thresholds_for(policy: Policy, embedding_override: Optional[float] = None) -> dict[str, float]:
    out = {}
    for s in policy.signals.values():
        out[s.name] = s.effective_threshold
        if embedding_override is not None and s.kind is SignalKind.EMBEDDING:
            out[s.name] = float(embedding_override)
    return out


def _fmt4(x: float) -> str:
    return f"{x:.4f}"


def _fmt_gate(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


class _Router:
    """Per-tree evaluation with predicates cached for one score map."""

    def __init__(self, policy: Policy, scores: SignalScoreMap, thresholds: Mapping[str, float]) -> None:
        self.policy = policy
        self.scores = scores
        self.thresholds = thresholds
        self._fired: dict[str, Optional[str]] = {}

    def holds(self, ref: SignalRef) -> bool:
        policy = self.policy
        sig = policy.signals.get(ref.name)
        if sig is None:
            raise MissingScore(ref.name)
        if sig.kind is SignalKind.AUTHZ:
            return self.scores.flag(ref.name)
        group = policy.group_of.get(ref.name)
        if group is None:
            return self.scores[ref.name] > self.thresholds[ref.name]
        if group.name not in self._fired:
            raw = {m: self.scores.raw(m) for m in group.members}
            self._fired[group.name] = group_fire(group, raw, self.thresholds)
        return self._fired[group.name] == ref.name

    def explain(self, ref: SignalRef, out: dict[str, str]) -> None:
        name = ref.name
        sig = self.policy.signals[name]
        if sig.kind is SignalKind.AUTHZ:
            out[name] = str(self.scores.flag(name))
            return
        thr = self.thresholds[name]
        group = self.policy.group_of.get(name)
        if group is None:
            v = self.scores[name]
            out[name] = f"{_fmt4(v)} {'>' if v > thr else '<='} {fmt_real(thr)}"
            return
        n, r = self.scores[name], self.scores.raw(name)
        out[name] = f"{_fmt4(n)} {'>' if n > group.gate else '<='} {_fmt_gate(group.gate)} (group)"
        out[name + RAW_SUFFIX] = f"{_fmt4(r)} {'>' if r > thr else '<='} {fmt_real(thr)}"


def snapshot(policy: Policy, scores: SignalScoreMap) -> dict[str, Any]:
    """Trace view: declaration order, 4-decimal scores, authz as booleans."""
    snap: dict[str, Any] = {}
    for sig in policy.signals.values():
        if sig.name not in scores:
            continue
        if sig.kind is SignalKind.AUTHZ:
            snap[sig.name] = scores.flag(sig.name)
            continue
        snap[sig.name] = round(scores[sig.name], 4)
        if sig.name + RAW_SUFFIX in scores:
            snap[sig.name + RAW_SUFFIX] = round(scores[sig.name + RAW_SUFFIX], 4)
    return snap


def route(
    tree: DecisionTree,
    scores: SignalScoreMap,
    policy: Policy,
    chain_prev: Optional[AuditTraceEntry] = None,
    clock=None,
    thresholds: Optional[Mapping[str, float]] = None,
) -> tuple[RoutingDecision, AuditTraceEntry]:
    """First satisfied branch wins, ELSE otherwise; branch_idx counts from 1 with ELSE last."""
    router = _Router(policy, scores, thresholds if thresholds is not None else thresholds_for(policy))
    for ref in distinct_refs([b.condition for b in tree.branches]):
        if ref.name not in scores and ref.name + RAW_SUFFIX not in scores:
            raise MissingScore(ref.name)
    labels = branch_labels(tree)
    chosen = len(tree.branches)
    for i, br in enumerate(tree.branches):
        if eval_condition(br.condition, router.holds):
            chosen = i
            break
    crossed: dict[str, str] = {}
    if chosen < len(tree.branches):
        for ref in distinct_refs([tree.branches[chosen].condition]):
            router.explain(ref, crossed)
        backend = tree.branches[chosen].backend
    else:
        backend = tree.else_backend
    decision = RoutingDecision(tree.name, labels[chosen], chosen + 1, backend)
    ts = clock() if clock is not None else time.time()
    entry = AuditTraceEntry(
        ts=float(ts),
        policy_version=policy.version,
        source_hash=policy.source_hash,
        tree=tree.name,
        branch=decision.branch,
        branch_idx=decision.branch_idx,
        signals=snapshot(policy, scores),
        thresholds_crossed=crossed,
    )
    return decision, chain(entry, chain_prev)


@dataclass
class SequenceResult:
    decision: Optional[RoutingDecision]
    traces: list[AuditTraceEntry]
    scores: SignalScoreMap

    @property
    def backend(self) -> Optional[str]:
        return self.decision.backend if self.decision else None


def run_sequence(
    policy: Policy,
    scores: SignalScoreMap,
    chain_prev: Optional[AuditTraceEntry] = None,
    clock=None,
    thresholds: Optional[Mapping[str, float]] = None,
    trees: Optional[Sequence[DecisionTree]] = None,
) -> SequenceResult:
    """Trees in declaration order; ``allow`` passes control on, any other backend stops."""
    traces: list[AuditTraceEntry] = []
    decision = None
    prev = chain_prev
    for tree in trees if trees is not None else policy.trees.values():
        decision, entry = route(tree, scores, policy, prev, clock, thresholds)
        traces.append(entry)
        prev = entry
        if decision.backend != PASS_THROUGH:
            break
    return SequenceResult(decision, traces, scores)


def decide(
    policy: Policy,
    text: str,
    ctx: Optional[EvaluationContext] = None,
    evaluators: Optional[EvaluatorRegistry] = None,
    chain_prev: Optional[AuditTraceEntry] = None,
) -> SequenceResult:
    ctx = ctx or EvaluationContext()
    scores = evaluate_signals(policy, text, ctx, evaluators)
    return run_sequence(policy, scores, chain_prev, ctx.clock)


explain = decide


@dataclass
class TestResult:
    __test__ = False

    name: str
    expected: str
    actual: Optional[str]
    traces: list[AuditTraceEntry]

    @property
    def passed(self) -> bool:
        return self.actual == self.expected


@dataclass
class TestReport:
    __test__ = False

    results: list[TestResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[TestResult]:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "results": [
                {
                    "name": r.name,
                    "expected": r.expected,
                    "actual": r.actual,
                    "passed": r.passed,
                    "traces": [t.to_dict() for t in r.traces],
                }
                for r in self.results
            ],
        }


def run_test_case(policy: Policy, case: TestCase, evaluators: EvaluatorRegistry, clock=None) -> TestResult:
    ctx = EvaluationContext(user_roles=case.user_roles, **({"clock": clock} if clock else {}))
    result = decide(policy, case.input, ctx, evaluators)
    return TestResult(case.name, case.expected_decision, result.backend, result.traces)


def run_tests(policy: Policy, evaluators: EvaluatorRegistry, clock=None) -> TestReport:
    return TestReport([run_test_case(policy, case, evaluators, clock) for case in policy.tests])


# --------------------------------------------------------------------------
# Protocol gates


def _flatten(value: Any) -> list[str]:
    if value is None:
        return []
    if isinstance(value, Mapping):
        return [s for v in value.values() for s in _flatten(v)]
    if isinstance(value, (list, tuple)):
        return [s for v in value for s in _flatten(v)]
    if isinstance(value, bool):
        return [str(value).lower()]
    if isinstance(value, float) and not math.isfinite(value):
        return []
    return [str(value)]


def _text_parts(parts: Any) -> list[str]:
    if not isinstance(parts, (list, tuple)):
        raise ExtractionFailure("message parts must be a list")
    out = []
    for p in parts:
        if isinstance(p, Mapping) and p.get("type", p.get("kind", "text")) == "text" and isinstance(p.get("text"), str):
            out.append(p["text"])
    return out


def extract_text(rule: str, message: Any) -> str:
    """Gate input text for one boundary.

    * ``tool_name_and_argument_values``: the tool name followed by every argument value.
    * ``concatenated_text_parts``: the text parts of the A2A message, space-joined.
    * ``raw_response_text``: the tool response text, given as a string or as an object with text content.
    """
    if rule == "tool_name_and_argument_values":
        if not isinstance(message, Mapping):
            raise ExtractionFailure("MCP message must be an object")
        params = message.get("params", message)
        if not isinstance(params, Mapping):
            raise ExtractionFailure("MCP params must be an object")
        name = params.get("name", params.get("tool"))
        args = params.get("arguments", params.get("args", {}))
        if not isinstance(name, str) or not name:
            raise ExtractionFailure("MCP tools/call message has no tool name")
        text = " ".join([name, *_flatten(args)])
    elif rule == "concatenated_text_parts":
        if not isinstance(message, Mapping):
            raise ExtractionFailure("A2A message must be an object")
        body = message.get("params", message)
        body = body.get("message", body) if isinstance(body, Mapping) else body
        if not isinstance(body, Mapping) or "parts" not in body:
            raise ExtractionFailure("A2A message has no parts")
        text = " ".join(_text_parts(body["parts"]))
    elif rule == "raw_response_text":
        if isinstance(message, str):
            text = message
        elif isinstance(message, Mapping):
            body = message.get("result", message)
            if isinstance(body, Mapping) and isinstance(body.get("text"), str):
                text = body["text"]
            elif isinstance(body, Mapping) and "content" in body:
                text = " ".join(_text_parts(body["content"]))
            else:
                raise ExtractionFailure("tool response has no text")
        else:
            raise ExtractionFailure("tool response must be text or an object")
    else:
        raise ExtractionFailure(f"unknown extraction rule {rule!r}")
    if not text.strip():
        raise ExtractionFailure("message carries no text")
    return text


@dataclass(frozen=True)
class GateDecision:
    action: str
    gate: str
    decision: RoutingDecision
    text: str


def apply_gate(
    spec: Mapping[str, Any],
    message: Any,
    policy: Policy,
    evaluators: Optional[EvaluatorRegistry] = None,
    ctx: Optional[EvaluationContext] = None,
    chain_prev: Optional[AuditTraceEntry] = None,
) -> tuple[GateDecision, AuditTraceEntry]:
    """Score the text extracted by the gate's boundary rule, then route it through the gate's tree."""
    if spec.get("source_hash") != policy.source_hash:
        raise GateSpecMismatch(f"gate spec was built from {spec.get('source_hash')}, policy is {policy.source_hash}")
    tree = policy.trees.get(spec.get("tree", ""))
    if tree is None:
        raise GateSpecMismatch(f"gate spec names unknown tree {spec.get('tree')!r}")
    ctx = ctx or EvaluationContext()
    text = extract_text(spec.get("extraction", ""), message)
    scores = evaluate_signals(policy, text, ctx, evaluators)
    override = spec.get("embedding_threshold_override")
    thresholds = thresholds_for(policy, float(override) if override is not None else None)
    decision, entry = route(tree, scores, policy, chain_prev, ctx.clock, thresholds)
    action = "deny" if decision.backend == "deny" else "allow"
    return GateDecision(action, str(spec.get("gate")), decision, text), entry
