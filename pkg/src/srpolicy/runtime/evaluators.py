"""Deterministic mock signal evaluators and the kind/name registry.

The mocks stand in for real classifiers at desk scale:

* ``keyword``: max score over wordlist phrases found in the input (case-insensitive substring).
* ``bow_cosine``: max bag-of-words cosine between the input and each candidate phrase.
* ``regex_pii``: 1.0 if any pattern for an entity type outside ``pii_types_allowed`` matches, else 0.0.
* ``authz``: 1.0 if a user role grants the signal name or its declared role, else 0.0.
* ``constant``: a fixed score, used to pin individual signals in tests.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Protocol, Sequence, Union

import yaml

from ..ast_core import Signal, SignalKind
from .context import EvaluationContext

_WORD = re.compile(r"[a-z0-9]+")


class MissingEvaluator(LookupError):
    def __init__(self, kind: str, signal: str = "") -> None:
        self.kind = kind
        self.signal = signal
        where = f" (needed by signal {signal})" if signal else ""
        super().__init__(f"no evaluator registered for signal kind {kind!r}{where}")


class EvaluatorRange(ValueError):
    def __init__(self, signal: str, value: Any) -> None:
        self.signal = signal
        self.value = value
        super().__init__(f"evaluator for {signal} returned {value!r}, outside [0, 1]")


class EvaluatorConfigError(ValueError):
    pass


class SignalEvaluator(Protocol):
    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float: ...


def words(text: str) -> Counter:
    return Counter(_WORD.findall(text.lower()))


def bow_cosine(a: str, b: str) -> float:
    """Cosine similarity of word-count vectors; 0.0 when either side has no words."""
    va, vb = words(a), words(b)
    if not va or not vb:
        return 0.0
    dot = sum(c * vb[w] for w, c in va.items())
    return min(1.0, dot / (math.sqrt(sum(c * c for c in va.values())) * math.sqrt(sum(c * c for c in vb.values()))))


@dataclass(frozen=True)
class ConstantEvaluator:
    score: float

    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        return self.score


@dataclass(frozen=True)
class KeywordEvaluator:
    """Falls back to the signal's own ``keywords`` (each scoring 1.0) when no wordlist is given."""

    wordlist: Mapping[str, float] = field(default_factory=dict)

    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        table = self.wordlist or {k: 1.0 for k in signal.keywords}
        low = text.lower()
        return max((float(s) for phrase, s in table.items() if phrase.lower() in low), default=0.0)


@dataclass(frozen=True)
class BowCosineEvaluator:
    """Uses the signal's ``candidates`` unless candidates are supplied here."""

    candidates: Sequence[str] = ()

    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        cands = self.candidates or signal.candidates
        return max((bow_cosine(text, c) for c in cands), default=0.0)


DEFAULT_PII_PATTERNS: dict[str, str] = {
    "US_SSN": r"\b\d{3}-\d{2}-\d{4}\b",
    "EMAIL_ADDRESS": r"\b[\w.+-]+@[\w-]+\.[\w.-]+\b",
    "CREDIT_CARD": r"\b(?:\d{4}[ -]?){3}\d{4}\b",
    "PHONE_NUMBER": r"\(?\b\d{3}\)?[ .-]\d{3}[ .-]\d{4}\b",
}


@dataclass(frozen=True)
class RegexPiiEvaluator:
    patterns: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_PII_PATTERNS))

    def __post_init__(self) -> None:
        compiled = {}
        for entity, pattern in self.patterns.items():
            try:
                compiled[entity] = re.compile(pattern)
            except re.error as exc:
                raise EvaluatorConfigError(f"bad pattern for {entity}: {exc}") from None
        object.__setattr__(self, "_compiled", compiled)

    def detected(self, text: str) -> list[str]:
        return [e for e, rx in self._compiled.items() if rx.search(text)]

    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        allowed = set(signal.pii_types_allowed)
        return 1.0 if any(e not in allowed for e in self.detected(text)) else 0.0


@dataclass(frozen=True)
class AuthzEvaluator:
    """``role_table`` maps a user role to the signal names or role values it grants.

    A user role equal to the signal's declared role, or to a subject name, also grants it.
    """

    role_table: Mapping[str, Sequence[str]] = field(default_factory=dict)

    def evaluate(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        wanted = {signal.name}
        if signal.role:
            wanted.add(signal.role)
        direct = wanted | {str(s.get("name")) for s in signal.subjects if s.get("name")}
        for role in ctx.user_roles:
            if role in direct or wanted.intersection(self.role_table.get(role, ())):
                return 1.0
        return 0.0


@dataclass(frozen=True)
class EvaluatorRegistry:
    """Evaluators keyed by signal kind, with per-signal-name overrides taking precedence."""

    by_kind: Mapping[SignalKind, SignalEvaluator] = field(default_factory=dict)
    by_name: Mapping[str, SignalEvaluator] = field(default_factory=dict)

    def for_signal(self, signal: Signal) -> SignalEvaluator:
        ev = self.by_name.get(signal.name) or self.by_kind.get(signal.kind)
        if ev is None:
            raise MissingEvaluator(signal.kind.value, signal.name)
        return ev

    def score(self, signal: Signal, text: str, ctx: EvaluationContext) -> float:
        value = self.for_signal(signal).evaluate(signal, text, ctx)
        if isinstance(value, bool):
            value = float(value)
        if not isinstance(value, (int, float)) or not math.isfinite(value) or not 0.0 <= value <= 1.0:
            raise EvaluatorRange(signal.name, value)
        return float(value)

    def with_overrides(self, **evaluators: SignalEvaluator) -> "EvaluatorRegistry":
        return EvaluatorRegistry(dict(self.by_kind), {**self.by_name, **evaluators})

    def pinned(self, **scores: float) -> "EvaluatorRegistry":
        """Copy of this registry with the named signals fixed to constant scores."""
        return self.with_overrides(**{n: ConstantEvaluator(float(s)) for n, s in scores.items()})


def _build(spec: Any, where: str) -> SignalEvaluator:
    if not isinstance(spec, dict) or "type" not in spec:
        raise EvaluatorConfigError(f"{where}: expected a mapping with a 'type' key")
    kind = spec["type"]
    params = {k: v for k, v in spec.items() if k != "type"}
    try:
        if kind == "keyword":
            return KeywordEvaluator({str(k): float(v) for k, v in (params.get("wordlist") or {}).items()})
        if kind == "bow_cosine":
            return BowCosineEvaluator(tuple(params.get("candidates") or ()))
        if kind == "regex_pii":
            return RegexPiiEvaluator(dict(params.get("patterns") or DEFAULT_PII_PATTERNS))
        if kind == "authz":
            return AuthzEvaluator({str(k): tuple(v) for k, v in (params.get("role_table") or {}).items()})
        if kind == "constant":
            return ConstantEvaluator(float(params["score"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise EvaluatorConfigError(f"{where}: {exc}") from None
    raise EvaluatorConfigError(f"{where}: unknown evaluator type {kind!r}")


def registry_from_config(data: Mapping[str, Any]) -> EvaluatorRegistry:
    """Build a registry from ``{kinds: {kind: spec}, signals: {name: spec}}``."""
    if not isinstance(data, Mapping):
        raise EvaluatorConfigError("evaluator config must be a mapping")
    by_kind = {}
    for kind, spec in (data.get("kinds") or {}).items():
        try:
            sk = SignalKind(kind)
        except ValueError:
            raise EvaluatorConfigError(f"unknown signal kind {kind!r} in evaluator config") from None
        by_kind[sk] = _build(spec, f"kinds.{kind}")
    by_name = {str(n): _build(spec, f"signals.{n}") for n, spec in (data.get("signals") or {}).items()}
    return EvaluatorRegistry(by_kind, by_name)


def load_registry(path: Union[str, Path, None] = None) -> EvaluatorRegistry:
    """Load an evaluator config file; the shipped mock config when ``path`` is None."""
    if path is None:
        text = resources.files("srpolicy").joinpath("data/mock_evaluators.yaml").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise EvaluatorConfigError(f"evaluator config is not valid YAML: {exc}") from None
    return registry_from_config(data or {})


def default_registry() -> EvaluatorRegistry:
    return load_registry(None)


def pin_evaluators(base: Optional[EvaluatorRegistry] = None, **scores: float) -> EvaluatorRegistry:
    return (base or EvaluatorRegistry()).pinned(**scores)
