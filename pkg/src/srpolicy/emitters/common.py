"""Artifact types and serialization helpers shared by every emitter."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Any, Mapping, Optional

import yaml

from ..ast_core import (
    BUILTIN_BACKENDS,
    CRISP_KINDS,
    DecisionTree,
    Policy,
    Signal,
    SignalKind,
    SignalRef,
    TieBreak,
    fmt_real,
    render_condition,
)
from ..diagnostics import Diagnostic

GENERATOR = "srpolicy"
MANAGED_BY = "dsl-compiler"


class EmissionTarget(str, enum.Enum):
    ROUTING_YAML = "routing_yaml"
    LANGGRAPH_A = "langgraph_a"
    LANGGRAPH_B = "langgraph_b"
    OPENCLAW = "openclaw"
    KUBERNETES = "kubernetes"
    YANG = "yang"
    NETCONF = "netconf"
    PROTOCOL_GATES = "protocol_gates"


ALL_TARGETS = tuple(EmissionTarget)


class ArtifactKind(str, enum.Enum):
    YAML = "yaml"
    JSON = "json"
    XML = "xml"
    YANG = "yang"
    PYTHON_TEXT = "python_text"
    TYPESCRIPT_TEXT = "typescript_text"


@dataclass(frozen=True)
class ArtifactEntry:
    target: EmissionTarget
    path: str
    content: bytes
    kind: ArtifactKind

    @property
    def text(self) -> str:
        return self.content.decode("utf-8")


@dataclass
class ArtifactBundle:
    entries: list[ArtifactEntry]
    source_hash: str
    structural_hashes: dict[str, str]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def by_path(self, path: str) -> ArtifactEntry:
        for e in self.entries:
            if e.path == path:
                return e
        raise KeyError(path)

    def for_target(self, target: EmissionTarget) -> list[ArtifactEntry]:
        return [e for e in self.entries if e.target is EmissionTarget(target)]


def entry(target: EmissionTarget, name: str, text: str, kind: ArtifactKind) -> ArtifactEntry:
    return ArtifactEntry(target, f"{target.value}/{name}", text.encode("utf-8"), kind)


# --------------------------------------------------------------------------
# Numbers and names


def fixed2(value: float) -> Decimal:
    """A real rendered with exactly two fraction digits in JSON and YAML output."""
    return Decimal(fmt_real(value))


def hyphenate(name: str) -> str:
    return name.replace("_", "-").lower()


def node_name(backend: str) -> str:
    """Graph node for a backend; built-in actions get a handler node."""
    return f"{backend}_handler" if backend in BUILTIN_BACKENDS else backend


# --------------------------------------------------------------------------
# Serialization


def dumps_json(obj: Any, indent: int = 2) -> str:
    """Deterministic JSON (2-space indent, insertion key order).

    Decimal values are written verbatim so thresholds keep their two
    fraction digits; everything else is delegated to :mod:`json`.
    """

    def go(o: Any, level: int) -> str:
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, Decimal):
            return str(o)
        if isinstance(o, Mapping):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {go(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + go(v, level + 1) for v in o) + "\n" + end + "]"
        return json.dumps(o, ensure_ascii=False)

    return go(obj, 0) + "\n"


class LiteralStr(str):
    """Emitted as a YAML block literal (``|``)."""


class _Dumper(yaml.SafeDumper):
    def ignore_aliases(self, data: Any) -> bool:
        return True


_Dumper.add_representer(Decimal, lambda d, v: d.represent_scalar("tag:yaml.org,2002:float", str(v)))
_Dumper.add_representer(LiteralStr, lambda d, v: d.represent_scalar("tag:yaml.org,2002:str", str(v), style="|"))
_Dumper.add_representer(tuple, lambda d, v: d.represent_list(list(v)))


def dumps_yaml(obj: Any) -> str:
    return yaml.dump(
        _plain(obj), Dumper=_Dumper, sort_keys=False, default_flow_style=False, allow_unicode=True, indent=2, width=4096
    )


def _plain(obj: Any) -> Any:
    if isinstance(obj, (LiteralStr, Decimal)):
        return obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, str):
        return str(obj)
    return obj


# --------------------------------------------------------------------------
# Shared policy views


def gate_literal(gate: float, k: int, configured: bool) -> str:
    """Source text for a group's normalized-score gate in generated code."""
    if configured:
        return fmt_real(gate)
    return "0.5" if k == 2 else f"(1 / {k})"


def signal_document(sig: Signal) -> dict:
    doc: dict[str, Any] = {"kind": sig.kind.value}
    if sig.threshold is not None:
        doc["threshold"] = fixed2(sig.threshold)
    if sig.candidates:
        doc["candidates"] = list(sig.candidates)
    if sig.pii_types_allowed:
        doc["pii_types_allowed"] = list(sig.pii_types_allowed)
    if sig.keywords:
        doc["keywords"] = list(sig.keywords)
    if sig.role is not None:
        doc["role"] = sig.role
    if sig.subjects:
        doc["subjects"] = [dict(s) for s in sig.subjects]
    return doc


def branch_labels(tree: DecisionTree) -> list[str]:
    """Trace label per branch (ELSE last): the backend name, or ``branch_<i>`` when backends repeat."""
    backends = [b.backend for b in tree.branches] + [tree.else_backend]
    return [b if backends.count(b) == 1 else f"branch_{i}" for i, b in enumerate(backends, start=1)]


def tree_rules(tree: DecisionTree, render=render_condition) -> list[dict]:
    rules = [{"priority": i + 1, "condition": render(b.condition), "backend": b.backend} for i, b in enumerate(tree.branches)]
    if tree.else_backend is not None:
        rules.append({"priority": len(tree.branches) + 1, "condition": "else", "backend": tree.else_backend})
    return rules


def routing_document(policy: Policy) -> dict:
    """The routing configuration shared by the YAML target and the ConfigMap policy.json."""
    doc: dict[str, Any] = {
        "version": policy.version,
        "source_hash": policy.source_hash,
        "signals": {s.name: signal_document(s) for s in policy.signals.values()},
        "signal_groups": {},
        "signal_models": {s.name: s.model for s in policy.signals.values() if s.model},
        "decision_trees": {},
        "routes": [],
        "backends": {b.name: {"kind": b.kind.value, "target": b.target} for b in policy.backends.values()},
    }
    for g in policy.signal_groups.values():
        gdoc: dict[str, Any] = {"members": list(g.members), "temperature": fixed2(g.temperature)}
        if g.threshold is not None:
            gdoc["threshold"] = fixed2(g.threshold)
        gdoc["tie_break"] = g.tie_break.value
        doc["signal_groups"][g.name] = gdoc
    for tree in policy.trees.values():
        doc["decision_trees"][tree.name] = {
            "structural_hash": structural_hash(tree, policy),
            "rules": tree_rules(tree),
        }
    for r in policy.routes:
        rdoc: dict[str, Any] = {"name": r.name, "priority": r.priority, "when": render_condition(r.when), "model": r.model}
        if r.params:
            rdoc["params"] = {k: (fixed2(v) if isinstance(v, float) else v) for k, v in r.params.items()}
        doc["routes"].append(rdoc)
    return doc


def render_policy_json(policy: Policy) -> str:
    return dumps_json(routing_document(policy))


def structural_hash(tree: DecisionTree, policy: Optional[Policy] = None) -> str:
    """Target-independent digest of a tree's decision logic.

    Covers branch order, condition structure, backends and, when the policy
    is given, the thresholds and group gates each reference compiles to.
    """

    def ref(r: SignalRef) -> str:
        text = f"{r.kind.value}({r.name})"
        if policy is None:
            return text
        sig = policy.signals.get(r.name)
        if sig is not None:
            text += f"@{fmt_real(sig.effective_threshold)}"
        grp = policy.group_of.get(r.name)
        if grp is not None:
            text += f"|{grp.name}:{grp.k}:{fmt_real(grp.temperature)}:{grp.tie_break.value}"
            if grp.threshold is not None:
                text += f":{fmt_real(grp.threshold)}"
        return text

    lines = [f"tree {tree.name}"]
    for i, b in enumerate(tree.branches):
        lines.append(f"{i + 1} {render_condition(b.condition, ref)} -> {b.backend}")
    lines.append(f"else -> {tree.else_backend}")
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:8]


def is_crisp_boolean(sig: Signal) -> bool:
    return sig.kind is SignalKind.AUTHZ


def safety_signals(policy: Policy) -> list[Signal]:
    return [s for s in policy.signals.values() if s.kind in (SignalKind.JAILBREAK, SignalKind.PII)]


def hook_tree(policy: Policy) -> Optional[DecisionTree]:
    """The tree guarding outbound tool use: one named *outbound*, else the first declared."""
    trees = list(policy.decision_trees.values())
    for t in trees:
        if "outbound" in t.name:
            return t
    return trees[0] if trees else None


__all__ = [
    "ALL_TARGETS",
    "ArtifactBundle",
    "ArtifactEntry",
    "ArtifactKind",
    "branch_labels",
    "CRISP_KINDS",
    "EmissionTarget",
    "LiteralStr",
    "TieBreak",
    "dumps_json",
    "dumps_yaml",
    "entry",
    "fixed2",
    "hyphenate",
    "node_name",
    "routing_document",
    "render_policy_json",
    "structural_hash",
]
