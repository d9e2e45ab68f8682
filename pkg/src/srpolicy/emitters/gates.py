"""Protocol gate specs: one JSON document per message boundary.

Each spec names the extraction rule, the decision tree to apply and the
thresholds it compiles to. :func:`srpolicy.runtime.interpreter.apply_gate`
is the reference consumer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from ..ast_core import Policy, SignalKind, distinct_refs
from .common import (
    GENERATOR,
    ArtifactEntry,
    ArtifactKind,
    EmissionTarget,
    dumps_json,
    entry,
    fixed2,
    hook_tree,
    signal_document,
    structural_hash,
)

GATE_SPEC_VERSION = 1

# gate name -> (protocol, method, extraction rule)
GATES: dict[str, tuple[str, str, str]] = {
    "mcp_tools_call": ("mcp", "tools/call", "tool_name_and_argument_values"),
    "a2a_tasks_send": ("a2a", "tasks/send", "concatenated_text_parts"),
    "tool_response": ("mcp", "tools/call#result", "raw_response_text"),
}
ALL_GATES = "*"


@dataclass(frozen=True)
class EmitterConfig:
    """Optional knobs that live outside the policy source.

    ``embedding_threshold_override`` maps a gate name (or ``"*"`` for every
    gate) to the embedding threshold that gate should apply at runtime.
    """

    embedding_threshold_override: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for gate, value in self.embedding_threshold_override.items():
            if gate != ALL_GATES and gate not in GATES:
                raise ValueError(f"unknown gate {gate!r}; expected one of {sorted(GATES)}")
            if not 0.0 <= float(value) <= 1.0:
                raise ValueError(f"embedding threshold override for {gate} must be in [0, 1]")

    def override_for(self, gate: str) -> Optional[float]:
        if gate in self.embedding_threshold_override:
            return float(self.embedding_threshold_override[gate])
        if ALL_GATES in self.embedding_threshold_override:
            return float(self.embedding_threshold_override[ALL_GATES])
        return None


def load_emitter_config(path: Union[str, Path]) -> EmitterConfig:
    """Read ``protocol_gates.embedding_threshold_override`` (a number or a gate map) from YAML."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    raw = (data.get("protocol_gates") or {}).get("embedding_threshold_override")
    if raw is None:
        return EmitterConfig()
    if isinstance(raw, (int, float)):
        return EmitterConfig({ALL_GATES: float(raw)})
    if isinstance(raw, dict):
        return EmitterConfig({str(k): float(v) for k, v in raw.items()})
    raise ValueError(f"{path}: embedding_threshold_override must be a number or a mapping")


def gate_document(policy: Policy, gate: str, config: EmitterConfig) -> dict[str, Any]:
    tree = hook_tree(policy)
    if tree is None:
        raise ValueError("protocol gates need at least one decision tree")
    protocol, method, rule = GATES[gate]
    refs = distinct_refs([b.condition for b in tree.branches])
    signals = {r.name: signal_document(policy.signals[r.name]) for r in refs}
    override = config.override_for(gate)
    has_embedding = any(policy.signals[r.name].kind is SignalKind.EMBEDDING for r in refs)
    return {
        "gate_spec_version": GATE_SPEC_VERSION,
        "generator": GENERATOR,
        "gate": gate,
        "protocol": protocol,
        "method": method,
        "extraction": rule,
        "tree": tree.name,
        "structural_hash": structural_hash(tree, policy),
        "signals": signals,
        "embedding_threshold_override": fixed2(override) if override is not None and has_embedding else None,
        "on_deny": "block",
        "audit": {"trace": True, "chain": True, "level": "full"},
        "policy_version": policy.version,
        "source_hash": policy.source_hash,
    }


def emit_protocol_gates(policy: Policy, config: Optional[EmitterConfig] = None) -> list[ArtifactEntry]:
    """Gate specs for every boundary; none when the policy declares no decision tree."""
    if hook_tree(policy) is None:
        return []
    config = config or EmitterConfig()
    return [
        entry(EmissionTarget.PROTOCOL_GATES, f"{gate}.json", dumps_json(gate_document(policy, gate, config)), ArtifactKind.JSON)
        for gate in GATES
    ]
