"""OpenClaw gateway configuration and ``before_tool_call`` hook."""

from __future__ import annotations

import json
from typing import Any

from ..ast_core import AgentDef, Policy, SandboxMode, SignalKind, SignalRef, fmt_real
from .common import (
    GENERATOR,
    ArtifactEntry,
    ArtifactKind,
    EmissionTarget,
    dumps_json,
    entry,
    fixed2,
    hook_tree,
    safety_signals,
    structural_hash,
)

BASE_TOOLS = ("bash", "read", "write")
# Tools granted only through an explicit capability; never declared by the DSL.
UNDECLARED_TOOLS = ("browser", "canvas", "cron")
DEFAULT_SANDBOX = SandboxMode.ALL


def tools_allow(agent: AgentDef) -> list[str]:
    return list(BASE_TOOLS) + [f"skill:{s}" for s in agent.skills]


def tools_deny(agent: AgentDef) -> list[str]:
    allowed = set(tools_allow(agent))
    return [t for t in UNDECLARED_TOOLS if t not in allowed]


def effective_agent(policy: Policy, agent: AgentDef) -> dict[str, Any]:
    """Sandbox mode and workspace after applying the agent's DEPLOY block."""
    dep = policy.deploys.get(agent.name)
    mode = (dep.sandbox_mode if dep and dep.sandbox_mode else None) or agent.sandbox_mode or DEFAULT_SANDBOX
    workspace = (dep.workspace if dep and dep.workspace else None) or agent.workspace
    return {"sandbox_mode": SandboxMode(mode), "workspace": workspace}


def gateway_document(policy: Policy) -> dict[str, Any]:
    agents = []
    bindings = []
    channels: dict[str, Any] = {}
    for agent in policy.agents.values():
        eff = effective_agent(policy, agent)
        doc: dict[str, Any] = {"id": agent.id, "model": agent.model}
        if eff["workspace"]:
            doc["workspace"] = eff["workspace"]
        doc["sandbox"] = {"mode": eff["sandbox_mode"].value}
        doc["tools"] = {"allow": tools_allow(agent), "deny": tools_deny(agent)}
        agents.append(doc)
        for ch in agent.channels:
            match = {k: v for k, v in ch.items() if k != "dmPolicy"}
            bindings.append({"agentId": agent.id, "match": match})
            if "dmPolicy" in ch:
                channels.setdefault(ch["channel"], {"dmPolicy": ch["dmPolicy"]})
    gates = []
    for sig in safety_signals(policy):
        g: dict[str, Any] = {"signal": sig.name, "threshold": fixed2(sig.effective_threshold)}
        if sig.pii_types_allowed:
            g["pii_types_allowed"] = list(sig.pii_types_allowed)
        gates.append(g)
    return {
        "_dsl_metadata": {
            "generator": GENERATOR,
            "source_hash": policy.source_hash,
            "policy_version": policy.version,
            "policy_trees": list(policy.trees),
            "structural_hashes": {t.name: structural_hash(t, policy) for t in policy.trees.values()},
        },
        "agents": {"list": agents},
        "bindings": bindings,
        "channels": channels,
        "session": {"sendPolicy": {"dsl_safety_gates": gates}},
    }


def _hook_text(policy: Policy) -> str:
    tree = hook_tree(policy)
    h = policy.source_hash
    tree_name = tree.name if tree else "none"
    lines = [
        f"// Auto-generated by {GENERATOR}. Do not edit.",
        f"// (source_hash: {h})",
        f"// Decision tree: {tree_name}",
    ]
    if tree is not None:
        lines.append(f"// structural_hash: {structural_hash(tree, policy)}")
    lines += [
        "",
        'import { evaluateSignal } from "./dsl-signal-evaluator";',
        "",
        "export async function beforeToolCall({",
        "  toolName, toolArgs, sessionKey, agentId,",
        "}) {",
        "  const text = `${toolName} ${Object.values(toolArgs ?? {}).join(\" \")}`;",
    ]
    # Safety prefix: leading deny branches guarded by a single jailbreak or pii signal.
    prefix = []
    if tree is not None:
        for br in tree.branches:
            sig = _single_safety_ref(policy, br.condition)
            if sig is None or br.backend != "deny":
                break
            prefix.append(sig)
    for sig in prefix:
        var = f"{sig.name}_score"
        lines += [
            "",
            f"  const {var} = await evaluateSignal({{",
            f'    kind: "{sig.kind.value}",',
        ]
        if sig.model:
            lines.append(f"    model: {json.dumps(sig.model)},")
        lines.append("    input: text,")
        if sig.pii_types_allowed:
            lines.append(f"    piiTypesAllowed: {json.dumps(list(sig.pii_types_allowed))},")
        lines += [
            "  });",
            f"  if ({var} > {fmt_real(sig.effective_threshold)}) {{",
            f'    return {{ action: "deny", signal: "{sig.name}", score: {var}, source_hash: "{h}" }};',
            "  }",
        ]
    lines += [
        "",
        f'  return {{ action: "allow", tree: "{tree_name}", source_hash: "{h}" }};',
        "}",
    ]
    return "\n".join(lines) + "\n"


def _single_safety_ref(policy: Policy, cond):
    if isinstance(cond, SignalRef) and cond.kind in (SignalKind.JAILBREAK, SignalKind.PII):
        return policy.signals[cond.name]
    return None


def emit_openclaw(policy: Policy) -> list[ArtifactEntry]:
    return [
        entry(EmissionTarget.OPENCLAW, "openclaw.json", dumps_json(gateway_document(policy)), ArtifactKind.JSON),
        entry(EmissionTarget.OPENCLAW, "before_tool_call.ts", _hook_text(policy), ArtifactKind.TYPESCRIPT_TEXT),
    ]
