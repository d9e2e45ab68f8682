"""LangGraph program text: conditional edges (strategy A) or Command nodes (strategy B)."""

from __future__ import annotations

import enum

from ..ast_core import DecisionTree, Policy, SignalKind, SignalRef, TieBreak, fmt_real, render_condition
from .common import (
    GENERATOR,
    ArtifactEntry,
    ArtifactKind,
    EmissionTarget,
    branch_labels,
    entry,
    gate_literal,
    node_name,
    structural_hash,
)


class Strategy(str, enum.Enum):
    A = "A"
    B = "B"


def _ref_expr(policy: Policy, r: SignalRef) -> tuple[str, list[str]]:
    """Python expression for one signal predicate plus any setup lines."""
    sig = policy.signals[r.name]
    key = f's["{r.name}"]'
    if sig.kind is SignalKind.AUTHZ:
        return f"bool({key})", []
    thr = fmt_real(sig.effective_threshold)
    grp = policy.group_of.get(r.name)
    if grp is None:
        return f"{key} > {thr}", []
    var = f"{r.name}_thr"
    op = ">=" if grp.tie_break is TieBreak.PRIORITY_ORDER else ">"
    gate = gate_literal(grp.gate, grp.k, grp.threshold is not None)
    parts = [f"{key} {op} {gate}", f's["{r.name}_raw"] > {var}']
    if grp.k > 2 or grp.tie_break is TieBreak.PRIORITY_ORDER:
        parts.append(f'_group_winner(s, "{grp.name}") == "{r.name}"')
    return "(" + " and ".join(parts) + ")", [f"{var} = {thr}"]


def _branch_code(policy: Policy, cond) -> tuple[str, list[str]]:
    setup: list[str] = []

    def ref(r: SignalRef) -> str:
        expr, lines = _ref_expr(policy, r)
        for line in lines:
            if line not in setup:
                setup.append(line)
        return expr

    return render_condition(cond, ref, ops=("and", "or", "not")), setup


def _targets(tree: DecisionTree) -> list[str]:
    seen: list[str] = []
    for b in tree.backends():
        n = node_name(b)
        if n not in seen:
            seen.append(n)
    return seen


def _literal(names: list[str]) -> str:
    return "Literal[" + ", ".join(f'"{n}"' for n in names) + "]"


def _header(policy: Policy, title: str) -> list[str]:
    lines = [
        f"# Auto-generated by {GENERATOR} from a .sr policy. Do not edit.",
        f"# source_hash: {policy.source_hash}",
    ]
    for tree in policy.trees.values():
        lines.append(f"# structural_hash {tree.name}: {structural_hash(tree, policy)}")
    lines += [f'"""{title}"""', ""]
    return lines


def _prelude(policy: Policy, extra_imports: list[str]) -> list[str]:
    lines = [
        "import math",
        "import operator",
        "import time",
        "from typing import Annotated, Literal, TypedDict",
        "",
        *extra_imports,
        "",
        "from dsl_signal_evaluator import evaluate_signal",
        "",
        f'SOURCE_HASH = "{policy.source_hash}"',
        f'POLICY_VERSION = "{policy.version}"',
        "",
        "",
        "class PolicyState(TypedDict, total=False):",
        "    input: str",
        "    user_roles: list",
        "    signals: dict",
        "    audit_trace: Annotated[list, operator.add]",
        "",
        "",
        "SIGNALS = {",
    ]
    for sig in policy.signals.values():
        spec = f'"kind": "{sig.kind.value}"'
        if sig.model:
            spec += f', "model": "{sig.model}"'
        if sig.kind is not SignalKind.AUTHZ:
            spec += f", \"threshold\": {fmt_real(sig.effective_threshold)}"
        lines.append(f'    "{sig.name}": {{{spec}}},')
    lines += ["}", "", "GROUPS = {"]
    for g in policy.signal_groups.values():
        members = ", ".join(f'"{m}"' for m in g.members)
        lines.append(
            f'    "{g.name}": {{"members": [{members}], "temperature": {fmt_real(g.temperature)}, '
            f'"tie_break": "{g.tie_break.value}"}},'
        )
    lines += [
        "}",
        "",
        "",
        "def _softmax(raw, temperature):",
        "    top = max(raw)",
        "    exps = [math.exp((r - top) / temperature) for r in raw]",
        "    total = math.fsum(exps)",
        "    return [e / total for e in exps]",
        "",
        "",
        "def _group_winner(s, group):",
        '    members = GROUPS[group]["members"]',
        '    raw = [s[m + "_raw"] for m in members]',
        "    top = max(raw)",
        "    tied = [m for m, r in zip(members, raw) if r == top]",
        '    if len(tied) > 1 and GROUPS[group]["tie_break"] == "none":',
        "        return None",
        "    return tied[0]",
        "",
        "",
        "def evaluate_signals(state: PolicyState) -> dict:",
        '    text = state["input"]',
        '    roles = state.get("user_roles", [])',
        "    s = {}",
        "    for name, spec in SIGNALS.items():",
        "        s[name] = evaluate_signal(name=name, input=text, user_roles=roles, **spec)",
        "    for group in GROUPS.values():",
        '        raw = [s[m] for m in group["members"]]',
        '        for m, r, n in zip(group["members"], raw, _softmax(raw, group["temperature"])):',
        '            s[m + "_raw"] = r',
        "            s[m] = n",
        '    return {"signals": s}',
    ]
    return lines


def _edge_function(policy: Policy, tree: DecisionTree) -> list[str]:
    n = len(tree.branches) + 1
    lines = [
        "",
        "",
        f"def route_{tree.name}(",
        "    state: PolicyState,",
        f") -> {_literal(_targets(tree))}:",
        '    s = state["signals"]',
    ]
    for i, br in enumerate(tree.branches, start=1):
        code, setup = _branch_code(policy, br.condition)
        lines.append(f"    # Branch {i}: {render_condition(br.condition)}")
        lines += [f"    {s}" for s in setup]
        lines.append(f"    if {code}:")
        lines.append(f'        return "{node_name(br.backend)}"')
    lines.append(f"    # Branch {n}: ELSE (compiler-required)")
    lines.append(f'    return "{node_name(tree.else_backend)}"')
    return lines


def _command_node(policy: Policy, tree: DecisionTree) -> list[str]:
    n = len(tree.branches) + 1
    labels = branch_labels(tree)
    lines = [
        "",
        "",
        f"def policy_node_{tree.name}(state: PolicyState) -> Command[{_literal(_targets(tree))}]:",
        '    s = evaluate_signals(state)["signals"]',
    ]
    compiled = [_branch_code(policy, br.condition) for br in tree.branches]
    for _, setup in compiled:
        lines += [f"    {s}" for s in setup if f"    {s}" not in lines]
    for i, (br, (code, _)) in enumerate(zip(tree.branches, compiled), start=1):
        lines.append(f"    # Branch {i}: {render_condition(br.condition)}")
        kw = "if" if i == 1 else "elif"
        lines.append(f"    {kw} {code}:")
        lines.append(f'        target, branch, idx = "{node_name(br.backend)}", "{labels[i - 1]}", {i}')
    lines.append(f"    # Branch {n}: ELSE (compiler-required)")
    if tree.branches:
        lines.append("    else:")
        lines.append(f'        target, branch, idx = "{node_name(tree.else_backend)}", "{labels[-1]}", {n}')
    else:
        lines.append(f'    target, branch, idx = "{node_name(tree.else_backend)}", "{labels[-1]}", {n}')
    lines += [
        "    trace = {",
        '        "ts": time.time(),',
        '        "policy_version": POLICY_VERSION,',
        '        "source_hash": SOURCE_HASH,',
        f'        "tree": "{tree.name}",',
        '        "branch": branch,',
        '        "branch_idx": idx,',
        '        "signals": dict(s),',
        "    }",
        '    return Command(update={"signals": s, "audit_trace": [trace]}, goto=target)',
    ]
    return lines


def emit_langgraph(policy: Policy, strategy: Strategy | str = Strategy.A) -> list[ArtifactEntry]:
    """Generated orchestration code; never executed by this package."""
    strategy = Strategy(strategy)
    trees = list(policy.trees.values())
    if strategy is Strategy.A:
        lines = _header(policy, "LangGraph routing via conditional edges.")
        lines += _prelude(policy, ["from langgraph.graph import StateGraph"])
        for tree in trees:
            lines += _edge_function(policy, tree)
        lines += ["", "", "def build_graph(graph: StateGraph) -> StateGraph:"]
        for tree in trees:
            node = "evaluate_signals" if len(trees) == 1 else f"evaluate_signals_{tree.name}"
            lines.append(f'    graph.add_node("{node}", evaluate_signals)')
            lines.append(f'    graph.add_conditional_edges("{node}", route_{tree.name})')
        lines.append("    return graph")
        return [entry(EmissionTarget.LANGGRAPH_A, "policy_graph.py", "\n".join(lines) + "\n", ArtifactKind.PYTHON_TEXT)]
    lines = _header(policy, "LangGraph routing via Command nodes with inline audit traces.")
    lines += _prelude(policy, ["from langgraph.graph import StateGraph", "from langgraph.types import Command"])
    for tree in trees:
        lines += _command_node(policy, tree)
    lines += ["", "", "def build_graph(graph: StateGraph) -> StateGraph:"]
    for tree in trees:
        lines.append(f'    graph.add_node("policy_{tree.name}", policy_node_{tree.name})')
    lines.append("    return graph")
    return [entry(EmissionTarget.LANGGRAPH_B, "policy_nodes.py", "\n".join(lines) + "\n", ArtifactKind.PYTHON_TEXT)]
