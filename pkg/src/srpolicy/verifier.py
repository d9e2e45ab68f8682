"""Compile-time checks over a parsed Policy.

Passes run in a fixed order (referential integrity first) and every
diagnostic lands in a VerificationReport. Emission is refused on any error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .ast_core import (
    ROUTE_TABLE,
    DecisionTree,
    MissingDefaultBackend,
    Policy,
    And,
    Not,
    Or,
    Signal,
    SignalGroup,
    SignalKind,
    SignalRef,
    distinct_refs,
    iter_refs,
    routes_to_tree,
)
from .diagnostics import Diagnostic, Severity, error, note, warning

MAX_ENUM_VARIABLES = 20

PASSES = ("referential", "exhaustiveness", "dead_branch", "cofiring", "cross_artifact")


class DecidabilityTier(str, enum.Enum):
    CRISP = "crisp"
    GEOMETRIC = "geometric"
    CLASSIFIER = "classifier"


_TIERS = {
    SignalKind.AUTHZ: DecidabilityTier.CRISP,
    SignalKind.KEYWORD: DecidabilityTier.CRISP,
    SignalKind.EMBEDDING: DecidabilityTier.GEOMETRIC,
    SignalKind.JAILBREAK: DecidabilityTier.CLASSIFIER,
    SignalKind.PII: DecidabilityTier.CLASSIFIER,
    SignalKind.COMPLEXITY: DecidabilityTier.CLASSIFIER,
}


def classify_signal(signal: Signal) -> DecidabilityTier:
    return _TIERS[signal.kind]


@dataclass
class PassResult:
    name: str
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)


@dataclass
class VerificationReport:
    passes: dict[str, PassResult]
    tiers: dict[str, DecidabilityTier] = field(default_factory=dict)

    @property
    def diagnostics(self) -> list[Diagnostic]:
        return [d for p in self.passes.values() for d in p.diagnostics]

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.WARNING]

    @property
    def overall(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "overall": "pass" if self.overall else "fail",
            "passes": {
                name: {"status": "pass" if p.passed else "fail", "diagnostics": [d.to_dict() for d in p.diagnostics]}
                for name, p in self.passes.items()
            },
            "tiers": {name: tier.value for name, tier in self.tiers.items()},
        }


# --------------------------------------------------------------------------
# Exhaustiveness and reachability


def check_exhaustiveness(tree: DecisionTree) -> list[Diagnostic]:
    if tree.else_backend is None:
        return [error("E010_MISSING_ELSE", f"decision tree {tree.name} has no final ELSE branch", tree.span)]
    return []


def _var_table(k: int, n: int) -> int:
    """Bitset over all 2**n assignments: bit a is set iff variable k is true in assignment a."""
    size = 1 << n
    if k < 3:
        byte = (0xAA, 0xCC, 0xF0)[k]
        table = int.from_bytes(bytes([byte]) * max(1, size // 8), "little")
    else:
        run = 1 << (k - 3)
        table = int.from_bytes((b"\x00" * run + b"\xff" * run) * (size // (2 * run * 8)), "little")
    return table & ((1 << size) - 1)


def _truth(cond, tables: dict, full: int) -> int:
    if isinstance(cond, SignalRef):
        return tables[(cond.kind, cond.name)]
    if isinstance(cond, Not):
        return full ^ _truth(cond.child, tables, full)
    if isinstance(cond, And):
        return _truth(cond.left, tables, full) & _truth(cond.right, tables, full)
    if isinstance(cond, Or):
        return _truth(cond.left, tables, full) | _truth(cond.right, tables, full)
    raise TypeError(cond)


def reachable_branches(tree: DecisionTree) -> list[bool]:
    """For each non-ELSE branch: is it selected under at least one assignment?

    Every distinct signal reference is a free boolean. All 2**n assignments
    are evaluated at once as bitsets; branch i is reachable iff some
    assignment makes its condition true and every earlier condition false.
    """
    refs = distinct_refs([b.condition for b in tree.branches])
    n = len(refs)
    if n > MAX_ENUM_VARIABLES:
        raise ValueError(f"{n} variables exceeds the enumeration limit of {MAX_ENUM_VARIABLES}")
    full = (1 << (1 << n)) - 1
    tables = {(r.kind, r.name): _var_table(i, n) for i, r in enumerate(refs)}
    remaining = full
    out = []
    for br in tree.branches:
        t = _truth(br.condition, tables, full)
        out.append(bool(t & remaining))
        remaining &= full ^ t
    return out


def check_dead_branches(tree: DecisionTree, policy: Optional[Policy] = None) -> list[Diagnostic]:
    refs = distinct_refs([b.condition for b in tree.branches])
    if len(refs) > MAX_ENUM_VARIABLES:
        return [
            error(
                "E021_TOO_MANY_VARIABLES",
                f"decision tree {tree.name} has {len(refs)} distinct signal references; "
                f"exhaustive analysis is limited to {MAX_ENUM_VARIABLES}",
                tree.span,
            )
        ]
    n = len(refs)
    full = (1 << (1 << n)) - 1
    tables = {(r.kind, r.name): _var_table(i, n) for i, r in enumerate(refs)}
    truths = [_truth(b.condition, tables, full) for b in tree.branches]
    diags: list[Diagnostic] = []
    remaining = full
    for i, (br, t) in enumerate(zip(tree.branches, truths)):
        if not t & remaining:
            if t == 0:
                msg = f"branch {i + 1} of {tree.name} (-> {br.backend}) can never fire: its condition is unsatisfiable"
                related = []
            else:
                shadowers = [j for j in range(i) if truths[j] & t]
                listed = ", ".join(str(j + 1) for j in shadowers)
                msg = f"branch {i + 1} of {tree.name} (-> {br.backend}) is shadowed by earlier branch(es) {listed}"
                related = [tree.branches[j].span for j in shadowers]
            diags.append(warning("W020_SHADOWED_BRANCH", msg, br.span, related))
        remaining &= full ^ t
    if policy is not None:
        geometric = [r.name for r in refs if r.kind is SignalKind.EMBEDDING]
        if geometric:
            diags.append(
                note(
                    "W050_GEOMETRIC_UNCHECKED",
                    f"{tree.name}: embedding signals {', '.join(geometric)} treated as free booleans; "
                    "geometric overlap is not checked at compile time",
                    tree.span,
                )
            )
    return diags


# --------------------------------------------------------------------------
# Groups


def check_group_cofiring(group: SignalGroup, policy: Policy) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    k = group.k
    if group.threshold is not None and group.threshold <= 1.0 / k:
        diags.append(
            error(
                "E030_THRESHOLD_TOO_LOW",
                f"group {group.name} firing threshold {group.threshold:.2f} must exceed 1/k = {1.0 / k:.4f}",
                group.span,
            )
        )
    if group.tie_break.value == "none":
        diags.append(
            warning(
                "W010_GROUP_TIE",
                f"group {group.name} (k={k}) has no tie-breaking strategy; equal raw scores fall through to the default branch",
                group.span,
            )
        )
    if group.temperature > 1.0:
        diags.append(
            warning(
                "W011_HIGH_TEMPERATURE",
                f"group {group.name} temperature {group.temperature:.2f} > 1.0 weakens score separation",
                group.span,
            )
        )
    return diags


# --------------------------------------------------------------------------
# Referential integrity


def _tree_sources(policy: Policy) -> list[DecisionTree]:
    trees = list(policy.decision_trees.values())
    if policy.routes and policy.global_block.default_backend:
        tree, _ = routes_to_tree(policy)
        trees.append(tree)
    return trees


def check_referential_integrity(policy: Policy) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    backends = policy.backend_names()

    def check_ref(ref) -> None:
        sig = policy.signals.get(ref.name)
        if sig is None:
            diags.append(error("E001_UNDEFINED_SIGNAL", f"signal {ref.name!r} is not declared", ref.span))
        elif sig.kind is not ref.kind:
            diags.append(
                error(
                    "E002_KIND_MISMATCH",
                    f"{ref.kind.value}({ref.name!r}) refers to a {sig.kind.value} signal",
                    ref.span,
                    related=[sig.span],
                )
            )

    def check_backend(name: str, span, where: str) -> None:
        if name not in backends:
            diags.append(error("E003_UNDEFINED_BACKEND", f"backend {name!r} used in {where} is not declared", span))

    for tree in policy.decision_trees.values():
        for br in tree.branches:
            for ref in iter_refs(br.condition):
                check_ref(ref)
            check_backend(br.backend, br.span, f"decision tree {tree.name}")
        if tree.else_backend is not None:
            check_backend(tree.else_backend, tree.span, f"decision tree {tree.name}")

    if ROUTE_TABLE in policy.decision_trees and policy.routes:
        diags.append(
            error("E111_DUPLICATE_NAME", f"decision tree name {ROUTE_TABLE!r} is reserved for routes", policy.decision_trees[ROUTE_TABLE].span)
        )
    if policy.routes:
        try:
            tree, tie_diags = routes_to_tree(policy)
        except MissingDefaultBackend as exc:
            diags.append(error("E011_MISSING_DEFAULT_BACKEND", str(exc), policy.routes[0].span))
            tree, tie_diags = None, []
        diags.extend(tie_diags)
        for route in policy.routes:
            for ref in iter_refs(route.when):
                check_ref(ref)
        if tree is not None:
            for br in tree.branches:
                check_backend(br.backend, br.span, f"route {ROUTE_TABLE}")
            check_backend(tree.else_backend, policy.global_block.span, "GLOBAL default_backend")
    elif policy.global_block.default_backend:
        check_backend(policy.global_block.default_backend, policy.global_block.span, "GLOBAL default_backend")

    membership: dict[str, str] = {}
    for group in policy.signal_groups.values():
        for m in group.members:
            sig = policy.signals.get(m)
            if sig is None:
                diags.append(error("E001_UNDEFINED_SIGNAL", f"group {group.name} member {m!r} is not declared", group.span))
            elif sig.kind is not SignalKind.EMBEDDING:
                diags.append(
                    error(
                        "E002_KIND_MISMATCH",
                        f"group {group.name} member {m!r} is a {sig.kind.value} signal; groups hold embedding signals",
                        group.span,
                        related=[sig.span],
                    )
                )
            if m in membership:
                diags.append(
                    error("E033_MULTIPLE_GROUPS", f"signal {m!r} belongs to both {membership[m]} and {group.name}", group.span)
                )
            membership.setdefault(m, group.name)

    for tc in policy.tests:
        check_backend(tc.expected_decision, tc.span, f"test {tc.name}")
    return diags


# --------------------------------------------------------------------------
# Cross-artifact consistency


def check_cross_artifact(policy: Policy) -> list[Diagnostic]:
    from .emitters.openclaw import tools_allow

    diags: list[Diagnostic] = []
    endpoint_skills = {n.skill for n in policy.networks.values()}
    for agent in policy.agents.values():
        for skill in agent.skills:
            if skill not in endpoint_skills:
                diags.append(
                    error(
                        "E040_SKILL_WITHOUT_ENDPOINT",
                        f"agent {agent.name} uses skill {skill!r} but no NETWORK block provides it",
                        agent.span,
                    )
                )
        allow = set(tools_allow(agent))
        for net in policy.networks.values():
            if net.skill in agent.skills and f"skill:{net.skill}" not in allow:
                diags.append(
                    error(
                        "E041_ENDPOINT_UNREACHABLE_TOOL",
                        f"endpoint {net.name} skill {net.skill!r} is missing from agent {agent.name} tools.allow",
                        net.span,
                    )
                )
    for sig in policy.signals.values():
        if sig.model:
            diags.append(
                note(
                    "W042_MODEL_EGRESS_IMPLIED",
                    f"signal {sig.name} model {sig.model!r} requires model-registry egress",
                    sig.span,
                )
            )
    for b in policy.backends.values():
        if not b.target.strip():
            diags.append(error("E043_EMPTY_BACKEND_TARGET", f"backend {b.name} has an empty target", b.span))
    for d in policy.deploys.values():
        agent = policy.agents.get(d.agent)
        if agent is None:
            diags.append(error("E044_DEPLOY_UNKNOWN_AGENT", f"DEPLOY {d.agent} names no declared AGENT", d.span))
            continue
        for attr in ("sandbox_mode", "workspace"):
            a, b = getattr(agent, attr), getattr(d, attr)
            if a is not None and b is not None and a != b:
                diags.append(
                    error(
                        "E045_DEPLOY_CONFLICT",
                        f"AGENT {agent.name} and its DEPLOY disagree on {attr}",
                        d.span,
                        related=[agent.span],
                    )
                )
    return diags


# --------------------------------------------------------------------------


def verify(policy: Policy) -> VerificationReport:
    passes = {name: PassResult(name) for name in PASSES}
    passes["referential"].diagnostics.extend(check_referential_integrity(policy))
    trees = _tree_sources(policy)
    for tree in trees:
        passes["exhaustiveness"].diagnostics.extend(check_exhaustiveness(tree))
    for tree in trees:
        passes["dead_branch"].diagnostics.extend(check_dead_branches(tree, policy))
    for group in policy.signal_groups.values():
        passes["cofiring"].diagnostics.extend(check_group_cofiring(group, policy))
    passes["cross_artifact"].diagnostics.extend(check_cross_artifact(policy))
    tiers = {s.name: classify_signal(s) for s in policy.signals.values()}
    return VerificationReport(passes, tiers)
