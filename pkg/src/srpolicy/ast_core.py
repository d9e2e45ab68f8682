"""Typed AST for ``.sr`` policies with canonical serialization and source hashing.

Every node is a frozen dataclass. Ordered maps are exposed as read-only
mappings whose iteration order is declaration order. Source spans ride along
on nodes but are excluded from equality, so a policy re-parsed from its
canonical text compares equal to the original.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Callable, Iterator, Mapping, Optional, Sequence, Union

from .diagnostics import UNKNOWN_SPAN, Diagnostic, SourceSpan, warning


class PolicyError(ValueError):
    """A node violates one of its construction invariants."""


class MissingDefaultBackend(PolicyError):
    pass


class SignalKind(str, enum.Enum):
    JAILBREAK = "jailbreak"
    PII = "pii"
    EMBEDDING = "embedding"
    AUTHZ = "authz"
    KEYWORD = "keyword"
    COMPLEXITY = "complexity"


CRISP_KINDS = frozenset({SignalKind.AUTHZ, SignalKind.KEYWORD})
SAFETY_KINDS = (SignalKind.JAILBREAK, SignalKind.PII)


class TieBreak(str, enum.Enum):
    NONE = "none"
    PRIORITY_ORDER = "priority_order"


class BackendKind(str, enum.Enum):
    MODEL = "model"
    ACTION = "action"


class SandboxMode(str, enum.Enum):
    ALL = "all"
    NON_MAIN = "non-main"
    OFF = "off"


BUILTIN_BACKENDS = ("allow", "deny")
ROUTE_TABLE = "route_table"
DEFAULT_VERSION = "unversioned"

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
HEX8_RE = re.compile(r"[0-9a-f]{8}\Z")


def _frozen_map(m: Optional[Mapping]) -> Mapping:
    return MappingProxyType(dict(m or {}))


def _check_real(value: float, what: str, lo: float = 0.0, hi: float = 1.0) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise PolicyError(f"{what} must be a number, got {value!r}")
    if not (lo <= value <= hi):
        raise PolicyError(f"{what} {value} outside [{lo}, {hi}]")
    if abs(round(value, 2) - value) > 1e-12:
        raise PolicyError(f"{what} {value} has more than two fraction digits")


def fmt_real(value: float) -> str:
    """Render a DSL real with exactly two fraction digits."""
    return f"{value:.2f}"


# --------------------------------------------------------------------------
# Condition expressions


@dataclass(frozen=True)
class SignalRef:
    kind: SignalKind
    name: str
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class And:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Or:
    left: "Condition"
    right: "Condition"


@dataclass(frozen=True)
class Not:
    child: "Condition"


Condition = Union[SignalRef, And, Or, Not]


def iter_refs(cond: Condition) -> Iterator[SignalRef]:
    if isinstance(cond, SignalRef):
        yield cond
    elif isinstance(cond, Not):
        yield from iter_refs(cond.child)
    else:
        yield from iter_refs(cond.left)
        yield from iter_refs(cond.right)


def distinct_refs(conds: Sequence[Condition]) -> list[SignalRef]:
    """Distinct (kind, name) references in first-occurrence order."""
    seen: dict[tuple, SignalRef] = {}
    for c in conds:
        for r in iter_refs(c):
            seen.setdefault((r.kind, r.name), r)
    return list(seen.values())


def eval_condition(cond: Condition, truth: Callable[[SignalRef], bool]) -> bool:
    if isinstance(cond, SignalRef):
        return truth(cond)
    if isinstance(cond, Not):
        return not eval_condition(cond.child, truth)
    if isinstance(cond, And):
        return eval_condition(cond.left, truth) and eval_condition(cond.right, truth)
    return eval_condition(cond.left, truth) or eval_condition(cond.right, truth)


_PREC = {Or: 1, And: 2, Not: 3, SignalRef: 4}


def render_condition(
    cond: Condition,
    ref: Callable[[SignalRef], str] = lambda r: f'{r.kind.value}("{r.name}")',
    ops: tuple[str, str, str] = ("AND", "OR", "NOT"),
) -> str:
    """Render with the minimal parentheses implied by NOT > AND > OR."""
    and_op, or_op, not_op = ops

    def go(c: Condition, parent: int) -> str:
        p = _PREC[type(c)]
        if isinstance(c, SignalRef):
            text = ref(c)
        elif isinstance(c, Not):
            text = f"{not_op} {go(c.child, p)}"
        elif isinstance(c, And):
            # left-associative: a right operand of equal precedence needs parens
            text = f"{go(c.left, p)} {and_op} {go(c.right, p + 1)}"
        else:
            text = f"{go(c.left, p)} {or_op} {go(c.right, p + 1)}"
        return f"({text})" if p < parent else text

    return go(cond, 0)


# --------------------------------------------------------------------------
# Declarations


@dataclass(frozen=True)
class Signal:
    name: str
    kind: SignalKind
    threshold: Optional[float] = None
    model: Optional[str] = None
    candidates: tuple[str, ...] = ()
    pii_types_allowed: tuple[str, ...] = ()
    keywords: tuple[str, ...] = ()
    subjects: tuple[Mapping[str, Any], ...] = ()
    role: Optional[str] = None
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SignalKind(self.kind))
        object.__setattr__(self, "subjects", tuple(_frozen_map(s) for s in self.subjects))
        k = self.kind
        if not self.name:
            raise PolicyError("signal name must be nonempty")
        if self.threshold is not None:
            _check_real(self.threshold, f"signal {self.name} threshold")
            object.__setattr__(self, "threshold", float(self.threshold))
        elif k not in CRISP_KINDS:
            raise PolicyError(f"{k.value} signal {self.name} requires a threshold")
        if k not in CRISP_KINDS and not self.model:
            raise PolicyError(f"{k.value} signal {self.name} requires a model")
        if k is SignalKind.EMBEDDING and not self.candidates:
            raise PolicyError(f"embedding signal {self.name} requires nonempty candidates")
        if k is SignalKind.AUTHZ and not self.role:
            raise PolicyError(f"authz signal {self.name} requires a role")
        forbidden = {
            "candidates": (self.candidates, SignalKind.EMBEDDING),
            "pii_types_allowed": (self.pii_types_allowed, SignalKind.PII),
            "keywords": (self.keywords, SignalKind.KEYWORD),
            "subjects": (self.subjects, SignalKind.AUTHZ),
            "role": (self.role, SignalKind.AUTHZ),
        }
        for attr, (value, owner) in forbidden.items():
            if value and k is not owner:
                raise PolicyError(f"{attr} is not allowed on {k.value} signal {self.name}")

    @property
    def effective_threshold(self) -> float:
        return 0.5 if self.threshold is None else self.threshold


@dataclass(frozen=True)
class SignalGroup:
    name: str
    members: tuple[str, ...]
    temperature: float
    tie_break: TieBreak = TieBreak.NONE
    # Optional explicit firing gate on normalized scores; 1/k when absent.
    threshold: Optional[float] = None
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if len(self.members) < 2:
            raise PolicyError(f"signal group {self.name} needs at least 2 members")
        if len(set(self.members)) != len(self.members):
            raise PolicyError(f"signal group {self.name} lists a member twice")
        if not isinstance(self.temperature, (int, float)) or self.temperature <= 0:
            raise PolicyError(f"signal group {self.name} temperature must be > 0")
        _check_real(self.temperature, f"group {self.name} temperature", 0.0, float("inf"))
        object.__setattr__(self, "temperature", float(self.temperature))
        if self.threshold is not None:
            _check_real(self.threshold, f"group {self.name} threshold")
            object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def k(self) -> int:
        return len(self.members)

    @property
    def gate(self) -> float:
        return 1.0 / self.k if self.threshold is None else self.threshold


@dataclass(frozen=True)
class Branch:
    condition: Condition
    backend: str
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class DecisionTree:
    name: str
    branches: tuple[Branch, ...]
    else_backend: Optional[str]
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "branches", tuple(self.branches))

    @property
    def leaf_count(self) -> int:
        return len(self.branches) + (1 if self.else_backend is not None else 0)

    def backends(self) -> list[str]:
        out = [b.backend for b in self.branches]
        if self.else_backend is not None:
            out.append(self.else_backend)
        return out


@dataclass(frozen=True)
class Route:
    name: str
    priority: int
    when: Condition
    model: str
    params: Mapping[str, Any] = field(default_factory=dict)
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.priority, bool) or not isinstance(self.priority, int):
            raise PolicyError(f"route {self.name} priority must be an integer")
        object.__setattr__(self, "params", _frozen_map(self.params))


@dataclass(frozen=True)
class Backend:
    name: str
    kind: BackendKind
    target: str
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if not self.name:
            raise PolicyError("backend name must be nonempty")


@dataclass(frozen=True)
class NetworkEndpoint:
    name: str
    host: str
    port: int
    methods: tuple[str, ...] = ()
    paths: tuple[str, ...] = ()
    skill: str = ""
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        if isinstance(self.port, bool) or not isinstance(self.port, int) or not 1 <= self.port <= 65535:
            raise PolicyError(f"network {self.name} port must be an integer in 1..65535")
        if not self.skill:
            raise PolicyError(f"network {self.name} requires a skill")
        if not self.host:
            raise PolicyError(f"network {self.name} requires a host")


@dataclass(frozen=True)
class AgentDef:
    name: str
    model: str
    skills: tuple[str, ...] = ()
    sandbox_mode: Optional[SandboxMode] = None
    workspace: Optional[str] = None
    channels: tuple[Mapping[str, Any], ...] = ()
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.sandbox_mode is not None:
            object.__setattr__(self, "sandbox_mode", SandboxMode(self.sandbox_mode))
        object.__setattr__(self, "channels", tuple(_frozen_map(c) for c in self.channels))
        if not self.model:
            raise PolicyError(f"agent {self.name} requires a model")
        for ch in self.channels:
            if "channel" not in ch:
                raise PolicyError(f"agent {self.name} channel entries need a 'channel' key")

    @property
    def id(self) -> str:
        return self.name.replace("_", "-").lower()


@dataclass(frozen=True)
class DeployDef:
    agent: str
    sandbox_mode: Optional[SandboxMode] = None
    workspace: Optional[str] = None
    replicas: Optional[int] = None
    cpu: Optional[str] = None
    memory: Optional[str] = None
    image: Optional[str] = None
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.sandbox_mode is not None:
            object.__setattr__(self, "sandbox_mode", SandboxMode(self.sandbox_mode))
        if self.replicas is not None and (
            isinstance(self.replicas, bool) or not isinstance(self.replicas, int) or self.replicas < 0
        ):
            raise PolicyError(f"deploy {self.agent} replicas must be a non-negative integer")


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # not a pytest class

    name: str
    input: str
    expected_decision: str
    user_roles: tuple[str, ...] = ()
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class PluginDef:
    kind: str
    name: str
    attrs: Mapping[str, Any] = field(default_factory=dict)
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "attrs", _frozen_map(self.attrs))


@dataclass(frozen=True)
class GlobalBlock:
    version: Optional[str] = None
    name: Optional[str] = None
    namespace: Optional[str] = None
    default_backend: Optional[str] = None
    span: SourceSpan = field(default=UNKNOWN_SPAN, compare=False, repr=False)


@dataclass(frozen=True)
class Policy:
    signals: Mapping[str, Signal] = field(default_factory=dict)
    signal_groups: Mapping[str, SignalGroup] = field(default_factory=dict)
    decision_trees: Mapping[str, DecisionTree] = field(default_factory=dict)
    routes: tuple[Route, ...] = ()
    backends: Mapping[str, Backend] = field(default_factory=dict)
    networks: Mapping[str, NetworkEndpoint] = field(default_factory=dict)
    agents: Mapping[str, AgentDef] = field(default_factory=dict)
    deploys: Mapping[str, DeployDef] = field(default_factory=dict)
    tests: tuple[TestCase, ...] = ()
    plugins: tuple[PluginDef, ...] = ()
    global_block: GlobalBlock = field(default_factory=GlobalBlock)

    def __post_init__(self) -> None:
        for name in ("signals", "signal_groups", "decision_trees", "backends", "networks", "agents", "deploys"):
            object.__setattr__(self, name, _frozen_map(getattr(self, name)))
        for name in ("routes", "tests", "plugins"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def version(self) -> str:
        return self.global_block.version or DEFAULT_VERSION

    @property
    def name(self) -> str:
        return self.global_block.name or "policy"

    @property
    def namespace(self) -> str:
        return self.global_block.namespace or "agents"

    @cached_property
    def source_hash(self) -> str:
        return compute_source_hash(self)

    @cached_property
    def group_of(self) -> Mapping[str, SignalGroup]:
        """Member signal name -> its (first) group."""
        out: dict[str, SignalGroup] = {}
        for g in self.signal_groups.values():
            for m in g.members:
                out.setdefault(m, g)
        return MappingProxyType(out)

    @cached_property
    def trees(self) -> Mapping[str, DecisionTree]:
        """Declared trees followed by the synthesized route table, if any."""
        out = dict(self.decision_trees)
        if self.routes and self.global_block.default_backend:
            tree, _ = routes_to_tree(self)
            if tree is not None and ROUTE_TABLE not in out:
                out[ROUTE_TABLE] = tree
        return MappingProxyType(out)

    def backend_names(self) -> set[str]:
        return set(BUILTIN_BACKENDS) | set(self.backends)


# --------------------------------------------------------------------------
# Canonical text


def _render_value(v: Any, bare_idents: bool = False) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_real(v)
    if isinstance(v, str):
        if bare_idents and IDENT_RE.match(v) and not _is_keyword(v):
            return v
        return json.dumps(v, ensure_ascii=False)
    if isinstance(v, Mapping):
        inner = ", ".join(f"{k}: {_render_value(x, bare_idents)}" for k, x in v.items())
        return "{ " + inner + " }" if inner else "{}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_render_value(x, bare_idents) for x in v) + "]"
    raise TypeError(f"cannot render {v!r}")


def _is_keyword(word: str) -> bool:
    from .lexer import KEYWORDS

    return word in KEYWORDS or word in ("true", "false")


def _name(v: str) -> str:
    return _render_value(v, bare_idents=True)


def _block(header: str, lines: list[str]) -> str:
    if not lines:
        return header + " {\n}"
    return header + " {\n" + "\n".join("  " + ln for ln in lines) + "\n}"


def _attrs(pairs: Sequence[tuple[str, Any]], bare: Sequence[str] = ()) -> list[str]:
    out = []
    for key, value in pairs:
        if value is None or value == () or value == []:
            continue
        out.append(f"{key}: {_render_value(value, bare_idents=key in bare)}")
    return out


def canonicalize(policy: Policy) -> str:
    """Deterministic text form: fixed block and attribute order, reals as two fraction digits."""
    blocks: list[str] = []
    g = policy.global_block
    glines = _attrs(
        [("version", g.version), ("name", g.name), ("namespace", g.namespace), ("default_backend", g.default_backend)],
        bare=("default_backend",),
    )
    if glines:
        blocks.append(_block("GLOBAL", glines))
    for s in policy.signals.values():
        lines = _attrs(
            [
                ("threshold", s.threshold),
                ("model", s.model),
                ("candidates", s.candidates),
                ("pii_types_allowed", s.pii_types_allowed),
                ("keywords", s.keywords),
                ("subjects", s.subjects),
                ("role", s.role),
            ]
        )
        blocks.append(_block(f"SIGNAL {s.kind.value} {s.name}", lines))
    for grp in policy.signal_groups.values():
        lines = _attrs(
            [
                ("signals", grp.members),
                ("temperature", grp.temperature),
                ("threshold", grp.threshold),
                ("tie_break", None if grp.tie_break is TieBreak.NONE else grp.tie_break.value),
            ],
            bare=("signals", "tie_break"),
        )
        blocks.append(_block(f"SIGNAL_GROUP {grp.name}", lines))
    for b in policy.backends.values():
        blocks.append(_block(f"BACKEND {b.kind.value} {b.name}", [f"target: {_render_value(b.target)}"]))
    for t in policy.decision_trees.values():
        lines = []
        for i, br in enumerate(t.branches):
            kw = "IF" if i == 0 else "ELSE IF"
            lines.append(f"{kw} {render_condition(br.condition)} {{ BACKEND {_name(br.backend)} }}")
        if t.else_backend is not None:
            lines.append(f"ELSE {{ BACKEND {_name(t.else_backend)} }}")
        blocks.append(_block(f"DECISION_TREE {t.name}", lines))
    for r in policy.routes:
        model = f"MODEL {_render_value(r.model)}"
        if r.params:
            model += " (" + ", ".join(f"{k} = {_render_value(v, True)}" for k, v in r.params.items()) + ")"
        lines = [f"PRIORITY {r.priority}", f"WHEN {render_condition(r.when)}", model]
        blocks.append(_block(f"ROUTE {r.name}", lines))
    for n in policy.networks.values():
        lines = _attrs(
            [("host", n.host), ("port", n.port), ("methods", n.methods), ("paths", n.paths), ("skill", n.skill)]
        )
        blocks.append(_block(f"NETWORK {n.name}", lines))
    for a in policy.agents.values():
        lines = _attrs(
            [
                ("model", a.model),
                ("skills", a.skills),
                ("sandbox_mode", a.sandbox_mode.value if a.sandbox_mode else None),
                ("workspace", a.workspace),
                ("channels", a.channels),
            ]
        )
        blocks.append(_block(f"AGENT {a.name}", lines))
    for d in policy.deploys.values():
        lines = _attrs(
            [
                ("sandbox_mode", d.sandbox_mode.value if d.sandbox_mode else None),
                ("workspace", d.workspace),
                ("replicas", d.replicas),
                ("cpu", d.cpu),
                ("memory", d.memory),
                ("image", d.image),
            ]
        )
        blocks.append(_block(f"DEPLOY {d.agent}", lines))
    for p in policy.plugins:
        blocks.append(_block(f"PLUGIN {p.kind} {p.name}", _attrs(list(p.attrs.items()))))
    for tc in policy.tests:
        lines = _attrs(
            [("input", tc.input), ("user_roles", tc.user_roles), ("expect", {"decision": tc.expected_decision})]
        )
        blocks.append(_block(f"TEST {tc.name}", lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def compute_source_hash(policy: Policy) -> str:
    """First 8 hex digits of SHA-256 over the canonical text."""
    return hashlib.sha256(canonicalize(policy).encode("utf-8")).hexdigest()[:8]


# --------------------------------------------------------------------------
# Route synthesis


def _resolve_route_model(policy: Policy, model: str) -> str:
    if model in policy.backends or model in BUILTIN_BACKENDS:
        return model
    for b in policy.backends.values():
        if b.kind is BackendKind.MODEL and b.target == model:
            return b.name
    return model


def routes_to_tree(policy: Policy) -> tuple[Optional[DecisionTree], list[Diagnostic]]:
    """Fold ROUTE blocks into a priority-ordered tree named ``route_table``.

    Higher priority is evaluated first; equal priorities keep declaration
    order and produce a W012 warning.
    """
    if not policy.routes:
        return None, []
    default = policy.global_block.default_backend
    if not default:
        raise MissingDefaultBackend("routes are declared but GLOBAL has no default_backend")
    order = sorted(range(len(policy.routes)), key=lambda i: (-policy.routes[i].priority, i))
    diags: list[Diagnostic] = []
    by_priority: dict[int, list[Route]] = {}
    for r in policy.routes:
        by_priority.setdefault(r.priority, []).append(r)
    for prio, group in by_priority.items():
        if len(group) > 1:
            names = ", ".join(r.name for r in group)
            diags.append(
                warning(
                    "W012_ROUTE_PRIORITY_TIE",
                    f"routes {names} share PRIORITY {prio}; declaration order breaks the tie",
                    group[1].span,
                    related=[r.span for r in group[:1]],
                )
            )
    branches = tuple(
        Branch(policy.routes[i].when, _resolve_route_model(policy, policy.routes[i].model), policy.routes[i].span)
        for i in order
    )
    return DecisionTree(ROUTE_TABLE, branches, default), diags
