"""Recursive-descent parser for ``.sr`` policy source.

Errors are collected rather than raised: a malformed block is reported and
skipped, and parsing resumes at the next top-level block keyword.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional, Union

from .ast_core import (
    AgentDef,
    And,
    Backend,
    BackendKind,
    Branch,
    Condition,
    DecisionTree,
    DeployDef,
    GlobalBlock,
    NetworkEndpoint,
    Not,
    Or,
    PluginDef,
    Policy,
    PolicyError,
    Route,
    SandboxMode,
    Signal,
    SignalGroup,
    SignalKind,
    SignalRef,
    TestCase,
    TieBreak,
)
from .diagnostics import Diagnostic, DiagnosticError, SourceSpan, error, has_errors
from .lexer import Tok, Token, tokenize

TOP_LEVEL = frozenset(
    {"SIGNAL", "SIGNAL_GROUP", "DECISION_TREE", "ROUTE", "NETWORK", "AGENT", "DEPLOY", "TEST", "GLOBAL", "PLUGIN"}
)
# Constructs the language deliberately lacks.
UNSUPPORTED = frozenset(
    {"FOR", "FOREACH", "WHILE", "LOOP", "REPEAT", "LET", "SET", "VAR", "DEF", "FUNCTION", "CALL", "RETURN", "GOTO"}
)
MAX_CONDITION_DEPTH = 64


class ParseError(DiagnosticError):
    pass


class Ident(str):
    """A bare identifier used as a value (as opposed to a quoted string)."""


class _Abort(Exception):
    def __init__(self, diag: Diagnostic) -> None:
        self.diag = diag


_SIGNAL_ATTRS = ("threshold", "model", "candidates", "pii_types_allowed", "keywords", "subjects", "role")
_GROUP_ATTRS = ("signals", "temperature", "tie_break", "threshold")
_NETWORK_ATTRS = ("host", "port", "methods", "paths", "skill")
_AGENT_ATTRS = ("model", "skills", "sandbox_mode", "workspace", "channels")
_DEPLOY_ATTRS = ("sandbox_mode", "workspace", "replicas", "cpu", "memory", "image")
_TEST_ATTRS = ("input", "user_roles", "expect")
_GLOBAL_ATTRS = ("version", "name", "namespace", "default_backend")


class _Parser:
    def __init__(self, tokens: list[Token], file: str) -> None:
        self.toks = tokens
        self.pos = 0
        self.file = file
        self.diags: list[Diagnostic] = []

    # -- token helpers ---------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        if tok.type is not Tok.EOF:
            self.pos += 1
        return tok

    def span(self, tok: Token) -> SourceSpan:
        return tok.span(self.file)

    def span_between(self, first: Token, last: Token) -> SourceSpan:
        end = max((first.end_line, first.end_col), (last.end_line, last.end_col))
        return SourceSpan(self.file, first.line, first.col, end[0], end[1])

    def fail(self, msg: str, tok: Optional[Token] = None, code: str = "E110_SYNTAX") -> None:
        tok = tok or self.peek()
        raise _Abort(error(code, msg, self.span(tok)))

    def describe(self, tok: Token) -> str:
        return "end of file" if tok.type is Tok.EOF else repr(tok.text)

    def expect_punct(self, ch: str) -> Token:
        tok = self.peek()
        if not tok.is_punct(ch):
            self.fail(f"expected '{ch}', found {self.describe(tok)}")
        return self.advance()

    def expect_kw(self, kw: str) -> Token:
        tok = self.peek()
        if not tok.is_kw(kw):
            self.fail(f"expected {kw}, found {self.describe(tok)}")
        return self.advance()

    def expect_ident(self, what: str) -> Token:
        tok = self.peek()
        if tok.type is not Tok.IDENT:
            self.fail(f"expected {what}, found {self.describe(tok)}")
        return self.advance()

    def expect_name(self, what: str) -> Token:
        """An identifier or a string literal naming something."""
        tok = self.peek()
        if tok.type not in (Tok.IDENT, Tok.STRING):
            self.fail(f"expected {what}, found {self.describe(tok)}")
        return self.advance()

    def sync(self) -> None:
        """Skip to the next plausible top-level block start."""
        self.advance()
        while True:
            tok = self.peek()
            if tok.type is Tok.EOF:
                return
            if tok.type is Tok.KEYWORD and (tok.text in TOP_LEVEL or (tok.text == "BACKEND" and tok.col == 1)):
                return
            self.advance()

    # -- values ----------------------------------------------------------

    def value(self, depth: int = 0) -> Any:
        tok = self.peek()
        if tok.type in (Tok.STRING, Tok.NUMBER, Tok.BOOL):
            self.advance()
            return tok.value
        if tok.type is Tok.IDENT:
            self.advance()
            return Ident(tok.value)
        if tok.is_punct("["):
            self.advance()
            items = []
            while not self.peek().is_punct("]"):
                if self.peek().is_punct("["):
                    self.fail("nested lists are not supported", code="E115_NESTING_TOO_DEEP")
                items.append(self.value(depth))
                if self.peek().is_punct(","):
                    self.advance()
                elif not self.peek().is_punct("]"):
                    self.fail(f"expected ',' or ']', found {self.describe(self.peek())}")
            self.advance()
            return items
        if tok.is_punct("{"):
            if depth >= 1:
                self.fail("object values may nest only one level deep", code="E115_NESTING_TOO_DEEP")
            self.advance()
            obj: dict[str, Any] = {}
            while not self.peek().is_punct("}"):
                key = self.expect_ident("object key")
                self.expect_punct(":")
                if key.value in obj:
                    self.fail(f"duplicate key {key.value!r}", key)
                obj[key.value] = self.value(depth + 1)
                if self.peek().is_punct(","):
                    self.advance()
            self.advance()
            return obj
        self.fail(f"expected a value, found {self.describe(tok)}")

    def attr_block(self, allowed: Optional[tuple[str, ...]], block: str) -> tuple[dict[str, Any], dict[str, SourceSpan], Token]:
        self.expect_punct("{")
        attrs: dict[str, Any] = {}
        spans: dict[str, SourceSpan] = {}
        while not self.peek().is_punct("}"):
            tok = self.peek()
            if tok.type is Tok.EOF:
                self.fail(f"unterminated {block} block, expected '}}'")
            if tok.type is Tok.KEYWORD:
                self.fail(f"unexpected keyword {tok.text} inside {block} block")
            key = self.expect_ident("attribute name")
            if allowed is not None and key.value not in allowed:
                self.fail(f"unknown attribute {key.value!r} in {block} block", key, "E112_UNKNOWN_ATTRIBUTE")
            if key.value in attrs:
                self.fail(f"attribute {key.value!r} given twice", key)
            self.expect_punct(":")
            attrs[key.value] = self.value()
            spans[key.value] = self.span(key)
            if self.peek().is_punct(","):
                self.advance()
        close = self.advance()
        return attrs, spans, close

    # -- conditions ------------------------------------------------------

    def condition(self, depth: int = 0) -> Condition:
        if depth > MAX_CONDITION_DEPTH:
            self.fail("condition nested too deeply", code="E115_NESTING_TOO_DEEP")
        left = self.cond_and(depth)
        while self.peek().is_kw("OR"):
            self.advance()
            left = Or(left, self.cond_and(depth))
        return left

    def cond_and(self, depth: int) -> Condition:
        left = self.cond_not(depth)
        while self.peek().is_kw("AND"):
            self.advance()
            left = And(left, self.cond_not(depth))
        return left

    def cond_not(self, depth: int) -> Condition:
        if self.peek().is_kw("NOT"):
            self.advance()
            if depth > MAX_CONDITION_DEPTH:
                self.fail("condition nested too deeply", code="E115_NESTING_TOO_DEEP")
            return Not(self.cond_not(depth + 1))
        return self.cond_primary(depth)

    def cond_primary(self, depth: int) -> Condition:
        tok = self.peek()
        if tok.is_punct("("):
            self.advance()
            inner = self.condition(depth + 1)
            self.expect_punct(")")
            return inner
        kind_tok = self.expect_ident("signal reference such as jailbreak(\"name\")")
        try:
            kind = SignalKind(kind_tok.value)
        except ValueError:
            self.fail(f"unknown signal kind {kind_tok.value!r}", kind_tok, "E116_UNKNOWN_SIGNAL_KIND")
        self.expect_punct("(")
        name_tok = self.expect_name("signal name")
        close = self.expect_punct(")")
        return SignalRef(kind, name_tok.value, self.span_between(kind_tok, close))

    # -- blocks ----------------------------------------------------------

    def leaf(self) -> str:
        self.expect_punct("{")
        self.expect_kw("BACKEND")
        name = self.expect_name("backend name")
        self.expect_punct("}")
        return name.value

    def decision_tree(self, head: Token) -> DecisionTree:
        name = self.expect_ident("decision tree name")
        self.expect_punct("{")
        branches: list[Branch] = []
        else_backend: Optional[str] = None
        while not self.peek().is_punct("}"):
            tok = self.peek()
            if else_backend is not None:
                self.fail("no branch may follow the final ELSE", tok)
            if tok.is_kw("IF") or (tok.is_kw("ELSE") and self.peek(1).is_kw("IF")):
                if tok.is_kw("IF") and branches:
                    self.fail("expected ELSE IF; a tree has exactly one leading IF", tok)
                if tok.is_kw("ELSE") and not branches:
                    self.fail("tree must start with IF", tok)
                self.advance()
                if tok.is_kw("ELSE"):
                    self.advance()
                cond = self.condition()
                last = self.peek()
                backend = self.leaf()
                branches.append(Branch(cond, backend, self.span_between(tok, last)))
            elif tok.is_kw("ELSE"):
                self.advance()
                else_backend = self.leaf()
            else:
                self.fail(f"expected IF, ELSE IF or ELSE, found {self.describe(tok)}", tok)
        close = self.advance()
        span = self.span_between(head, close)
        if else_backend is None:
            self.diags.append(error("E010_MISSING_ELSE", f"decision tree {name.value} has no final ELSE branch", span))
        return DecisionTree(name.value, tuple(branches), else_backend, span)

    def route(self, head: Token) -> Route:
        name = self.expect_ident("route name")
        self.expect_punct("{")
        priority = when = model = None
        params: dict[str, Any] = {}
        while not self.peek().is_punct("}"):
            tok = self.advance()
            if tok.is_kw("PRIORITY") and priority is None:
                num = self.peek()
                if num.type is not Tok.NUMBER or not isinstance(num.value, int):
                    self.fail("PRIORITY expects an integer", num)
                priority = self.advance().value
            elif tok.is_kw("WHEN") and when is None:
                when = self.condition()
            elif tok.is_kw("MODEL") and model is None:
                model = self.expect_name("model").value
                if self.peek().is_punct("("):
                    self.advance()
                    while not self.peek().is_punct(")"):
                        key = self.expect_ident("parameter name")
                        self.expect_punct("=")
                        params[key.value] = self.value(depth=1)
                        if self.peek().is_punct(","):
                            self.advance()
                        elif not self.peek().is_punct(")"):
                            self.fail(f"expected ',' or ')', found {self.describe(self.peek())}")
                    self.advance()
            else:
                self.fail(f"expected PRIORITY, WHEN or MODEL (each once), found {self.describe(tok)}", tok)
        close = self.advance()
        span = self.span_between(head, close)
        missing = [k for k, v in (("PRIORITY", priority), ("WHEN", when), ("MODEL", model)) if v is None]
        if missing:
            raise _Abort(error("E110_SYNTAX", f"route {name.value} is missing {', '.join(missing)}", span))
        return Route(name.value, priority, when, model, params, span)


def _str(v: Any, what: str) -> str:
    if not isinstance(v, str):
        raise PolicyError(f"{what} must be a string")
    return str(v)


def _str_list(v: Any, what: str) -> tuple[str, ...]:
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise PolicyError(f"{what} must be a list of strings")
    return tuple(str(x) for x in v)


def _num(v: Any, what: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise PolicyError(f"{what} must be a number")
    return float(v)


def _int(v: Any, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise PolicyError(f"{what} must be an integer")
    return v


def _obj_list(v: Any, what: str) -> tuple[dict, ...]:
    if not isinstance(v, list) or not all(isinstance(x, dict) for x in v):
        raise PolicyError(f"{what} must be a list of {{ ... }} objects")
    return tuple({k: (str(x) if isinstance(x, str) else x) for k, x in o.items()} for o in v)


def _plain(v: Any) -> Any:
    if isinstance(v, str):
        return str(v)
    if isinstance(v, list):
        return tuple(_plain(x) for x in v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _opt(attrs: dict, key: str, conv, what: str):
    return conv(attrs[key], what) if key in attrs else None


def _build_signal(kind: SignalKind, name: str, a: dict, span: SourceSpan) -> Signal:
    return Signal(
        name=name,
        kind=kind,
        threshold=_opt(a, "threshold", _num, "threshold"),
        model=_opt(a, "model", _str, "model"),
        candidates=_opt(a, "candidates", _str_list, "candidates") or (),
        pii_types_allowed=_opt(a, "pii_types_allowed", _str_list, "pii_types_allowed") or (),
        keywords=_opt(a, "keywords", _str_list, "keywords") or (),
        subjects=_opt(a, "subjects", _obj_list, "subjects") or (),
        role=_opt(a, "role", _str, "role"),
        span=span,
    )


def _build_group(name: str, a: dict, span: SourceSpan) -> SignalGroup:
    if "signals" not in a:
        raise PolicyError(f"signal group {name} requires signals")
    if "temperature" not in a:
        raise PolicyError(f"signal group {name} requires a temperature")
    tie = _opt(a, "tie_break", _str, "tie_break") or "none"
    try:
        tie_break = TieBreak(tie)
    except ValueError:
        raise PolicyError(f"tie_break must be one of none, priority_order (got {tie!r})") from None
    return SignalGroup(
        name=name,
        members=_str_list(a["signals"], "signals"),
        temperature=_num(a["temperature"], "temperature"),
        tie_break=tie_break,
        threshold=_opt(a, "threshold", _num, "threshold"),
        span=span,
    )


def _sandbox(v: Any, what: str) -> SandboxMode:
    try:
        return SandboxMode(_str(v, what))
    except ValueError:
        raise PolicyError(f"{what} must be one of all, non-main, off") from None


def _build_network(name: str, a: dict, span: SourceSpan) -> NetworkEndpoint:
    for req in ("host", "port", "skill"):
        if req not in a:
            raise PolicyError(f"network {name} requires {req}")
    return NetworkEndpoint(
        name=name,
        host=_str(a["host"], "host"),
        port=_int(a["port"], "port"),
        methods=_opt(a, "methods", _str_list, "methods") or (),
        paths=_opt(a, "paths", _str_list, "paths") or (),
        skill=_str(a["skill"], "skill"),
        span=span,
    )


def _build_agent(name: str, a: dict, span: SourceSpan) -> AgentDef:
    if "model" not in a:
        raise PolicyError(f"agent {name} requires a model")
    return AgentDef(
        name=name,
        model=_str(a["model"], "model"),
        skills=_opt(a, "skills", _str_list, "skills") or (),
        sandbox_mode=_opt(a, "sandbox_mode", _sandbox, "sandbox_mode"),
        workspace=_opt(a, "workspace", _str, "workspace"),
        channels=_opt(a, "channels", _obj_list, "channels") or (),
        span=span,
    )


def _build_deploy(name: str, a: dict, span: SourceSpan) -> DeployDef:
    return DeployDef(
        agent=name,
        sandbox_mode=_opt(a, "sandbox_mode", _sandbox, "sandbox_mode"),
        workspace=_opt(a, "workspace", _str, "workspace"),
        replicas=_opt(a, "replicas", _int, "replicas"),
        cpu=_opt(a, "cpu", _str, "cpu"),
        memory=_opt(a, "memory", _str, "memory"),
        image=_opt(a, "image", _str, "image"),
        span=span,
    )


def _build_test(name: str, a: dict, span: SourceSpan) -> TestCase:
    if "input" not in a:
        raise PolicyError(f"test {name} requires an input")
    expect = a.get("expect")
    if not isinstance(expect, dict) or set(expect) != {"decision"}:
        raise PolicyError(f"test {name} requires expect: {{ decision: ... }}")
    return TestCase(
        name=name,
        input=_str(a["input"], "input"),
        expected_decision=_str(expect["decision"], "decision"),
        user_roles=_opt(a, "user_roles", _str_list, "user_roles") or (),
        span=span,
    )


def _build_global(a: dict, span: SourceSpan) -> GlobalBlock:
    return GlobalBlock(
        version=_opt(a, "version", _str, "version"),
        name=_opt(a, "name", _str, "name"),
        namespace=_opt(a, "namespace", _str, "namespace"),
        default_backend=_opt(a, "default_backend", _str, "default_backend"),
        span=span,
    )


def parse_with_diagnostics(source: Union[str, bytes], file: str = "<input>") -> tuple[Policy, list[Diagnostic]]:
    """Parse source into a (possibly partial) Policy plus every diagnostic found."""
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            line = bytes(source)[: exc.start].count(b"\n") + 1
            return Policy(), [error("E000_ENCODING", f"source is not valid UTF-8: {exc.reason}", SourceSpan(file, line, 1, line, 1))]
    if source.startswith("\ufeff"):
        source = source[1:]
    tokens, diags = tokenize(source, file)
    p = _Parser(tokens, file)
    p.diags.extend(diags)

    ns: dict[str, dict[str, Any]] = {
        k: {} for k in ("signals", "signal_groups", "decision_trees", "backends", "networks", "agents", "deploys")
    }
    routes: list[Route] = []
    tests: list[TestCase] = []
    plugins: list[PluginDef] = []
    seen_names: dict[str, dict[str, SourceSpan]] = {k: {} for k in ("route", "test", "plugin", "global")}
    global_block = GlobalBlock()

    def claim(namespace: dict, kind: str, name: str, span: SourceSpan) -> bool:
        if name in namespace:
            prev = namespace[name]
            prev_span = prev if isinstance(prev, SourceSpan) else getattr(prev, "span", None)
            p.diags.append(
                error("E111_DUPLICATE_NAME", f"duplicate {kind} name {name!r}", span, related=[prev_span] if prev_span else [])
            )
            return False
        return True

    while p.peek().type is not Tok.EOF:
        head = p.peek()
        try:
            if head.type is Tok.IDENT and head.text in UNSUPPORTED:
                p.fail(
                    f"{head.text} is not part of the policy language (no loops, mutable state or recursion)",
                    head,
                    "E114_UNSUPPORTED_CONSTRUCT",
                )
            if not (head.type is Tok.KEYWORD and (head.text in TOP_LEVEL or head.text == "BACKEND")):
                p.fail(f"expected a block keyword, found {p.describe(head)}", head)
            p.advance()
            kw = head.text
            if kw == "DECISION_TREE":
                tree = p.decision_tree(head)
                if claim(ns["decision_trees"], "decision tree", tree.name, tree.span):
                    ns["decision_trees"][tree.name] = tree
                continue
            if kw == "ROUTE":
                route = p.route(head)
                if claim(seen_names["route"], "route", route.name, route.span):
                    seen_names["route"][route.name] = route.span
                    routes.append(route)
                continue

            kind_tok = name_tok = None
            if kw in ("SIGNAL", "BACKEND", "PLUGIN"):
                kind_tok = p.expect_ident(f"{kw.lower()} kind")
            if kw != "GLOBAL":
                name_tok = p.expect_ident(f"{kw.lower()} name")
            allowed = {
                "SIGNAL": _SIGNAL_ATTRS,
                "SIGNAL_GROUP": _GROUP_ATTRS,
                "BACKEND": ("target",),
                "NETWORK": _NETWORK_ATTRS,
                "AGENT": _AGENT_ATTRS,
                "DEPLOY": _DEPLOY_ATTRS,
                "TEST": _TEST_ATTRS,
                "GLOBAL": _GLOBAL_ATTRS,
                "PLUGIN": None,
            }[kw]
            if kw == "SIGNAL":
                try:
                    kind = SignalKind(kind_tok.value)
                except ValueError:
                    p.fail(f"unknown signal kind {kind_tok.value!r}", kind_tok, "E116_UNKNOWN_SIGNAL_KIND")
            if kw == "BACKEND" and kind_tok.value not in ("model", "action"):
                p.fail(f"backend kind must be model or action, found {kind_tok.value!r}", kind_tok)
            attrs, _spans, close = p.attr_block(allowed, kw)
            span = p.span_between(head, close)
            name = name_tok.value if name_tok else ""
            try:
                if kw == "SIGNAL":
                    node = _build_signal(kind, name, attrs, span)
                    if claim(ns["signals"], "signal", name, span):
                        ns["signals"][name] = node
                elif kw == "SIGNAL_GROUP":
                    node = _build_group(name, attrs, span)
                    if claim(ns["signal_groups"], "signal group", name, span):
                        ns["signal_groups"][name] = node
                elif kw == "BACKEND":
                    if "target" not in attrs:
                        raise PolicyError(f"backend {name} requires a target")
                    node = Backend(name, BackendKind(kind_tok.value), _str(attrs["target"], "target"), span)
                    if claim(ns["backends"], "backend", name, span):
                        ns["backends"][name] = node
                elif kw == "NETWORK":
                    node = _build_network(name, attrs, span)
                    if claim(ns["networks"], "network", name, span):
                        ns["networks"][name] = node
                elif kw == "AGENT":
                    node = _build_agent(name, attrs, span)
                    if claim(ns["agents"], "agent", name, span):
                        ns["agents"][name] = node
                elif kw == "DEPLOY":
                    node = _build_deploy(name, attrs, span)
                    if claim(ns["deploys"], "deploy", name, span):
                        ns["deploys"][name] = node
                elif kw == "TEST":
                    node = _build_test(name, attrs, span)
                    if claim(seen_names["test"], "test", name, span):
                        seen_names["test"][name] = span
                        tests.append(node)
                elif kw == "PLUGIN":
                    pname = f"{kind_tok.value}:{name}"
                    if claim(seen_names["plugin"], "plugin", pname, span):
                        seen_names["plugin"][pname] = span
                        plugins.append(PluginDef(kind_tok.value, name, {k: _plain(v) for k, v in attrs.items()}, span))
                elif kw == "GLOBAL":
                    if claim(seen_names["global"], "GLOBAL block", "GLOBAL", span):
                        seen_names["global"]["GLOBAL"] = span
                        global_block = _build_global(attrs, span)
            except PolicyError as exc:
                p.diags.append(error("E113_INVALID_VALUE", str(exc), span))
        except _Abort as abort:
            p.diags.append(abort.diag)
            p.sync()

    policy = Policy(
        signals=ns["signals"],
        signal_groups=ns["signal_groups"],
        decision_trees=ns["decision_trees"],
        routes=tuple(routes),
        backends=ns["backends"],
        networks=ns["networks"],
        agents=ns["agents"],
        deploys=ns["deploys"],
        tests=tuple(tests),
        plugins=tuple(plugins),
        global_block=global_block,
    )
    return policy, p.diags


def parse(source: Union[str, bytes], file: str = "<input>") -> Policy:
    """Parse source, raising ParseError if any error diagnostic was produced."""
    policy, diags = parse_with_diagnostics(source, file)
    if has_errors(diags):
        raise ParseError(diags)
    return policy


def parse_file(path: Union[str, Path]) -> tuple[Policy, list[Diagnostic]]:
    path = Path(path)
    return parse_with_diagnostics(path.read_bytes(), str(path))
