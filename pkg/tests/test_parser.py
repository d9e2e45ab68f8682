import pytest

from srpolicy import ParseError, parse, parse_with_diagnostics
from srpolicy.ast_core import And, Not, Or, SignalKind, SignalRef, TieBreak
from srpolicy.lexer import Tok, tokenize

SIGNALS = """
SIGNAL embedding a { threshold: 0.70 model: "m" candidates: ["x"] }
SIGNAL authz b { role: "dev" }
SIGNAL keyword c { keywords: ["k"] }
"""


def codes(diags):
    return [d.code for d in diags]


def test_comment_line_has_no_tokens():
    toks, diags = tokenize("# === Signals ===\n")
    assert diags == []
    assert [t.type for t in toks] == [Tok.EOF]


def test_threshold_attribute_tokens():
    toks, _ = tokenize("threshold: 0.50")
    assert [(t.type, t.value) for t in toks[:3]] == [(Tok.IDENT, "threshold"), (Tok.PUNCT, ":"), (Tok.NUMBER, 0.5)]
    assert toks[2].text == "0.50"


def test_unterminated_string_reports_span():
    toks, diags = tokenize('model: "unclosed\nnext')
    assert codes(diags) == ["E100_UNTERMINATED_STRING"]
    span = diags[0].span
    assert (span.start_line, span.start_col) == (1, 8)
    assert toks[-2].value == "next"


def test_bad_number_and_character():
    _, diags = tokenize("x: 1.2.3 $")
    assert codes(diags) == ["E101_INVALID_NUMBER", "E102_UNKNOWN_CHARACTER"]


def test_string_escapes():
    toks, _ = tokenize(r'"a\"b\\c\nd"')
    assert toks[0].value == 'a"b\\c\nd'


def test_baseline_counts(baseline_source):
    policy, diags = parse_with_diagnostics(baseline_source)
    assert not [d for d in diags if d.is_error]
    assert len(policy.signals) == 5
    assert len(policy.signal_groups) == 1
    group = policy.signal_groups["delegation_intents"]
    assert group.k == 2 and group.temperature == 0.1 and group.tie_break is TieBreak.NONE
    assert len(policy.decision_trees) == 3
    assert len(policy.tests) == 2
    assert len(policy.networks) == 2


def test_empty_source():
    policy, diags = parse_with_diagnostics("")
    assert diags == []
    assert not policy.signals and not policy.decision_trees


def test_and_condition_structure():
    policy = parse(
        """
SIGNAL embedding jira_intent { threshold: 0.70 model: "m" candidates: ["x"] }
SIGNAL authz dev_role { role: "developer" }
ROUTE r { PRIORITY 1 WHEN embedding("jira_intent") AND authz("dev_role") MODEL "m" }
"""
    )
    assert policy.routes[0].when == And(
        SignalRef(SignalKind.EMBEDDING, "jira_intent"), SignalRef(SignalKind.AUTHZ, "dev_role")
    )


def test_precedence_not_and_or():
    policy = parse(
        SIGNALS
        + """
DECISION_TREE t {
  IF NOT authz("b") AND keyword("c") OR embedding("a") { BACKEND deny }
  ELSE { BACKEND allow }
}
"""
    )
    cond = policy.decision_trees["t"].branches[0].condition
    a, b, c = (SignalRef(SignalKind.EMBEDDING, "a"), SignalRef(SignalKind.AUTHZ, "b"), SignalRef(SignalKind.KEYWORD, "c"))
    assert cond == Or(And(Not(b), c), a)


def test_parenthesized_condition():
    policy = parse(
        SIGNALS
        + """
DECISION_TREE t {
  IF authz("b") AND (keyword("c") OR embedding("a")) { BACKEND deny }
  ELSE { BACKEND allow }
}
"""
    )
    cond = policy.decision_trees["t"].branches[0].condition
    assert isinstance(cond, And) and isinstance(cond.right, Or)


def test_route_with_params():
    policy = parse(
        SIGNALS
        + """
ROUTE deep { PRIORITY 200 WHEN keyword("c") MODEL "big" (reasoning = true, effort = "high") }
"""
    )
    r = policy.routes[0]
    assert (r.name, r.priority, r.model) == ("deep", 200, "big")
    assert dict(r.params) == {"reasoning": True, "effort": "high"}


def test_trailing_comma_in_list():
    policy = parse('SIGNAL embedding a { threshold: 0.70 model: "m" candidates: ["x", "y",] }')
    assert policy.signals["a"].candidates == ("x", "y")


def test_missing_else_still_builds_tree():
    _, diags = parse_with_diagnostics(SIGNALS + 'DECISION_TREE t { IF authz("b") { BACKEND deny } }')
    assert "E010_MISSING_ELSE" in codes(diags)


def test_errors_are_collected_across_blocks():
    src = """
SIGNAL embedding a { threshold: 0.70 model: "m" candidates: ["x"] bogus: 1 }
SIGNAL wizard w { }
SIGNAL authz b { role: "dev" }
DECISION_TREE t { IF authz("b") { BACKEND deny } ELSE { BACKEND allow }
"""
    policy, diags = parse_with_diagnostics(src)
    assert "E112_UNKNOWN_ATTRIBUTE" in codes(diags)
    assert "E116_UNKNOWN_SIGNAL_KIND" in codes(diags)
    assert "b" in policy.signals


def test_duplicate_name():
    _, diags = parse_with_diagnostics('SIGNAL authz b { role: "x" }\nSIGNAL authz b { role: "y" }')
    assert codes(diags) == ["E111_DUPLICATE_NAME"]
    assert diags[0].related


def test_unsupported_construct():
    _, diags = parse_with_diagnostics("FOR x { }")
    assert codes(diags) == ["E114_UNSUPPORTED_CONSTRUCT"]


def test_deep_object_nesting_rejected():
    _, diags = parse_with_diagnostics('SIGNAL authz b { subjects: [{ kind: { inner: { x: 1 } } }] }')
    assert "E115_NESTING_TOO_DEEP" in codes(diags)


def test_three_fraction_digits_rejected():
    _, diags = parse_with_diagnostics("SIGNAL jailbreak j { threshold: 0.505 }")
    assert "E113_INVALID_VALUE" in codes(diags)


def test_threshold_out_of_range():
    _, diags = parse_with_diagnostics("SIGNAL jailbreak j { threshold: 1.50 }")
    assert "E113_INVALID_VALUE" in codes(diags)


def test_invalid_utf8():
    _, diags = parse_with_diagnostics(b"SIGNAL \xff")
    assert codes(diags) == ["E000_ENCODING"]


def test_bom_is_ignored():
    policy, diags = parse_with_diagnostics("﻿SIGNAL authz b { role: \"x\" }")
    assert diags == [] and "b" in policy.signals


def test_parse_raises_with_diagnostics():
    with pytest.raises(ParseError) as exc:
        parse("SIGNAL")
    assert exc.value.diagnostics


def test_spans_point_inside_source(baseline_source):
    policy, _ = parse_with_diagnostics(baseline_source)
    lines = baseline_source.splitlines()
    for sig in policy.signals.values():
        assert 1 <= sig.span.start_line <= sig.span.end_line <= len(lines)
        assert lines[sig.span.start_line - 1].startswith("SIGNAL")


def test_agent_and_deploy(shipped):
    agent = shipped.agents["dev_assistant"]
    assert agent.id == "dev-assistant"
    assert agent.skills == ("jira", "slack")
    assert shipped.deploys["dev_assistant"].image == "agent-runtime:v1.2"


def test_non_ascii_digit_is_an_unknown_character():
    _, diags = parse_with_diagnostics("²")
    assert [d.code for d in diags] == ["E102_UNKNOWN_CHARACTER"]
