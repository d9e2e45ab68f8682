import time


from srpolicy import parse, parse_with_diagnostics, verify
from srpolicy.ast_core import Branch, DecisionTree, SignalKind, SignalRef, And, Not, Or
from srpolicy.diagnostics import Severity
from srpolicy.verifier import (
    DecidabilityTier,
    check_dead_branches,
    check_exhaustiveness,
    classify_signal,
    reachable_branches,
)

HEAD = """
SIGNAL authz a { role: "ra" }
SIGNAL authz b { role: "rb" }
"""


def codes(diags):
    return [d.code for d in diags]


def ref(name, kind=SignalKind.AUTHZ):
    return SignalRef(kind, name)


def test_classify(shipped):
    assert classify_signal(shipped.signals["dev_role"]) is DecidabilityTier.CRISP
    assert classify_signal(shipped.signals["jira_intent"]) is DecidabilityTier.GEOMETRIC
    assert classify_signal(shipped.signals["jb_guard"]) is DecidabilityTier.CLASSIFIER
    assert classify_signal(shipped.signals["needs_reasoning"]) is DecidabilityTier.CLASSIFIER


def test_exhaustiveness(shipped):
    assert check_exhaustiveness(shipped.decision_trees["safety_gate"]) == []
    assert codes(check_exhaustiveness(DecisionTree("t", (Branch(ref("a"), "deny"),), None))) == ["E010_MISSING_ELSE"]
    assert check_exhaustiveness(DecisionTree("t", (), "allow")) == []


def test_shadowed_branch():
    tree = DecisionTree(
        "t",
        (Branch(ref("a"), "x"), Branch(And(ref("a"), ref("b")), "y")),
        "z",
    )
    assert reachable_branches(tree) == [True, False]
    diags = check_dead_branches(tree)
    assert codes(diags) == ["W020_SHADOWED_BRANCH"]
    assert diags[0].severity is Severity.WARNING


def test_shadowing_by_union_of_earlier_branches():
    tree = DecisionTree(
        "t",
        (Branch(ref("a"), "x"), Branch(Not(ref("a")), "y"), Branch(ref("b"), "z")),
        "w",
    )
    assert reachable_branches(tree) == [True, True, False]
    found = check_dead_branches(tree)
    assert codes(found) == ["W020_SHADOWED_BRANCH"]


def test_shipped_outbound_gate_has_no_shadowing(shipped):
    assert all(reachable_branches(shipped.decision_trees["outbound_gate"]))
    assert not [d for d in check_dead_branches(shipped.decision_trees["outbound_gate"], shipped) if d.code == "W020_SHADOWED_BRANCH"]


def test_single_branch_tree():
    assert check_dead_branches(DecisionTree("t", (Branch(ref("a"), "x"),), "y")) == []


def test_too_many_variables():
    names = [f"s{i}" for i in range(21)]
    cond = ref(names[0])
    for n in names[1:]:
        cond = Or(cond, ref(n))
    diags = check_dead_branches(DecisionTree("t", (Branch(cond, "x"),), "y"))
    assert codes(diags) == ["E021_TOO_MANY_VARIABLES"]


def test_shipped_policy_passes_with_exactly_one_warning(shipped):
    report = verify(shipped)
    assert report.overall
    assert [d.code for d in report.warnings] == ["W010_GROUP_TIE"]
    assert report.errors == []


def test_priority_order_group_has_no_tie_warning(shipped_source):
    policy = parse(shipped_source.replace("temperature: 0.1\n", "temperature: 0.1\n  tie_break: priority_order\n"))
    assert verify(policy).warnings == []


def test_group_threshold_at_or_below_one_over_k(shipped_source):
    policy = parse(shipped_source.replace("temperature: 0.1\n", "temperature: 0.1\n  threshold: 0.40\n"))
    report = verify(policy)
    assert "E030_THRESHOLD_TOO_LOW" in codes(report.errors)
    assert not report.overall


def test_high_temperature_warns(shipped_source):
    policy = parse(shipped_source.replace("temperature: 0.1\n", "temperature: 2.0\n"))
    assert "W011_HIGH_TEMPERATURE" in codes(verify(policy).warnings)


def test_undefined_signal():
    policy, _ = parse_with_diagnostics(HEAD + 'DECISION_TREE t { IF authz("nope") { BACKEND deny } ELSE { BACKEND allow } }')
    assert "E001_UNDEFINED_SIGNAL" in codes(verify(policy).errors)


def test_kind_mismatch(shipped_source):
    policy = parse(shipped_source.replace('ELSE IF pii("pii_detector")  { BACKEND deny }\n  ELSE                         { BACKEND allow }', 'ELSE IF pii("jb_guard")  { BACKEND deny }\n  ELSE { BACKEND allow }'))
    assert "E002_KIND_MISMATCH" in codes(verify(policy).errors)


def test_undefined_backend():
    policy = parse(HEAD + 'DECISION_TREE t { IF authz("a") { BACKEND nowhere } ELSE { BACKEND allow } }')
    assert "E003_UNDEFINED_BACKEND" in codes(verify(policy).errors)


def test_missing_else_fails_verification(shipped_source):
    src = shipped_source.replace("  ELSE\n    { BACKEND nemotron_nano }\n", "")
    policy, diags = parse_with_diagnostics(src)
    assert "E010_MISSING_ELSE" in codes(diags) or "E010_MISSING_ELSE" in codes(verify(policy).errors)
    assert not verify(policy).overall


def test_group_member_renamed_only_in_group(shipped_source):
    src = shipped_source.replace("signals: [jira_intent, slack_intent]", "signals: [jira_intnt, slack_intent]")
    policy = parse(src)
    errors = verify(policy).errors
    e001 = [d for d in errors if d.code == "E001_UNDEFINED_SIGNAL"]
    assert e001
    assert e001[0].span.start_line == src[: src.index("SIGNAL_GROUP")].count("\n") + 1


def test_signal_in_two_groups(shipped_source):
    src = shipped_source + "\nSIGNAL_GROUP other {\n  signals: [jira_intent, slack_intent]\n  temperature: 0.1\n}\n"
    assert "E033_MULTIPLE_GROUPS" in codes(verify(parse(src)).errors)


def test_skill_without_network(shipped_source):
    start = shipped_source.index("NETWORK atlassian")
    end = shipped_source.index("NETWORK slack_api")
    policy = parse(shipped_source[:start] + shipped_source[end:])
    assert "E040_SKILL_WITHOUT_ENDPOINT" in codes(verify(policy).errors)


def test_no_agents_passes_cross_artifact():
    policy = parse(HEAD + 'DECISION_TREE t { IF authz("a") { BACKEND deny } ELSE { BACKEND allow } }')
    report = verify(policy)
    assert report.overall and report.diagnostics == []


def test_deploy_for_unknown_agent(shipped_source):
    policy = parse(shipped_source + '\nDEPLOY ghost { replicas: 1 }\n')
    assert "E044_DEPLOY_UNKNOWN_AGENT" in codes(verify(policy).errors)


def test_deploy_sandbox_conflict(shipped_source):
    policy = parse(shipped_source.replace('DEPLOY dev_assistant {\n', 'DEPLOY dev_assistant {\n  sandbox_mode: "off"\n'))
    assert "E045_DEPLOY_CONFLICT" in codes(verify(policy).errors)


def test_report_serializes(shipped):
    doc = verify(shipped).to_dict()
    assert doc["overall"] == "pass"
    assert doc["tiers"]["jb_guard"] == "classifier"


def test_fifty_signal_check_is_fast():
    lines = [f'SIGNAL authz s{i} {{ role: "r{i}" }}' for i in range(50)]
    branches = [f'  {"IF" if i == 0 else "ELSE IF"} authz("s{i}") AND NOT authz("s{i + 1}") {{ BACKEND deny }}' for i in range(19)]
    src = "\n".join(lines) + "\nDECISION_TREE t {\n" + "\n".join(branches) + "\n  ELSE { BACKEND allow }\n}\n"
    policy = parse(src)
    t0 = time.perf_counter()
    report = verify(policy)
    assert time.perf_counter() - t0 < 1.0
    assert report.overall
