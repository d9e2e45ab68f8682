"""Acceptance criteria 1 to 9. A summary line per criterion is printed at the end of the run."""

import hashlib
import itertools
import json
import re
import statistics
import time

from hypothesis import given, settings
from hypothesis import strategies as st

from _artifacts import HASH_TOKEN, strict_parse, threshold_strings
from _gen import crisp_policies
from conftest import SHIPPED
from srpolicy import parse, verify
from srpolicy.ast_core import And, Not, SignalGroup, SignalRef, distinct_refs
from srpolicy.emitters import ArtifactKind, emit_all, write_bundle
from srpolicy.normalizer import group_fire, softmax, softmax_values
from srpolicy.runtime import (
    AuditTraceEntry,
    append_trace,
    chain,
    default_registry,
    dumps_line,
    route,
    run_tests,
    scores_from_raw,
    verify_chain,
    verify_lines,
)
from srpolicy.verifier import check_dead_branches, reachable_branches

WORKED_RAW = {"jb_guard": 0.0, "pii_detector": 0.0, "jira_intent": 0.7465, "slack_intent": 0.1113, "dev_role": 1.0}
STRUCTURED = {ArtifactKind.YAML, ArtifactKind.JSON, ArtifactKind.XML}


def test_criterion_1_softmax_reproduction():
    out = softmax({"jira_intent": 0.7465, "slack_intent": 0.1113}, 0.1).as_dict()
    assert abs(out["jira_intent"] - 0.9983) <= 1e-3
    assert abs(out["slack_intent"] - 0.0017) <= 1e-3


def test_criterion_2_end_to_end(shipped, tmp_path):
    t0 = time.perf_counter()
    report = verify(shipped)
    assert report.overall and not report.errors
    assert {d.code for d in report.warnings} == {"W010_GROUP_TIE"}
    bundle = emit_all(shipped)
    write_bundle(bundle, tmp_path)
    files = sorted(p for p in tmp_path.rglob("*") if p.is_file())
    assert len(files) == len(bundle.entries) == 16
    hashes = set()
    for path in files:
        text = path.read_text(encoding="utf-8")
        assert shipped.source_hash in text, path
        for line in text.splitlines():
            if re.search(r"source[-_]hash", line, re.I):
                hashes.update(HASH_TOKEN.findall(line))
    assert hashes == {shipped.source_hash}
    parsed = [strict_parse(e) for e in bundle.entries if e.kind in STRUCTURED]
    assert len(parsed) == 12
    assert time.perf_counter() - t0 < 5.0


def test_criterion_3_test_block_fidelity(shipped, fixed_clock):
    report = run_tests(shipped, default_registry(), clock=fixed_clock)
    assert {r.name: r.actual for r in report.results} == {"safe_jira": "allow_jira", "jailbreak_blocked": "deny"}
    decision, entry = route(shipped.decision_trees["outbound_gate"], scores_from_raw(shipped, WORKED_RAW), shipped, clock=fixed_clock)
    assert decision.backend == "allow_jira"
    assert entry.branch_idx == 3
    assert entry.thresholds_crossed["jira_intent_raw"] == "0.7465 > 0.70"


def _truth(cond, env):
    if isinstance(cond, SignalRef):
        return env[cond.name]
    if isinstance(cond, Not):
        return not _truth(cond.child, env)
    if isinstance(cond, And):
        return _truth(cond.left, env) and _truth(cond.right, env)
    return _truth(cond.left, env) or _truth(cond.right, env)


@settings(max_examples=150, deadline=None)
@given(crisp_policies(max_refs=10))
def test_criterion_4_oracle_exhaustiveness(src):
    policy = parse(src)
    tree = policy.trees["t"]
    names = sorted({r.name for r in distinct_refs([b.condition for b in tree.branches])})
    assert len(names) <= 10
    n = len(tree.branches)
    reachable = [False] * n
    for bits in itertools.product([False, True], repeat=len(names)):
        env = dict(zip(names, bits))
        selected = [i for i, b in enumerate(tree.branches) if _truth(b.condition, env) and not any(_truth(p.condition, env) for p in tree.branches[:i])]
        if not selected:
            selected = [n]
        assert len(selected) == 1
        if selected[0] < n:
            reachable[selected[0]] = True
        decision, _ = route(tree, scores_from_raw(policy, {k: float(v) for k, v in env.items()}), policy, clock=lambda: 0.0)
        assert decision.branch_idx == selected[0] + 1
    assert reachable_branches(tree) == reachable
    flagged = sum(1 for d in check_dead_branches(tree) if d.code == "W020_SHADOWED_BRANCH")
    assert flagged == reachable.count(False)


@settings(max_examples=400, deadline=None)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=8),
    st.sampled_from([0.01, 0.1, 1.0]),
    st.booleans(),
)
def test_criterion_5_at_most_one_firing(raw, tau, force_tie):
    if force_tie:
        raw = [max(raw)] * 2 + raw[2:]
    names = [f"m{i}" for i in range(len(raw))]
    group = SignalGroup("g", tuple(names), tau)
    fired = group_fire(group, dict(zip(names, raw)), {n: 0.0 for n in names})
    assert fired is None or fired in names
    if raw.count(max(raw)) > 1:
        assert fired is None
    assert abs(sum(softmax_values(raw, tau)) - 1.0) <= 1e-9


def _jb_thresholds(policy):
    others = [n for n in policy.signals if n != "jb_guard"]
    found = {}
    for e in emit_all(policy).entries:
        values = threshold_strings(e.text, "jb_guard", others)
        if values:
            found[e.path] = set(values)
    return found


THRESHOLD_ARTIFACTS = {
    "routing_yaml/policy.yaml",
    "langgraph_a/policy_graph.py",
    "langgraph_b/policy_nodes.py",
    "openclaw/openclaw.json",
    "openclaw/before_tool_call.ts",
    "kubernetes/dev-assistant-configmap.yaml",
    "kubernetes/ops-monitor-configmap.yaml",
    "netconf/edit-config.xml",
    "protocol_gates/mcp_tools_call.json",
    "protocol_gates/a2a_tasks_send.json",
    "protocol_gates/tool_response.json",
}


def test_criterion_6_anti_drift(shipped):
    before = _jb_thresholds(shipped)
    assert set(before) == THRESHOLD_ARTIFACTS
    assert all(v == {"0.50"} for v in before.values())
    src = SHIPPED.read_text(encoding="utf-8")
    changed = parse(src.replace("threshold: 0.50", "threshold: 0.75", 1))
    after = _jb_thresholds(changed)
    assert set(after) == THRESHOLD_ARTIFACTS
    assert all(v == {"0.75"} for v in after.values())
    assert changed.source_hash != shipped.source_hash


def _log(n):
    log = []
    for i in range(n):
        e = AuditTraceEntry(
            ts=1711540200.0 + i,
            policy_version="v2026.03.27",
            source_hash="286185e3",
            tree="outbound_gate",
            branch="allow_jira" if i % 2 else "branch_1",
            branch_idx=3 if i % 2 else 1,
            signals={"jira_intent": 0.9983, "dev_role": True},
            thresholds_crossed={"jira_intent_raw": "0.7465 > 0.70"},
        )
        log = append_trace(log, chain(e, log[-1] if log else None))
    return log


def _expected_break(original, i, tampered):
    # Independent oracle: a line that is not canonical JSON of the same shape, or
    # whose link field changed, breaks where it is; any other change breaks the next link.
    try:
        obj = json.loads(tampered)
    except ValueError:
        return i
    if json.dumps(obj, separators=(",", ":"), ensure_ascii=False) != tampered:
        return i
    orig = json.loads(original)
    if set(obj) != set(orig) or any(type(obj[k]) is not type(orig[k]) for k in orig):
        return i
    if obj["prev_hash"] != orig["prev_hash"]:
        return i
    return i + 1


def test_criterion_7_tamper_detection():
    log = _log(10)
    assert verify_chain(log).ok
    lines = [dumps_line(e).encode("utf-8") for e in log]
    assert verify_lines(lines).ok
    checked = 0
    for i in range(9):
        for pos in range(len(lines[i])):
            raw = bytearray(lines[i])
            raw[pos] ^= 0x01
            tampered = bytes(raw)
            verdict = verify_lines(lines[:i] + [tampered] + lines[i + 1 :])
            assert not verdict.ok, (i, pos)
            assert verdict.break_index == _expected_break(lines[i].decode(), i, tampered.decode()), (i, pos)
            checked += 1
    assert checked == sum(len(lines[i]) for i in range(9))
    digest = hashlib.sha256(json.dumps(log[3].to_dict(include_prev=False), separators=(",", ":")).encode()).hexdigest()
    assert log[4].prev_hash == digest


FIVE_BRANCH = """
SIGNAL authz a { role: "a" }
SIGNAL authz b { role: "b" }
SIGNAL authz c { role: "c" }
SIGNAL authz d { role: "d" }
SIGNAL authz e { role: "e" }
DECISION_TREE t {
  IF authz("a") AND NOT authz("b") { BACKEND deny }
  ELSE IF authz("b") AND authz("c") { BACKEND deny }
  ELSE IF authz("c") OR authz("d") { BACKEND allow }
  ELSE IF authz("e") { BACKEND deny }
  ELSE IF NOT authz("a") { BACKEND allow }
  ELSE { BACKEND deny }
}
"""


def test_criterion_8_latency():
    policy = parse(FIVE_BRANCH)
    tree = policy.trees["t"]
    scores = scores_from_raw(policy, {"a": 0.0, "b": 0.0, "c": 0.0, "d": 0.0, "e": 0.0})
    prev = None
    samples = []
    for _ in range(2000):
        t0 = time.perf_counter()
        _, prev = route(tree, scores, policy, chain_prev=prev)
        samples.append(time.perf_counter() - t0)
    assert statistics.median(samples) < 1e-3

    lines = [f'SIGNAL authz s{i} {{ role: "r{i}" }}' for i in range(50)]
    branches = [f'  {"IF" if i == 0 else "ELSE IF"} authz("s{i}") AND NOT authz("s{i + 1}") {{ BACKEND deny }}' for i in range(19)]
    big = parse("\n".join(lines) + "\nDECISION_TREE t {\n" + "\n".join(branches) + "\n  ELSE { BACKEND allow }\n}\n")
    t0 = time.perf_counter()
    assert verify(big).overall
    assert time.perf_counter() - t0 < 1.0


def test_criterion_9_golden_artifacts(shipped):
    bundle = emit_all(shipped)
    yang = bundle.by_path("yang/vllm-sr-policy.yang").text
    for fragment in ("fraction-digits 2", 'range "0.00..1.00"', "ordered-by user"):
        assert fragment in yang
    netconf = bundle.by_path("netconf/edit-config.xml").text
    assert "<target><candidate/></target>" in netconf
    assert "<threshold>0.50</threshold>" in netconf
    gateway = json.loads(bundle.by_path("openclaw/openclaw.json").text)
    assert all(a["tools"]["deny"] == ["browser", "canvas", "cron"] for a in gateway["agents"]["list"])
    graph = bundle.by_path("langgraph_a/policy_graph.py").text
    assert "def route_outbound_gate(" in graph
    body = graph.split("def route_outbound_gate(", 1)[1].split("\n\n\n", 1)[0]
    assert body.rstrip().splitlines()[-1].strip() == 'return "deny_handler"'
    assert "ELSE (compiler-required)" in body
