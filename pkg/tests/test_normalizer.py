import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srpolicy.ast_core import SignalGroup, TieBreak
from srpolicy.normalizer import MemberMismatch, argmax, group_fire, softmax, softmax_values

GROUP = SignalGroup("tool_intent", ("jira_intent", "slack_intent"), 0.1)
THETA = {"jira_intent": 0.70, "slack_intent": 0.70}
scores = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


def naive_softmax(raw, tau):
    # Independent oracle: direct formula, no max subtraction.
    exps = [math.exp(r / tau) for r in raw]
    return [e / sum(exps) for e in exps]


def test_worked_pair():
    out = softmax({"jira_intent": 0.7465, "slack_intent": 0.1113}, 0.1).as_dict()
    assert out["jira_intent"] == pytest.approx(0.9983, abs=1e-3)
    assert out["slack_intent"] == pytest.approx(0.0017, abs=1e-3)


def test_symmetric_pair_is_exactly_half():
    for tau in (0.01, 0.1, 1.0, 7.0):
        assert softmax_values([0.5, 0.5], tau) == [0.5, 0.5]


@pytest.mark.parametrize("k", [2, 3, 5, 8])
def test_equal_scores_give_one_over_k(k):
    assert softmax_values([0.3] * k, 0.1) == pytest.approx([1 / k] * k)


def test_order_preserved():
    out = softmax([("b", 0.2), ("a", 0.9)], 1.0)
    assert [n for n, _ in out.entries] == ["b", "a"]


def test_bad_temperature():
    with pytest.raises(ValueError):
        softmax_values([0.1], 0.0)


def test_fires_worked_member():
    assert group_fire(GROUP, {"jira_intent": 0.7465, "slack_intent": 0.1113}, THETA) == "jira_intent"


def test_raw_below_member_threshold_does_not_fire():
    assert group_fire(GROUP, {"jira_intent": 0.65, "slack_intent": 0.1}, THETA) is None


def test_tie_without_tie_break_fires_nothing():
    assert group_fire(GROUP, {"jira_intent": 0.60, "slack_intent": 0.60}, {"jira_intent": 0.5, "slack_intent": 0.5}) is None


def test_tie_with_priority_order_fires_first_declared():
    g = SignalGroup("g", ("jira_intent", "slack_intent"), 0.1, tie_break=TieBreak.PRIORITY_ORDER)
    assert group_fire(g, {"slack_intent": 0.60, "jira_intent": 0.60}, {"jira_intent": 0.5, "slack_intent": 0.5}) == "jira_intent"


def test_member_mismatch():
    with pytest.raises(MemberMismatch):
        group_fire(GROUP, {"jira_intent": 0.9}, THETA)
    with pytest.raises(MemberMismatch):
        group_fire(GROUP, {"jira_intent": 0.9, "slack_intent": 0.1, "x": 0.0}, THETA)


def test_argmax_prefers_first_on_tie():
    assert argmax([0.2, 0.9, 0.9]) == 1


@settings(max_examples=300)
@given(st.lists(scores, min_size=1, max_size=16), st.sampled_from([0.01, 0.1, 1.0]))
def test_softmax_sums_to_one(raw, tau):
    assert abs(math.fsum(softmax_values(raw, tau)) - 1.0) <= 1e-9


@given(st.lists(scores, min_size=1, max_size=8), st.sampled_from([0.1, 1.0]))
def test_matches_naive_formula(raw, tau):
    assert softmax_values(raw, tau) == pytest.approx(naive_softmax(raw, tau), rel=1e-9, abs=1e-12)


@given(st.lists(scores, min_size=2, max_size=8, unique=True), st.floats(min_value=0.001, max_value=10.0))
def test_argmax_invariance(raw, tau):
    out = softmax_values(raw, tau)
    assert out[argmax(raw)] == max(out)


@given(st.lists(scores, min_size=1, max_size=16))
def test_overflow_safety(raw):
    out = softmax_values(raw, 0.001)
    assert all(math.isfinite(v) for v in out)


@given(scores, scores)
def test_pair_dominance(a, b):
    n1, _ = softmax_values([a, b], 0.1)
    if a > b:
        assert n1 > 0.5 or a - b < 1e-12
    if a - b >= 0.1:
        assert n1 > 0.73
        assert softmax_values([a, b], 0.01)[0] > 0.99
