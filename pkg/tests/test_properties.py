import itertools

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from _gen import crisp_policies
from srpolicy import canonicalize, parse, parse_with_diagnostics
from srpolicy.ast_core import And, Not, Or, SignalGroup, SignalRef, distinct_refs
from srpolicy.lexer import tokenize
from srpolicy.normalizer import group_fire
from srpolicy.runtime import route, scores_from_raw


def truth(cond, env):
    if isinstance(cond, SignalRef):
        return env[cond.name]
    if isinstance(cond, Not):
        return not truth(cond.child, env)
    if isinstance(cond, And):
        return truth(cond.left, env) and truth(cond.right, env)
    if isinstance(cond, Or):
        return truth(cond.left, env) or truth(cond.right, env)
    raise TypeError(cond)


@settings(max_examples=300, suppress_health_check=[HealthCheck.too_slow])
@given(st.text(max_size=200))
def test_parser_never_crashes_on_text(src):
    policy, diags = parse_with_diagnostics(src)
    assert policy is not None
    assert all(d.code for d in diags)


@settings(max_examples=200)
@given(st.text(alphabet="SIGNAL authz{}()\":,ELSEIF DECISION_TREE BACKEND AND OR NOT 0.5#\n", max_size=160))
def test_parser_never_crashes_on_dsl_like_text(src):
    parse_with_diagnostics(src)


@settings(max_examples=100)
@given(crisp_policies())
def test_canonical_round_trip(src):
    policy = parse(src)
    again = parse(canonicalize(policy))
    assert again == policy
    assert canonicalize(again) == canonicalize(policy)
    assert again.source_hash == policy.source_hash


@settings(max_examples=100)
@given(crisp_policies(max_refs=4, max_branches=4))
def test_tokens_carry_valid_spans(src):
    tokens, diags = tokenize(src)
    assert diags == []
    lines = src.split("\n")
    for tok in tokens[:-1]:
        assert tok.line == tok.end_line
        assert lines[tok.line - 1][tok.col - 1 : tok.end_col] == tok.text


@settings(max_examples=100)
@given(crisp_policies(max_refs=5))
def test_conditions_match_brute_force_truth_tables(src):
    policy = parse(src)
    tree = policy.trees["t"]
    names = sorted({r.name for r in distinct_refs([b.condition for b in tree.branches])})
    for bits in itertools.product([False, True], repeat=len(names)):
        env = dict(zip(names, bits))
        expected = next((i + 1 for i, b in enumerate(tree.branches) if truth(b.condition, env)), len(tree.branches) + 1)
        decision, _ = route(tree, scores_from_raw(policy, {n: float(v) for n, v in env.items()}), policy, clock=lambda: 0.0)
        assert decision.branch_idx == expected


@settings(max_examples=200)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2, max_size=8),
    st.sampled_from([0.01, 0.1, 1.0]),
    st.floats(min_value=0.0, max_value=0.99),
)
def test_group_fires_only_the_argmax(raw, tau, theta):
    names = [f"m{i}" for i in range(len(raw))]
    group = SignalGroup("g", tuple(names), tau)
    fired = group_fire(group, dict(zip(names, raw)), {n: theta for n in names})
    if fired is not None:
        i = names.index(fired)
        assert raw[i] == max(raw) and raw.count(max(raw)) == 1 and raw[i] > theta
