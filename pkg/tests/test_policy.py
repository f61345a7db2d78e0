from __future__ import annotations

from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from attack_potential.cvss import TABLE2_LITERAL, TABLE4_CONSISTENT, Level
from attack_potential.policy import (
    ALL_VULNS,
    BUILTIN_POLICIES,
    COMPLEXITY_AT_MOST_MEDIUM,
    COMPLEXITY_LOW,
    CVSS_AT_LEAST_4,
    EPA_HIGH,
    Clause,
    Policy,
    decide,
    decide_scored,
    load_policies,
    parse_policy,
    resolve_policy,
    workload,
)
from attack_potential.potential import EpaEstimate
from builders import make_record, scored

records_st = st.lists(
    st.builds(
        make_record,
        st.just("CVE-2010-0001"),
        st.sampled_from("LMH"),
        st.sampled_from("LMH"),
        st.one_of(st.none(), st.floats(0, 10)),
    ),
    max_size=40,
)


def test_cvss_at_least_4_boundary():
    rec = make_record("CVE-2010-0001", score=4.0)
    assert decide(CVSS_AT_LEAST_4, rec, scored(rec).epa)
    rec = make_record("CVE-2010-0002", score=3.9)
    assert not decide(CVSS_AT_LEAST_4, rec, scored(rec).epa)


def test_epa_high_on_seven():
    rec = make_record("CVE-2010-0806", ac="M", impact="H")
    epa = scored(rec).epa
    assert epa.value == 7.0 and epa.level is Level.HIGH
    assert decide(EPA_HIGH, rec, epa)


def test_epa_high_uses_continuous_value():
    rec = make_record("CVE-2010-0001")
    at_five = EpaEstimate(5.0, Level.MEDIUM, Level.LOW, "x")
    just_above = EpaEstimate(5.0000001, Level.MEDIUM, Level.LOW, "x")
    assert not decide(EPA_HIGH, rec, at_five)
    assert decide(EPA_HIGH, rec, just_above)


def test_complexity_policies():
    hard = make_record("CVE-2010-0001", ac="H")
    medium = make_record("CVE-2010-0002", ac="M")
    easy = make_record("CVE-2010-0003", ac="L")
    assert not decide_scored(COMPLEXITY_AT_MOST_MEDIUM, scored(hard))
    assert decide_scored(COMPLEXITY_AT_MOST_MEDIUM, scored(medium))
    assert not decide_scored(COMPLEXITY_LOW, scored(medium))
    assert decide_scored(COMPLEXITY_LOW, scored(easy))


def test_workload_examples():
    recs = [scored(make_record(f"CVE-2010-{1000 + k}", ac="LMH"[k % 3], impact="HML"[k % 3])) for k in range(30)]
    assert workload(ALL_VULNS, recs) == 30
    for policy in BUILTIN_POLICIES.values():
        assert workload(policy, []) == 0
    low_hard = [scored(make_record(f"CVE-2010-{1000 + k}", ac="H", impact="L")) for k in range(5)]
    for table in (TABLE2_LITERAL, TABLE4_CONSISTENT):
        assert workload(EPA_HIGH, [scored(r.record, table) for r in low_hard]) == 0


@given(records_st)
def test_policy_set_properties(records):
    items = [scored(r) for r in records]
    low = {id(s) for s in items if decide_scored(COMPLEXITY_LOW, s)}
    at_most_medium = {id(s) for s in items if decide_scored(COMPLEXITY_AT_MOST_MEDIUM, s)}
    assert low <= at_most_medium
    assert workload(ALL_VULNS, items) == len(items)
    for policy in BUILTIN_POLICIES.values():
        assert workload(policy, items) <= len(items)
        for s in items:
            assert decide_scored(policy, s) == decide_scored(policy, s)


def test_parse_policy_lines():
    p = parse_policy("critical = score >= 7 and complexity <= MEDIUM and epa > 5")
    assert p.name == "critical"
    assert p.clauses == (
        Clause("score", ">=", 7.0),
        Clause("complexity", "<=", Level.MEDIUM),
        Clause("epa", ">", 5.0),
    )
    assert p.expression == "score >= 7 and complexity <= MEDIUM and epa > 5"
    assert parse_policy("everything = true") == Policy("everything")
    assert parse_policy("easy = complexity == L").clauses == (Clause("complexity", "==", Level.LOW),)


@pytest.mark.parametrize(
    "line",
    ["no expression", "x = score >= high", "x = vendor == acme", "x = complexity <= 7", "1bad = epa > 5", "x = epa >"],
)
def test_parse_policy_rejects(line):
    with pytest.raises(ValueError):
        parse_policy(line)


def test_builtins_equal_their_expressions():
    equivalents = {
        "AllVulns": "AllVulns = true",
        "CvssAtLeast4": "CvssAtLeast4 = score >= 4",
        "ComplexityLow": "ComplexityLow = complexity == LOW",
        "ComplexityAtMostMedium": "ComplexityAtMostMedium = complexity <= MEDIUM",
        "EpaHigh": "EpaHigh = epa > 5",
    }
    recs = [
        scored(make_record("CVE-2010-0001", ac=ac, impact=imp, score=s))
        for ac, imp, s in product("LMH", "LMH", (None, 3.9, 4.0))
    ]
    for name, line in equivalents.items():
        custom = parse_policy(line)
        assert [decide_scored(custom, r) for r in recs] == [decide_scored(BUILTIN_POLICIES[name], r) for r in recs]


def test_load_and_resolve_policies(tmp_path):
    path = tmp_path / "policies.txt"
    path.write_text("# custom\nstrict = score >= 9\n\nEpaHigh = epa > 8\n", encoding="utf-8")
    custom = load_policies(path)
    assert [p.name for p in custom] == ["strict", "EpaHigh"]
    assert resolve_policy("EpaHigh", custom).clauses == (Clause("epa", ">", 8.0),)
    assert resolve_policy("ComplexityLow", custom) is COMPLEXITY_LOW
    with pytest.raises(ValueError):
        resolve_policy("Nope", custom)
    path.write_text("broken line\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":1:"):
        load_policies(path)
