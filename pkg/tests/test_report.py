from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from attack_potential.cvss import Level
from attack_potential.evaluation import EvaluationConfig, evaluate_by_category, split_cases
from attack_potential.ingest import AttackRecord
from attack_potential.policy import ALL_VULNS, EPA_HIGH
from attack_potential.report import crosstab, density_svg, evaluation_json, pa_density, pa_rows, rr_rows
from builders import make_record, scored


def test_crosstab_single_exploited_record():
    rec = scored(make_record("CVE-2010-0001", ac="L", impact="H"))
    ct = crosstab([rec], {"CVE-2010-0001"})
    assert ct.exploited[(Level.LOW, Level.HIGH)] == 1.0
    assert ct.population[(Level.LOW, Level.HIGH)] == 1.0
    assert sum(ct.exploited.values()) == 1.0


def test_crosstab_empty_input():
    ct = crosstab([], set())
    assert ct.exploited is None and ct.population is None
    assert all(row[2] == "" and row[3] == "" for row in ct.rows())


def test_crosstab_two_cells_half_each():
    recs = [
        scored(make_record("CVE-2010-0001", ac="L", impact="H")),
        scored(make_record("CVE-2010-0002", ac="L", impact="H")),
        scored(make_record("CVE-2010-0003", ac="M", impact="L")),
        scored(make_record("CVE-2010-0004", ac="M", impact="L")),
    ]
    ct = crosstab(recs, set())
    assert ct.population[(Level.LOW, Level.HIGH)] == 0.5
    assert ct.population[(Level.MEDIUM, Level.LOW)] == 0.5
    assert ct.exploited is None
    assert [r[:2] for r in ct.rows()][:3] == [["HIGH", "HIGH"], ["MEDIUM", "HIGH"], ["LOW", "HIGH"]]


def test_crosstab_sums_and_permutation_invariance():
    rng = random.Random(2)
    recs = [
        scored(make_record(f"CVE-2010-{1000 + k}", ac=rng.choice("LMH"), impact=rng.choice("LMH"))) for k in range(300)
    ]
    exploited = {r.cve_id for r in recs if rng.random() < 0.3}
    ct = crosstab(recs, exploited)
    assert abs(sum(ct.exploited.values()) - 1) < 1e-9
    assert abs(sum(ct.population.values()) - 1) < 1e-9
    rng.shuffle(recs)
    assert crosstab(recs, exploited).population == pytest.approx(ct.population)


def test_density_constant_counts():
    d = pa_density([AttackRecord(f"CVE-2010-000{k}", 10) for k in range(3)])
    nonzero = [(lo, hi) for lo, hi, dens in zip(d.histogram.bin_edges, d.histogram.bin_edges[1:], d.histogram.densities) if dens > 0]
    assert nonzero == [(1.0, 1.25)]
    assert d.quantile(0.5) == 1.0
    assert d.histogram.integral() == pytest.approx(1.0, abs=1e-9)


def test_density_two_points_median():
    d = pa_density([AttackRecord("CVE-2010-0001", 1), AttackRecord("CVE-2010-0002", 100)])
    # type-7: h = (n - 1) p = 0.5, halfway between pA 0 and pA 2
    assert d.quantile(0.5) == 1.0
    assert d.quantile(0.75) == 1.5
    assert d.quantile(0.0) == 0.0 and d.quantile(1.0) == 2.0


def test_density_empty_and_zero_counts():
    d = pa_density([AttackRecord("CVE-2010-0001", 0)])
    assert d.histogram.n == 0 and d.histogram.bin_edges == ()
    assert d.quantile(0.5) is None
    with pytest.raises(ValueError):
        pa_density([], bin_width=0)


@given(
    st.lists(st.integers(1, 10**7), min_size=1, max_size=200),
    st.sampled_from([0.1, 0.25, 0.5, 1.0]),
)
def test_density_integrates_to_one_and_quantiles_monotone(counts, width):
    d = pa_density([AttackRecord(f"CVE-2010-{1000 + k}", c) for k, c in enumerate(counts)], width)
    assert abs(d.histogram.integral() - 1) < 1e-9
    qs = [d.quantile(p) for p in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0)]
    assert qs == sorted(qs)
    assert qs[-1] == pytest.approx(max(math.log10(c) for c in counts))


def test_evaluation_tables_render_undefined_as_dash():
    pop = [make_record(f"CVE-2010-{1000 + k}", ac="LMH"[k % 3], impact="HML"[k // 3 % 3]) for k in range(45)]
    exploited = {r.cve_id for r in pop[::3]}
    attacks = [AttackRecord(c, 50) for c in sorted(exploited)]
    ev = evaluate_by_category([ALL_VULNS, EPA_HIGH], split_cases(pop, exploited), pop, exploited, attacks, EvaluationConfig(ratio=2, iterations=20, seed=1))
    rows = rr_rows(ev)
    assert rows[0][:6] == ["Aggregate", "AllVulns", 45, "-", "-", "-"]
    assert rows[1][0:2] == ["Aggregate", "EpaHigh"] and rows[1][3].endswith("%")
    prow = pa_rows(ev)
    assert prow[0] == ["Aggregate", "AllVulns", "100.0%", prow[0][4], prow[0][4]]
    payload = evaluation_json(ev)
    assert payload["rows"][0]["rr"] is None and payload["rows"][0]["undefined_reason"]


def test_density_svg_is_well_formed():
    import xml.etree.ElementTree as ET

    d = pa_density([AttackRecord(f"CVE-2010-{1000 + k}", 10 ** (k % 5)) for k in range(20)])
    root = ET.fromstring(density_svg(d))
    assert root.tag.endswith("svg")
    assert len([e for e in root if e.tag.endswith("rect")]) == len(d.histogram.densities)
    ET.fromstring(density_svg(pa_density([])))
