from __future__ import annotations

import json
import random
from collections import Counter

import pytest

from attack_potential.ingest import (
    Category,
    CategoryRules,
    RowError,
    SchemaError,
    classify_software,
    default_category_rules,
    load_attacks,
    load_category_rules,
    load_exploited_set,
    load_nvd,
)


def write_feed(tmp_path, entries, name="nvd.json"):
    path = tmp_path / name
    path.write_text(json.dumps(entries), encoding="utf-8")
    return path


def test_load_nvd_single_entry(tmp_path):
    path = write_feed(
        tmp_path,
        [{"id": "CVE-2010-0806", "cvss2_vector": "AV:N/AC:M/Au:N/C:C/I:C/A:C", "products": ["internet_explorer"]}],
    )
    feed = load_nvd(path)
    assert len(feed) == 1 and feed.skip_count == 0
    rec = feed.records[0]
    assert rec.category is Category.IE
    assert rec.year == 2010
    assert rec.cvss_score == 9.3 and rec.score_source == "computed"


def test_load_nvd_empty_feed(tmp_path):
    feed = load_nvd(write_feed(tmp_path, []))
    assert feed.records == [] and feed.skip_count == 0


def test_load_nvd_skips_bad_and_missing_vectors(tmp_path):
    entries = [
        {"id": "CVE-2011-0001", "cvss2_vector": "AV:N/AC:?", "products": ["x"]},
        {"id": "CVE-2011-0002", "products": ["x"]},
        {"id": "CVE-2011-0003", "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P", "cvss2_score": 7.5, "products": []},
    ]
    feed = load_nvd(write_feed(tmp_path, entries))
    assert [s.index for s in feed.skipped] == [0, 1]
    assert [r.cve_id for r in feed.records] == ["CVE-2011-0003"]
    assert feed.records[0].cvss_score == 7.5 and feed.records[0].score_source == "feed"


def test_published_date_wins_over_id_year(tmp_path):
    entries = [
        {
            "id": "CVE-2009-3886",
            "published": "2010-01-05T12:00:00",
            "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P",
            "products": ["JRE"],
        }
    ]
    rec = load_nvd(write_feed(tmp_path, entries)).records[0]
    assert rec.year == 2010
    assert rec.software_names == ("jre",) and rec.category is Category.PLUGIN


@pytest.mark.parametrize(
    "payload, index",
    [
        ({"not": "a list"}, None),
        (["string entry"], 0),
        ([{"id": "CVE-2010-0806", "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P"}, {"id": "bogus"}], 1),
        ([{"id": "CVE-2010-0806", "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P", "cvss2_score": 11}], 0),
        ([{"id": "CVE-2010-0806", "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P", "products": "ie"}], 0),
        ([{"id": "CVE-2010-0806", "cvss2_vector": "AV:N/AC:L/Au:N/C:P/I:P/A:P", "published": "soon"}], 0),
    ],
)
def test_load_nvd_schema_errors(tmp_path, payload, index):
    with pytest.raises(SchemaError) as err:
        load_nvd(write_feed(tmp_path, payload))
    assert err.value.index == index


def test_load_nvd_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("[{", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_nvd(path)


def test_load_nvd_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_nvd(tmp_path / "nope.json")


def test_load_nvd_deterministic_and_counts_add_up(tmp_path):
    rng = random.Random(7)
    products = ["internet_explorer", "windows_xp", "flash_player", "gimp", "jre"]
    entries = []
    for k in range(200):
        entry = {"id": f"CVE-2012-{1000 + k}", "products": [rng.choice(products)]}
        if rng.random() < 0.9:
            entry["cvss2_vector"] = rng.choice(["AV:N/AC:L/Au:N/C:P/I:P/A:P", "AV:L/AC:H/Au:S/C:C/I:N/A:N", "junk"])
        entries.append(entry)
    path = write_feed(tmp_path, entries)
    first, second = load_nvd(path), load_nvd(path)
    assert first.records == second.records
    histogram = Counter(r.category for r in first.records)
    assert sum(histogram.values()) + first.skip_count == len(entries)


def test_load_attacks_examples(tmp_path):
    path = tmp_path / "attacks.csv"
    path.write_text(
        "cve_id,attack_count\nCVE-2010-0806,126765\nCVE-2005-4459,4\nCVE-2011-0001,3\nCVE-2011-0001,7\n",
        encoding="utf-8",
    )
    counts = {a.cve_id: a.attack_count for a in load_attacks(path)}
    assert counts == {"CVE-2010-0806": 126765, "CVE-2005-4459": 4, "CVE-2011-0001": 10}


def test_load_attacks_permutation_invariant(tmp_path):
    rows = [f"CVE-2011-{1000 + k % 13},{k}" for k in range(60)]
    expected = None
    for seed in range(5):
        random.Random(seed).shuffle(rows)
        path = tmp_path / f"a{seed}.csv"
        path.write_text("cve_id,attack_count\n" + "\n".join(rows) + "\n", encoding="utf-8")
        got = {a.cve_id: a.attack_count for a in load_attacks(path)}
        expected = expected or got
        assert got == expected


@pytest.mark.parametrize(
    "body, line",
    [
        ("cve,count\nCVE-2010-0806,1\n", 1),
        ("cve_id,attack_count\nCVE-2010-0806,lots\n", 2),
        ("cve_id,attack_count\nCVE-2010-0806,1\nnot-a-cve,3\n", 3),
        ("cve_id,attack_count\nCVE-2010-0806,-1\n", 2),
        ("cve_id,attack_count\nCVE-2010-0806,1,2\n", 2),
    ],
)
def test_load_attacks_row_errors(tmp_path, body, line):
    path = tmp_path / "attacks.csv"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(RowError) as err:
        load_attacks(path)
    assert err.value.line == line


def test_load_exploited_set(tmp_path):
    path = tmp_path / "exploited.txt"
    path.write_text("CVE-2010-0806\nCVE-2009-3886\n\nCVE-2008-5359\nCVE-2010-0806\n", encoding="utf-8")
    assert load_exploited_set(path) == {"CVE-2010-0806", "CVE-2009-3886", "CVE-2008-5359"}

    path.write_text("CVE-2010-0806\nnot-a-cve\n", encoding="utf-8")
    with pytest.raises(RowError) as err:
        load_exploited_set(path)
    assert err.value.line == 2


@pytest.mark.parametrize(
    "names, category",
    [
        (["internet_explorer"], Category.IE),
        (["jre"], Category.PLUGIN),
        (["jdk"], Category.PLUGIN),
        (["acrobat"], Category.PLUGIN),
        (["quicktime"], Category.PLUGIN),
        (["windows_2000"], Category.WINDOWS),
        (["windows_95"], Category.WINDOWS),
        (["ace"], Category.PROD),
        (["some_obscure_tool"], Category.PROD),
        ([], Category.PROD),
    ],
)
def test_classify_software_defaults(names, category):
    assert classify_software(names, default_category_rules()) is category


def test_rule_order_decides_ties(tmp_path):
    names = ["internet_explorer", "windows_xp"]
    assert classify_software(names, default_category_rules()) is Category.IE
    path = tmp_path / "rules.tsv"
    path.write_text("windows.*\tWINDOWS\ninternet_explorer\tIE\n.*\tPROD\n", encoding="utf-8")
    assert classify_software(names, load_category_rules(path)) is Category.WINDOWS


def test_rules_without_catch_all_still_total():
    rules = CategoryRules.from_lines(["jre\tPLUGIN"])
    assert classify_software(["gimp"], rules) is Category.PROD


@pytest.mark.parametrize("line", ["jre PLUGIN", "jre\tGAMES", "(unclosed\tIE"])
def test_bad_rule_lines(line):
    with pytest.raises(RowError):
        CategoryRules.from_lines([line])
