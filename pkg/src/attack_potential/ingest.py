"""Loaders for vulnerability feeds, attack volumes and exploited-CVE lists.

File formats
------------
NVD-style feed (JSON array)::

    [{"id": "CVE-2010-0806", "published": "2010-03-10",
      "cvss2_vector": "AV:N/AC:M/Au:N/C:C/I:C/A:C", "cvss2_score": 9.3,
      "products": ["internet_explorer"]}, ...]

``published`` and ``cvss2_score`` are optional. Attack volumes are a CSV with
header ``cve_id,attack_count``. Exploited sets are one CVE id per line.
Category rules are ``pattern<TAB>CATEGORY`` lines, first match wins.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .cvss import CvssParseError, CvssVector, base_score, parse_vector

log = logging.getLogger(__name__)

CVE_RE = re.compile(r"CVE-(\d{4})-\d{4,}")


class IngestError(ValueError):
    pass


class SchemaError(IngestError):
    def __init__(self, message: str, index: int | None = None):
        where = f"entry {index}: " if index is not None else ""
        super().__init__(where + message)
        self.index = index


class RowError(IngestError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Category(enum.Enum):
    IE = "IE"
    PLUGIN = "PLUGIN"
    PROD = "PROD"
    WINDOWS = "WINDOWS"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class VulnRecord:
    cve_id: str
    vector: CvssVector
    cvss_score: float
    software_names: tuple[str, ...]
    year: int
    category: Category
    score_source: str = "feed"  # "feed" or "computed"


@dataclass(frozen=True)
class AttackRecord:
    cve_id: str
    attack_count: int


@dataclass(frozen=True)
class CategoryRules:
    rules: tuple[tuple[re.Pattern[str], Category], ...]

    def __post_init__(self) -> None:
        if not self.rules:
            raise ValueError("category rules must not be empty")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "CategoryRules":
        rules = []
        for lineno, line in enumerate(lines, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise RowError("expected 'pattern<TAB>CATEGORY'", lineno)
            pattern, cat = parts[0].strip(), parts[1].strip().upper()
            try:
                rules.append((re.compile(pattern), Category(cat)))
            except re.error as exc:
                raise RowError(f"bad pattern {pattern!r}: {exc}", lineno) from None
            except ValueError:
                raise RowError(f"unknown category {cat!r}", lineno) from None
        return cls(tuple(rules))


def load_category_rules(path: str | Path) -> CategoryRules:
    with open(path, encoding="utf-8") as fh:
        return CategoryRules.from_lines(fh)


def default_category_rules() -> CategoryRules:
    text = resources.files("attack_potential").joinpath("data/category_rules.tsv").read_text("utf-8")
    return CategoryRules.from_lines(text.splitlines())


def classify_software(names: Sequence[str], rules: CategoryRules) -> Category:
    """Category of the first rule (in file order) that fully matches any name.

    Falls back to PROD when nothing matches, so the result is always defined.
    """
    for pattern, category in rules.rules:
        if any(pattern.fullmatch(name) for name in names):
            return category
    return Category.PROD


@dataclass(frozen=True)
class SkippedEntry:
    index: int
    cve_id: str
    reason: str


@dataclass
class NvdLoad:
    """Records loaded from a feed plus the entries that were skipped."""

    records: list[VulnRecord] = field(default_factory=list)
    skipped: list[SkippedEntry] = field(default_factory=list)

    @property
    def skip_count(self) -> int:
        return len(self.skipped)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def cve_year(cve_id: str) -> int:
    m = CVE_RE.fullmatch(cve_id)
    if m is None:
        raise ValueError(f"not a CVE identifier: {cve_id!r}")
    return int(m.group(1))


def load_nvd(path: str | Path, rules: CategoryRules | None = None) -> NvdLoad:
    """Load an NVD-style JSON feed.

    Entries with no CVSS v2 vector, or one that fails to parse, are skipped
    and reported in ``NvdLoad.skipped``. Structural problems raise SchemaError.
    """
    rules = rules or default_category_rules()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise SchemaError("feed must be a JSON array of entries")

    out = NvdLoad()
    for index, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise SchemaError("entry must be an object", index)
        cve_id = entry.get("id")
        if not isinstance(cve_id, str) or CVE_RE.fullmatch(cve_id) is None:
            raise SchemaError(f"bad or missing CVE id {cve_id!r}", index)
        products = entry.get("products", [])
        if not isinstance(products, list) or not all(isinstance(p, str) for p in products):
            raise SchemaError("'products' must be a list of strings", index)

        raw_vector = entry.get("cvss2_vector")
        if raw_vector is None:
            out.skipped.append(SkippedEntry(index, cve_id, "no CVSS v2 vector"))
            continue
        try:
            vector = parse_vector(raw_vector)
        except CvssParseError as exc:
            log.warning("skipping %s (entry %d): %s", cve_id, index, exc)
            out.skipped.append(SkippedEntry(index, cve_id, f"bad vector: {exc}"))
            continue

        score = entry.get("cvss2_score")
        if score is None:
            score, source = base_score(vector), "computed"
        elif isinstance(score, (int, float)) and not isinstance(score, bool) and 0 <= score <= 10:
            score, source = float(score), "feed"
        else:
            raise SchemaError(f"cvss2_score out of range: {score!r}", index)

        published = entry.get("published")
        if published is None:
            year = cve_year(cve_id)
        else:
            try:
                year = date.fromisoformat(str(published)[:10]).year
            except ValueError:
                raise SchemaError(f"bad published date {published!r}", index) from None

        names = tuple(p.strip().lower() for p in products)
        out.records.append(
            VulnRecord(
                cve_id=cve_id,
                vector=vector,
                cvss_score=score,
                software_names=names,
                year=year,
                category=classify_software(names, rules),
                score_source=source,
            )
        )
    if out.skipped:
        log.info("%s: loaded %d records, skipped %d", path, len(out.records), out.skip_count)
    return out


def load_attacks(path: str | Path) -> list[AttackRecord]:
    """Read per-CVE attack counts; duplicate ids are summed, first-seen order kept."""
    totals: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["cve_id", "attack_count"]:
            raise RowError("header must be 'cve_id,attack_count'", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise RowError(f"expected 2 fields, got {len(row)}", line)
            cve_id, raw = row[0].strip(), row[1].strip()
            if CVE_RE.fullmatch(cve_id) is None:
                raise RowError(f"bad CVE id {cve_id!r}", line)
            try:
                count = int(raw)
            except ValueError:
                raise RowError(f"attack_count is not an integer: {raw!r}", line) from None
            if count < 0:
                raise RowError(f"negative attack_count {count}", line)
            totals[cve_id] = totals.get(cve_id, 0) + count
    return [AttackRecord(cve_id, count) for cve_id, count in totals.items()]


def load_exploited_set(path: str | Path) -> set[str]:
    exploited = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if CVE_RE.fullmatch(text) is None:
                raise RowError(f"not a CVE id: {text!r}", lineno)
            exploited.add(text)
    return exploited


def attack_counts(attacks: Iterable[AttackRecord]) -> dict[str, int]:
    return {a.cve_id: a.attack_count for a in attacks}
