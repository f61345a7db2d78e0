from __future__ import annotations

from attack_potential.cvss import TABLE4_CONSISTENT, base_score, parse_vector
from attack_potential.ingest import Category, VulnRecord
from attack_potential.potential import score_record

CIA_FOR_IMPACT = {"H": "C:C/I:C/A:C", "M": "C:P/I:P/A:P", "L": "C:N/I:N/A:P"}


def make_record(
    cve_id: str,
    ac: str = "L",
    impact: str = "H",
    score: float | None = None,
    category: Category = Category.PROD,
    year: int = 2010,
) -> VulnRecord:
    vector = parse_vector(f"AV:N/AC:{ac}/Au:N/{CIA_FOR_IMPACT[impact]}")
    return VulnRecord(
        cve_id=cve_id,
        vector=vector,
        cvss_score=base_score(vector) if score is None else score,
        software_names=("x",),
        year=year,
        category=category,
        score_source="computed" if score is None else "feed",
    )


def scored(record: VulnRecord, table=TABLE4_CONSISTENT):
    return score_record(record, table)
