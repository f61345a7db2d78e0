"""Patching policies as conjunctions of threshold comparisons.

A clause compares one of three fields against a threshold:

* ``score``      the CVSS base score (feed value, else computed)
* ``complexity`` the Access Complexity level (LOW < MEDIUM < HIGH)
* ``epa``        the continuous E[pA] value

Custom policies are written one per line as ``name = clause and clause ...``,
e.g. ``critical = score >= 7 and complexity <= MEDIUM``. An empty clause list
selects everything.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .cvss import Level
from .ingest import VulnRecord
from .potential import EpaEstimate, ScoredRecord

_OPS: dict[str, Callable[[object, object], bool]] = {
    ">=": operator.ge,
    ">": operator.gt,
    "<=": operator.le,
    "<": operator.lt,
    "==": operator.eq,
}
FIELDS = ("score", "complexity", "epa")


@dataclass(frozen=True)
class Clause:
    field: str
    op: str
    threshold: float | Level

    def __post_init__(self) -> None:
        if self.field not in FIELDS:
            raise ValueError(f"unknown policy field {self.field!r}")
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")
        if (self.field == "complexity") != isinstance(self.threshold, Level):
            raise ValueError(f"bad threshold {self.threshold!r} for field {self.field}")

    def holds(self, record: VulnRecord, epa: EpaEstimate) -> bool:
        if self.field == "score":
            lhs: object = record.cvss_score
        elif self.field == "complexity":
            lhs = epa.complexity
        else:
            lhs = epa.value
        return _OPS[self.op](lhs, self.threshold)

    def __str__(self) -> str:
        thr = self.threshold.name if isinstance(self.threshold, Level) else f"{self.threshold:g}"
        return f"{self.field} {self.op} {thr}"


@dataclass(frozen=True)
class Policy:
    name: str
    clauses: tuple[Clause, ...] = ()

    @property
    def expression(self) -> str:
        return " and ".join(map(str, self.clauses)) or "true"

    def __str__(self) -> str:
        return self.name


ALL_VULNS = Policy("AllVulns")
CVSS_AT_LEAST_4 = Policy("CvssAtLeast4", (Clause("score", ">=", 4.0),))
COMPLEXITY_LOW = Policy("ComplexityLow", (Clause("complexity", "==", Level.LOW),))
COMPLEXITY_AT_MOST_MEDIUM = Policy("ComplexityAtMostMedium", (Clause("complexity", "<=", Level.MEDIUM),))
EPA_HIGH = Policy("EpaHigh", (Clause("epa", ">", 5.0),))

BUILTIN_POLICIES: dict[str, Policy] = {
    p.name: p for p in (ALL_VULNS, CVSS_AT_LEAST_4, COMPLEXITY_LOW, COMPLEXITY_AT_MOST_MEDIUM, EPA_HIGH)
}


def decide(policy: Policy, record: VulnRecord, epa: EpaEstimate) -> bool:
    """True means Patch."""
    return all(c.holds(record, epa) for c in policy.clauses)


def decide_scored(policy: Policy, scored: ScoredRecord) -> bool:
    return decide(policy, scored.record, scored.epa)


def workload(policy: Policy, records: Iterable[ScoredRecord]) -> int:
    return sum(1 for s in records if decide(policy, s.record, s.epa))


_CLAUSE_RE = re.compile(r"\s*(score|complexity|epa)\s*(>=|<=|==|>|<)\s*([A-Za-z]+|[-+]?\d+(?:\.\d*)?)\s*")


def parse_clause(text: str) -> Clause:
    m = _CLAUSE_RE.fullmatch(text)
    if m is None:
        raise ValueError(f"cannot parse policy clause {text.strip()!r}")
    name, op, raw = m.groups()
    if name == "complexity":
        return Clause(name, op, Level.parse(raw))
    try:
        return Clause(name, op, float(raw))
    except ValueError:
        raise ValueError(f"threshold for {name} must be numeric, got {raw!r}") from None


def parse_policy(line: str) -> Policy:
    """Parse ``name = clause and clause ...``; ``name = true`` selects all."""
    if "=" not in line.split("==")[0]:
        raise ValueError(f"expected 'name = expression', got {line.strip()!r}")
    name, expr = line.split("=", 1)
    name = name.strip()
    if not re.fullmatch(r"[A-Za-z_][\w.-]*", name):
        raise ValueError(f"bad policy name {name!r}")
    expr = expr.strip()
    if expr.lower() == "true":
        return Policy(name)
    return Policy(name, tuple(parse_clause(part) for part in re.split(r"\band\b", expr)))


def load_policies(path: str | Path) -> list[Policy]:
    policies = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                policies.append(parse_policy(line))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return policies


def resolve_policy(name: str, custom: Iterable[Policy] = ()) -> Policy:
    for p in custom:
        if p.name == name:
            return p
    try:
        return BUILTIN_POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; built-ins are {list(BUILTIN_POLICIES)}") from None
