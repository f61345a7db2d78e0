"""Observed and estimated attack potential.

pA is the base-10 log of the attacks recorded against a vulnerability;
E[pA] forecasts it from the CVSS vector alone as
``log10(impact_score) * complexity_score`` under a :class:`ScoreTable`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_DOWN, Decimal
from typing import Iterable, Mapping

from .cvss import DEFAULT_THRESHOLDS, ImpactThresholds, Level, ScoreTable, complexity_level, impact_level
from .ingest import VulnRecord

LEVELS_DESC = (Level.HIGH, Level.MEDIUM, Level.LOW)


class ZeroAttacks(ValueError):
    """No attacks recorded: the vulnerability is unexploited and has no pA."""


class NegativeValue(ValueError):
    pass


def truncate(value: float, places: int = 1) -> str:
    """Render ``value`` cut (not rounded) to ``places`` decimals."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_DOWN))


@dataclass(frozen=True)
class PaMeasure:
    value: float
    attack_count: int

    @property
    def display(self) -> str:
        return truncate(self.value)

    @property
    def level(self) -> Level:
        return discretize(self.value)


def observed_pa(attack_count: int) -> PaMeasure:
    if attack_count == 0:
        raise ZeroAttacks("attack_count is 0; treat the vulnerability as unexploited")
    if attack_count < 0:
        raise ValueError(f"attack_count must be positive, got {attack_count}")
    return PaMeasure(math.log10(attack_count), int(attack_count))


@dataclass(frozen=True)
class EpaEstimate:
    value: float
    impact: Level
    complexity: Level
    score_table: str

    @property
    def display(self) -> str:
        return truncate(self.value)

    @property
    def level(self) -> Level:
        return discretize(self.value)


def estimated_pa(impact: Level, complexity: Level, table: ScoreTable) -> EpaEstimate:
    value = math.log10(table.impact_scores[impact]) * table.complexity_scores[complexity]
    return EpaEstimate(value, impact, complexity, table.name)


def discretize(value: float) -> Level:
    """HIGH above 5, MEDIUM in (3, 5], LOW in [0, 3]."""
    if value < 0 or math.isnan(value):
        raise NegativeValue(f"attack potential must be >= 0, got {value}")
    if value > 5:
        return Level.HIGH
    if value > 3:
        return Level.MEDIUM
    return Level.LOW


@dataclass(frozen=True)
class ScoredRecord:
    record: VulnRecord
    impact: Level
    complexity: Level
    epa: EpaEstimate

    @property
    def cve_id(self) -> str:
        return self.record.cve_id


def score_record(
    record: VulnRecord, table: ScoreTable, thresholds: ImpactThresholds = DEFAULT_THRESHOLDS
) -> ScoredRecord:
    impact = impact_level(record.vector, thresholds)
    complexity = complexity_level(record.vector)
    return ScoredRecord(record, impact, complexity, estimated_pa(impact, complexity, table))


def score_records(
    records: Iterable[VulnRecord], table: ScoreTable, thresholds: ImpactThresholds = DEFAULT_THRESHOLDS
) -> list[ScoredRecord]:
    return [score_record(r, table, thresholds) for r in records]


def match_flag(pa_level: Level, epa_level: Level) -> str:
    """``match`` on agreement, otherwise which side is larger."""
    if pa_level == epa_level:
        return "match"
    return "E[pA]>pA" if epa_level > pa_level else "E[pA]<pA"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed by (pA level, E[pA] level); rows pA, columns E[pA]."""

    cells: Mapping[tuple[Level, Level], int]

    @property
    def total(self) -> int:
        return sum(self.cells.values())

    def row_sum(self, pa_level: Level) -> int:
        return sum(self.cells[(pa_level, e)] for e in Level)

    def col_sum(self, epa_level: Level) -> int:
        return sum(self.cells[(p, epa_level)] for p in Level)

    @property
    def under_estimation_rate(self) -> float:
        """Share of records whose E[pA] level is below their pA level."""
        if self.total == 0:
            return 0.0
        below = sum(n for (p, e), n in self.cells.items() if e < p)
        return below / self.total

    def rows(self) -> list[list[str | int]]:
        """Layout with a header row, one row per pA level and a Sum row."""
        out: list[list[str | int]] = [["pA \\ E[pA]", *(lv.name for lv in LEVELS_DESC), "Sum"]]
        for p in LEVELS_DESC:
            out.append([p.name, *(self.cells[(p, e)] for e in LEVELS_DESC), self.row_sum(p)])
        out.append(["Sum", *(self.col_sum(e) for e in LEVELS_DESC), self.total])
        return out


def confusion_matrix(pairs: Iterable[tuple[Level, Level]]) -> ConfusionMatrix:
    cells = {(p, e): 0 for p in Level for e in Level}
    for pa_level, epa_level in pairs:
        cells[(Level(pa_level), Level(epa_level))] += 1
    return ConfusionMatrix(cells)
