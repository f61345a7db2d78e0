"""CVSS v2 base vectors: parsing, formatting, scoring and level mapping."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping


class CvssParseError(ValueError):
    """Base class for vector parsing failures."""


class MissingMetric(CvssParseError):
    def __init__(self, metric: str):
        super().__init__(f"missing base metric {metric}")
        self.metric = metric


class DuplicateMetric(CvssParseError):
    def __init__(self, metric: str):
        super().__init__(f"metric {metric} given more than once")
        self.metric = metric


class UnknownValue(CvssParseError):
    def __init__(self, metric: str, value: str):
        super().__init__(f"unsupported metric/value {metric}:{value}")
        self.metric = metric
        self.value = value


class MalformedSyntax(CvssParseError):
    pass


class AccessVector(enum.Enum):
    LOCAL = "L"
    ADJACENT_NETWORK = "A"
    NETWORK = "N"


class AccessComplexity(enum.Enum):
    HIGH = "H"
    MEDIUM = "M"
    LOW = "L"


class Authentication(enum.Enum):
    MULTIPLE = "M"
    SINGLE = "S"
    NONE = "N"


class ImpactValue(enum.Enum):
    NONE = "N"
    PARTIAL = "P"
    COMPLETE = "C"


IMPACT_ORDER = (ImpactValue.NONE, ImpactValue.PARTIAL, ImpactValue.COMPLETE)


class Level(enum.IntEnum):
    """Three-level ordinal scale, ordered LOW < MEDIUM < HIGH."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    def __str__(self) -> str:
        return self.name

    @classmethod
    def parse(cls, text: str) -> "Level":
        key = text.strip().upper()
        aliases = {"L": "LOW", "M": "MEDIUM", "H": "HIGH"}
        try:
            return cls[aliases.get(key, key)]
        except KeyError:
            raise ValueError(f"not a level: {text!r}") from None


@dataclass(frozen=True)
class CvssVector:
    access_vector: AccessVector
    access_complexity: AccessComplexity
    authentication: Authentication
    conf_impact: ImpactValue
    integ_impact: ImpactValue
    avail_impact: ImpactValue

    @property
    def cia(self) -> tuple[ImpactValue, ImpactValue, ImpactValue]:
        return (self.conf_impact, self.integ_impact, self.avail_impact)

    def __str__(self) -> str:
        return format_vector(self)


# canonical key -> (field name, enum type)
_METRICS: dict[str, tuple[str, type[enum.Enum]]] = {
    "AV": ("access_vector", AccessVector),
    "AC": ("access_complexity", AccessComplexity),
    "Au": ("authentication", Authentication),
    "C": ("conf_impact", ImpactValue),
    "I": ("integ_impact", ImpactValue),
    "A": ("avail_impact", ImpactValue),
}
_KEY_LOOKUP = {key.upper(): key for key in _METRICS}


def parse_vector(text: str) -> CvssVector:
    """Parse a CVSS v2 base vector such as ``AV:N/AC:M/Au:N/C:C/I:C/A:C``.

    Keys and values are case-insensitive, metric order is free and one pair
    of surrounding parentheses is tolerated. Temporal and environmental
    metrics are rejected with :class:`UnknownValue`.
    """
    if not isinstance(text, str):
        raise MalformedSyntax(f"vector must be a string, got {type(text).__name__}")
    body = text.strip()
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1].strip()
    if not body:
        raise MalformedSyntax("empty vector")

    values: dict[str, enum.Enum] = {}
    for part in body.split("/"):
        pieces = part.split(":")
        if len(pieces) != 2 or not pieces[0].strip() or not pieces[1].strip():
            raise MalformedSyntax(f"bad metric component {part!r} in {text!r}")
        raw_key, raw_value = pieces[0].strip(), pieces[1].strip()
        key = _KEY_LOOKUP.get(raw_key.upper())
        if key is None:
            raise UnknownValue(raw_key, raw_value)
        if key in values:
            raise DuplicateMetric(key)
        enum_type = _METRICS[key][1]
        try:
            values[key] = enum_type(raw_value.upper())
        except ValueError:
            raise UnknownValue(key, raw_value) from None

    for key in _METRICS:
        if key not in values:
            raise MissingMetric(key)
    return CvssVector(**{_METRICS[k][0]: v for k, v in values.items()})


def format_vector(v: CvssVector) -> str:
    return "/".join(f"{key}:{getattr(v, field).value}" for key, (field, _) in _METRICS.items())


_AV_WEIGHT = {AccessVector.LOCAL: 0.395, AccessVector.ADJACENT_NETWORK: 0.646, AccessVector.NETWORK: 1.0}
_AC_WEIGHT = {AccessComplexity.HIGH: 0.35, AccessComplexity.MEDIUM: 0.61, AccessComplexity.LOW: 0.71}
_AU_WEIGHT = {Authentication.MULTIPLE: 0.45, Authentication.SINGLE: 0.56, Authentication.NONE: 0.704}
_IMPACT_WEIGHT = {ImpactValue.NONE: 0.0, ImpactValue.PARTIAL: 0.275, ImpactValue.COMPLETE: 0.660}


def _raw_impact(v: CvssVector) -> float:
    c, i, a = (_IMPACT_WEIGHT[x] for x in v.cia)
    return 10.41 * (1 - (1 - c) * (1 - i) * (1 - a))


def _round_half_up(x: float, places: str) -> float:
    return float(Decimal(repr(x)).quantize(Decimal(places), rounding=ROUND_HALF_UP))


def impact_subscore(v: CvssVector) -> float:
    """CVSS v2 impact subscore, rounded to two decimals and capped at 10.0."""
    return min(10.0, _round_half_up(_raw_impact(v), "0.01"))


def exploitability_subscore(v: CvssVector) -> float:
    return 20 * _AV_WEIGHT[v.access_vector] * _AC_WEIGHT[v.access_complexity] * _AU_WEIGHT[v.authentication]


def base_score(v: CvssVector) -> float:
    impact = _raw_impact(v)
    if impact == 0:
        return 0.0
    score = (0.6 * impact + 0.4 * exploitability_subscore(v) - 1.5) * 1.176
    return min(10.0, _round_half_up(score, "0.1"))


@dataclass(frozen=True)
class ImpactThresholds:
    high: float = 8.0
    medium: float = 4.0

    def __post_init__(self) -> None:
        if not 0 < self.medium < self.high <= 10:
            raise ValueError(f"need 0 < medium < high <= 10, got {self}")


DEFAULT_THRESHOLDS = ImpactThresholds()


def impact_level(v: CvssVector, thresholds: ImpactThresholds = DEFAULT_THRESHOLDS) -> Level:
    score = impact_subscore(v)
    if score >= thresholds.high:
        return Level.HIGH
    if score >= thresholds.medium:
        return Level.MEDIUM
    return Level.LOW


_COMPLEXITY_LEVEL = {
    AccessComplexity.HIGH: Level.HIGH,
    AccessComplexity.MEDIUM: Level.MEDIUM,
    AccessComplexity.LOW: Level.LOW,
}


def complexity_level(v: CvssVector) -> Level:
    return _COMPLEXITY_LEVEL[v.access_complexity]


@dataclass(frozen=True)
class ScoreTable:
    """Ordinal scores per Impact and Access Complexity level used by E[pA]."""

    name: str
    impact_scores: Mapping[Level, float]
    complexity_scores: Mapping[Level, float]

    def __post_init__(self) -> None:
        for label, scores in (("impact", self.impact_scores), ("complexity", self.complexity_scores)):
            if set(scores) != set(Level):
                raise ValueError(f"{label} scores must cover HIGH, MEDIUM and LOW")
            if any(not s > 0 for s in scores.values()):
                raise ValueError(f"{label} scores must be strictly positive")


TABLE2_LITERAL = ScoreTable(
    name="table2-literal",
    impact_scores={Level.HIGH: 10.0, Level.MEDIUM: 6.0, Level.LOW: 3.0},
    complexity_scores={Level.LOW: 10.0, Level.MEDIUM: 7.0, Level.HIGH: 2.0},
)
# Impact MEDIUM = 7 is the only value consistent with the worked E[pA] examples (8.4, 5.9).
TABLE4_CONSISTENT = ScoreTable(
    name="table4-consistent",
    impact_scores={Level.HIGH: 10.0, Level.MEDIUM: 7.0, Level.LOW: 3.0},
    complexity_scores={Level.LOW: 10.0, Level.MEDIUM: 7.0, Level.HIGH: 2.0},
)
PRESETS: dict[str, ScoreTable] = {t.name: t for t in (TABLE2_LITERAL, TABLE4_CONSISTENT)}
DEFAULT_PRESET = TABLE4_CONSISTENT.name


def get_preset(name: str) -> ScoreTable:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown score-table preset {name!r}; choose from {sorted(PRESETS)}") from None
