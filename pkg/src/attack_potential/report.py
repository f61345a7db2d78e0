"""Tabular and plot-data renderings: cross-tabs, pA density, evaluation tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .cvss import Level
from .evaluation import AGGREGATE, Evaluation, EvaluationRow
from .ingest import AttackRecord
from .potential import LEVELS_DESC, ConfusionMatrix, ScoredRecord

DEFAULT_BIN_WIDTH = 0.25
CELL_ORDER = tuple((c, i) for c in LEVELS_DESC for i in LEVELS_DESC)  # (complexity, impact)


@dataclass(frozen=True)
class CrossTab:
    """Fractions per (complexity, impact) cell; a table is None when its universe is empty."""

    exploited: dict[tuple[Level, Level], float] | None
    population: dict[tuple[Level, Level], float] | None
    n_exploited: int
    n_population: int

    def rows(self) -> list[list]:
        def frac(table, cell):
            return "" if table is None else repr(float(table[cell]))

        return [[i.name, c.name, frac(self.exploited, (c, i)), frac(self.population, (c, i))] for c, i in CELL_ORDER]


CROSSTAB_HEADER = ("impact", "complexity", "frac_exploited", "frac_population")


def _fractions(records: Sequence[ScoredRecord]) -> dict[tuple[Level, Level], float] | None:
    if not records:
        return None
    counts = {cell: 0 for cell in CELL_ORDER}
    for s in records:
        counts[(s.complexity, s.impact)] += 1
    return {cell: n / len(records) for cell, n in counts.items()}


def crosstab(records: Sequence[ScoredRecord], exploited) -> CrossTab:
    hits = [s for s in records if s.cve_id in exploited]
    return CrossTab(_fractions(hits), _fractions(records), len(hits), len(records))


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple[float, ...]
    densities: tuple[float, ...]
    n: int

    def integral(self) -> float:
        widths = np.diff(self.bin_edges)
        return float(np.sum(np.asarray(self.densities) * widths))

    def rows(self) -> list[list]:
        return [
            [f"{lo:g}", f"{hi:g}", repr(float(d))]
            for lo, hi, d in zip(self.bin_edges[:-1], self.bin_edges[1:], self.densities)
        ]


DENSITY_HEADER = ("bin_lo", "bin_hi", "density")
QUANTILE_HEADER = ("p", "value")


@dataclass(frozen=True)
class PaDensity:
    histogram: Histogram
    values: tuple[float, ...]

    def quantile(self, p: float) -> float | None:
        """Inverse empirical CDF with linear interpolation between order statistics."""
        if not 0 <= p <= 1:
            raise ValueError(f"probability must be in [0, 1], got {p}")
        if not self.values:
            return None
        return float(np.quantile(np.asarray(self.values), p, method="linear"))

    def quantiles(self, ps: Iterable[float] = (0.5, 0.75)) -> dict[float, float | None]:
        return {p: self.quantile(p) for p in ps}


def pa_density(attacks: Iterable[AttackRecord], bin_width: float = DEFAULT_BIN_WIDTH) -> PaDensity:
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    values = sorted(math.log10(a.attack_count) for a in attacks if a.attack_count >= 1)
    if not values:
        return PaDensity(Histogram((), (), 0), ())
    n_bins = int(math.floor(values[-1] / bin_width)) + 1
    edges = np.arange(n_bins + 1) * bin_width
    counts, _ = np.histogram(values, bins=edges)
    densities = counts / (len(values) * bin_width)
    return PaDensity(Histogram(tuple(map(float, edges)), tuple(map(float, densities)), len(values)), tuple(values))


def confusion_rows(cm: ConfusionMatrix) -> list[list]:
    return cm.rows()


def _pct(x: float | None, places: int = 1) -> str:
    return "-" if x is None else f"{100 * x:.{places}f}%"


def _pa(x: float | None) -> str:
    return "-" if x is None else f"{x:.1f}"


RR_HEADER = ("group", "policy", "n_vulns", "rr", "ci_low", "ci_high", "r_treated", "r_untreated", "iterations")
PA_HEADER = ("group", "policy", "percent_v", "pa_foiled", "pa_total")


def _group_order(evaluation: Evaluation) -> list[str]:
    seen: list[str] = []
    for r in evaluation.rows:
        if r.group not in seen:
            seen.append(r.group)
    return [AGGREGATE] + sorted(g for g in seen if g != AGGREGATE)


def _ordered_rows(evaluation: Evaluation) -> list[EvaluationRow]:
    order = {g: k for k, g in enumerate(_group_order(evaluation))}
    policies = list(dict.fromkeys(r.policy for r in evaluation.rows))
    return sorted(evaluation.rows, key=lambda r: (order[r.group], policies.index(r.policy)))


def rr_rows(evaluation: Evaluation) -> list[list]:
    """One row per (group, policy): workload, RR and its CI; '-' when undefined."""
    out = []
    for r in _ordered_rows(evaluation):
        risk = r.risk
        out.append(
            [
                r.group,
                r.policy,
                r.n_vulns,
                _pct(risk.rr if risk else None),
                _pct(risk.ci_low if risk else None),
                _pct(risk.ci_high if risk else None),
                _pct(risk.r_treated if risk else None),
                _pct(risk.r_untreated if risk else None),
                risk.iterations if risk else 0,
            ]
        )
    return out


def pa_rows(evaluation: Evaluation) -> list[list]:
    return [
        [r.group, r.policy, _pct(r.pa.percent_v), _pa(r.pa.pa_foiled), _pa(r.pa.pa_total)]
        for r in _ordered_rows(evaluation)
    ]


def evaluation_json(evaluation: Evaluation) -> dict:
    rows = []
    for r in _ordered_rows(evaluation):
        risk = r.risk
        rows.append(
            {
                "group": r.group,
                "policy": r.policy,
                "n_vulns": r.n_vulns,
                "rr": None if risk is None else risk.rr,
                "ci_low": None if risk is None else risk.ci_low,
                "ci_high": None if risk is None else risk.ci_high,
                "r_treated": None if risk is None else risk.r_treated,
                "r_untreated": None if risk is None else risk.r_untreated,
                "iterations": 0 if risk is None else risk.iterations,
                "dropped_iterations": None if risk is None else risk.dropped,
                "undefined_reason": r.undefined_reason,
                "percent_v": r.pa.percent_v,
                "pa_foiled": r.pa.pa_foiled,
                "pa_total": r.pa.pa_total,
            }
        )
    return {"n_cases": evaluation.n_cases, "excluded_cases": list(evaluation.excluded_cases), "rows": rows}


def density_svg(density: PaDensity, width: int = 480, height: int = 240) -> str:
    """Minimal static bar chart of a pA histogram."""
    hist = density.histogram
    pad = 30
    bars = []
    if hist.n:
        top = max(hist.densities) or 1.0
        span = hist.bin_edges[-1] - hist.bin_edges[0]
        sx = (width - 2 * pad) / span
        sy = (height - 2 * pad) / top
        for lo, hi, d in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.densities):
            h = d * sy
            bars.append(
                f'<rect x="{pad + lo * sx:.2f}" y="{height - pad - h:.2f}" '
                f'width="{(hi - lo) * sx:.2f}" height="{h:.2f}" fill="#4a6fa5"/>'
            )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n'
        + "\n".join(bars)
        + f'\n<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">pA</text>\n</svg>\n'
    )
