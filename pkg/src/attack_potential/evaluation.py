"""Bootstrapped case-control evaluation of patching policies.

Cases are the exploited vulnerabilities. For every case, ``ratio`` controls
are drawn with replacement from the population records sharing the case's
(software category, disclosure year) stratum. Cases and controls are pooled,
each pooled record is put in one cell of a 2x2 table (selected by the policy
or not, exploited or not) and the risk reduction

    RR = a / (a + b) - c / (c + d)

is computed. Repeating the draw ``iterations`` times gives a percentile
confidence interval.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cvss import TABLE4_CONSISTENT, ScoreTable
from .ingest import AttackRecord, Category, VulnRecord
from .policy import Policy, decide
from .potential import ScoredRecord, score_record

log = logging.getLogger(__name__)

CATEGORIES = tuple(Category)
AGGREGATE = "Aggregate"


class UndefinedRisk(ArithmeticError):
    """A row of the contingency table is empty, so one of the risks is 0/0."""


class AllIterationsUndefined(ArithmeticError):
    pass


class EmptyStratum(LookupError):
    def __init__(self, category: Category, year: int):
        super().__init__(f"no population records in stratum ({category}, {year})")
        self.category = category
        self.year = year


@dataclass(frozen=True)
class ContingencyTable:
    """a: selected & exploited, b: selected & not, c: unselected & exploited, d: unselected & not."""

    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        return ContingencyTable(self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d)


@dataclass(frozen=True)
class RiskResult:
    r_treated: float
    r_untreated: float
    rr: float
    ci_low: float | None = None
    ci_high: float | None = None
    iterations: int = 0
    dropped: int = 0
    confidence: float | None = None


@dataclass(frozen=True)
class PaReductionResult:
    percent_v: float
    pa_foiled: float | None
    pa_total: float | None
    n_selected: int
    n_records: int


@dataclass(frozen=True)
class StratifiedSample:
    cases: tuple[VulnRecord, ...]
    controls: tuple[VulnRecord, ...]
    strata: tuple[tuple[Category, int], ...]
    seed: object
    excluded: tuple[str, ...] = ()

    @property
    def pooled(self) -> tuple[VulnRecord, ...]:
        return self.cases + self.controls


def stratum_of(record: VulnRecord) -> tuple[Category, int]:
    return (record.category, record.year)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    """Independent stream for one bootstrap iteration, fixed by (seed, iteration)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration)]))


def _uniform_index(rng: np.random.Generator, sizes: np.ndarray) -> np.ndarray:
    # floor(u * n) is several times faster than rng.integers with array bounds
    idx = (rng.random(len(sizes)) * sizes).astype(np.int64)
    return np.minimum(idx, sizes - 1)


class _Design:
    """Index arrays that let one bootstrap draw be done with a few numpy calls.

    Cases are regrouped by stratum (strata in order of first appearance);
    population indices are concatenated stratum by stratum.
    """

    def __init__(self, cases: Sequence[VulnRecord], population: Sequence[VulnRecord], ratio: int):
        if ratio < 1:
            raise ValueError(f"ratio must be >= 1, got {ratio}")
        self.ratio = int(ratio)
        pop_by_stratum: dict[tuple[Category, int], list[int]] = {}
        for i, rec in enumerate(population):
            pop_by_stratum.setdefault(stratum_of(rec), []).append(i)
        cases_by_stratum: dict[tuple[Category, int], list[int]] = {}
        for j, rec in enumerate(cases):
            cases_by_stratum.setdefault(stratum_of(rec), []).append(j)

        self.strata: list[tuple[Category, int]] = []
        self.excluded: list[str] = []
        case_order: list[int] = []
        pop_order: list[int] = []
        case_start, case_size, pop_start, pop_size = [], [], [], []
        for stratum, members in cases_by_stratum.items():
            pool = pop_by_stratum.get(stratum)
            if not pool:
                log.warning("%s; excluding %d case(s)", EmptyStratum(*stratum), len(members))
                self.excluded.extend(cases[j].cve_id for j in members)
                continue
            self.strata.append(stratum)
            case_start.append(len(case_order))
            case_size.append(len(members))
            case_order.extend(members)
            pop_start.append(len(pop_order))
            pop_size.append(len(pool))
            pop_order.extend(pool)

        self.case_order = np.asarray(case_order, dtype=np.int64)
        self.pop_order = np.asarray(pop_order, dtype=np.int64)
        sizes = np.asarray(case_size, dtype=np.int64)
        slot_stratum = np.repeat(np.arange(len(sizes)), sizes)
        # per case slot: where its stratum's cases start and how many there are
        self.slot_case_start = np.asarray(case_start, dtype=np.int64)[slot_stratum]
        self.slot_case_size = sizes[slot_stratum]
        # per control slot (ratio per case slot)
        ctrl_stratum = np.repeat(slot_stratum, self.ratio)
        self.ctrl_pop_start = np.asarray(pop_start, dtype=np.int64)[ctrl_stratum]
        self.ctrl_pop_size = np.asarray(pop_size, dtype=np.int64)[ctrl_stratum]

    @property
    def n_cases(self) -> int:
        return len(self.case_order)

    def positions(self, rng: np.random.Generator, resample_cases: bool) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`draw` but indexing ``case_order`` and ``pop_order``."""
        if resample_cases:
            slot = self.slot_case_start + _uniform_index(rng, self.slot_case_size)
        else:
            slot = np.arange(self.n_cases)
        return slot, self.ctrl_pop_start + _uniform_index(rng, self.ctrl_pop_size)

    def draw(self, rng: np.random.Generator, resample_cases: bool) -> tuple[np.ndarray, np.ndarray]:
        """Return (case indices into ``cases``, control indices into ``population``)."""
        if self.n_cases == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        slot, picks = self.positions(rng, resample_cases)
        return self.case_order[slot], self.pop_order[picks]


def sample_controls(
    cases: Sequence[VulnRecord],
    population: Sequence[VulnRecord],
    ratio: int,
    rng_seed: int | np.random.Generator,
    strict: bool = False,
) -> StratifiedSample:
    """Draw ``ratio`` stratum-matched controls per case.

    Cases whose stratum has no population records are excluded and listed in
    ``StratifiedSample.excluded``; with ``strict=True`` EmptyStratum is raised.
    """
    design = _Design(cases, population, ratio)
    if strict and design.excluded:
        first = next(c for c in cases if c.cve_id in set(design.excluded))
        raise EmptyStratum(*stratum_of(first))
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    case_idx, ctrl_idx = design.draw(rng, resample_cases=False)
    return StratifiedSample(
        cases=tuple(cases[j] for j in case_idx),
        controls=tuple(population[i] for i in ctrl_idx),
        strata=tuple(design.strata),
        seed=rng_seed if not isinstance(rng_seed, np.random.Generator) else None,
        excluded=tuple(design.excluded),
    )


def contingency(
    policy: Policy,
    sample: StratifiedSample,
    exploited: set[str] | frozenset[str],
    score_table: ScoreTable = TABLE4_CONSISTENT,
) -> ContingencyTable:
    a = b = c = d = 0
    for rec in sample.pooled:
        selected = decide(policy, rec, score_record(rec, score_table).epa)
        hit = rec.cve_id in exploited
        if selected:
            a, b = (a + 1, b) if hit else (a, b + 1)
        else:
            c, d = (c + 1, d) if hit else (c, d + 1)
    return ContingencyTable(a, b, c, d)


def risk_reduction(t: ContingencyTable) -> RiskResult:
    if t.a + t.b == 0:
        raise UndefinedRisk("no vulnerability is selected (a + b = 0)")
    if t.c + t.d == 0:
        raise UndefinedRisk("no vulnerability is left unselected (c + d = 0)")
    treated = t.a / (t.a + t.b)
    untreated = t.c / (t.c + t.d)
    return RiskResult(treated, untreated, treated - untreated)


def _percentile_ci(values: np.ndarray, confidence: float) -> tuple[float, float]:
    ordered = np.sort(values)
    tail = (1.0 - confidence) / 2.0
    lo, hi = np.quantile(ordered, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi)


def _codes(
    records: Sequence[VulnRecord], policies: Sequence[Policy], exploited, score_table: ScoreTable
) -> np.ndarray:
    """Per policy and record: category * 4 + cell, cell 0..3 standing for a, b, c, d."""
    cat_index = {c: k for k, c in enumerate(CATEGORIES)}
    out = np.empty((len(policies), len(records)), dtype=np.int64)
    # decisions depend only on the vector and the score, which repeat a lot
    offsets: dict[tuple, np.ndarray] = {}
    for i, rec in enumerate(records):
        key = (rec.vector, rec.cvss_score)
        off = offsets.get(key)
        if off is None:
            epa = score_record(rec, score_table).epa
            off = offsets[key] = np.array([0 if decide(p, rec, epa) else 2 for p in policies], dtype=np.int64)
        out[:, i] = off + (cat_index[rec.category] * 4 + (0 if rec.cve_id in exploited else 1))
    return out


def _profiles(case_codes: np.ndarray, pop_codes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse records with identical codes across all policies into one profile.

    Returns profile ids for cases and population plus a (profiles, policies * 16)
    indicator matrix mapping a profile to its contingency bin per policy.
    """
    n_pol = pop_codes.shape[0]
    width = 4 * len(CATEGORIES)
    both = np.concatenate([case_codes, pop_codes], axis=1).T
    keys, ids = np.unique(both, axis=0, return_inverse=True)
    ids = ids.reshape(-1)
    onehot = np.zeros((len(keys), n_pol * width), dtype=np.int64)
    rows = np.repeat(np.arange(len(keys)), n_pol)
    cols = (keys + np.arange(n_pol) * width).ravel()
    onehot[rows, cols] = 1
    n_cases = case_codes.shape[1]
    return ids[:n_cases], ids[n_cases:], onehot


def _run_chunk(args) -> np.ndarray:
    design, case_codes, pop_codes, seed, start, stop, resample_cases = args
    n_pol = pop_codes.shape[0]
    case_prof, pop_prof, onehot = _profiles(case_codes, pop_codes)
    n_prof = len(onehot)
    counts = np.zeros((stop - start, n_prof), dtype=np.int64)
    if design.n_cases == 0:
        return (counts @ onehot).reshape(stop - start, n_pol, len(CATEGORIES), 4)
    # profiles laid out in the design's stratum order, so a draw needs one gather
    case_prof = case_prof[design.case_order]
    pop_prof = pop_prof[design.pop_order]
    for k, it in enumerate(range(start, stop)):
        slot, picks = design.positions(iteration_rng(seed, it), resample_cases)
        counts[k] = np.bincount(case_prof[slot], minlength=n_prof)
        counts[k] += np.bincount(pop_prof[picks], minlength=n_prof)
    return (counts @ onehot).reshape(stop - start, n_pol, len(CATEGORIES), 4)


def bootstrap_tables(
    policies: Sequence[Policy],
    cases: Sequence[VulnRecord],
    population: Sequence[VulnRecord],
    exploited,
    ratio: int = 10,
    iterations: int = 1000,
    rng_seed: int = 0,
    score_table: ScoreTable = TABLE4_CONSISTENT,
    resample_cases: bool = True,
    workers: int = 1,
) -> tuple[np.ndarray, _Design]:
    """Contingency cells for every iteration, policy and category.

    Returns an int array of shape (iterations, policies, categories, 4) whose
    last axis is (a, b, c, d), together with the sampling design.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    design = _Design(cases, population, ratio)
    case_codes = _codes(cases, policies, exploited, score_table)
    pop_codes = _codes(population, policies, exploited, score_table)
    if len(policies) == 0:
        return np.zeros((iterations, 0, len(CATEGORIES), 4), dtype=np.int64), design

    if workers <= 1:
        tables = _run_chunk((design, case_codes, pop_codes, rng_seed, 0, iterations, resample_cases))
    else:
        bounds = np.linspace(0, iterations, workers + 1).astype(int)
        jobs = [
            (design, case_codes, pop_codes, rng_seed, int(lo), int(hi), resample_cases)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            tables = np.concatenate(list(pool.map(_run_chunk, jobs)))
    return tables, design


def summarize(tables: np.ndarray, confidence: float = 0.95, point: str = "mean") -> RiskResult:
    """Turn per-iteration (a, b, c, d) rows of shape (iterations, 4) into a RiskResult.

    ``point="mean"`` averages the per-iteration RRs; ``point="pooled"`` computes
    RR once from the cells summed over all iterations.
    """
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if point not in ("mean", "pooled"):
        raise ValueError(f"point must be 'mean' or 'pooled', got {point!r}")
    a, b, c, d = (tables[:, k].astype(np.float64) for k in range(4))
    ok = (a + b > 0) & (c + d > 0)
    if not ok.any():
        raise AllIterationsUndefined(f"risk reduction undefined in all {len(tables)} iterations")
    treated = a[ok] / (a[ok] + b[ok])
    untreated = c[ok] / (c[ok] + d[ok])
    rrs = treated - untreated
    lo, hi = _percentile_ci(rrs, confidence)
    if point == "mean":
        rt, ru = float(treated.mean()), float(untreated.mean())
        rr = float(rrs.mean())
    else:
        pooled = risk_reduction(ContingencyTable(*(int(x) for x in tables[ok].sum(axis=0))))
        rt, ru, rr = pooled.r_treated, pooled.r_untreated, pooled.rr
    return RiskResult(
        r_treated=rt,
        r_untreated=ru,
        rr=rr,
        ci_low=lo,
        ci_high=hi,
        iterations=int(ok.sum()),
        dropped=int((~ok).sum()),
        confidence=confidence,
    )


def bootstrap_rr(
    policy: Policy,
    cases: Sequence[VulnRecord],
    population: Sequence[VulnRecord],
    exploited,
    ratio: int = 10,
    iterations: int = 1000,
    confidence: float = 0.95,
    rng_seed: int = 0,
    score_table: ScoreTable = TABLE4_CONSISTENT,
    point: str = "mean",
    resample_cases: bool = True,
    workers: int = 1,
) -> RiskResult:
    tables, _ = bootstrap_tables(
        [policy], cases, population, exploited, ratio, iterations, rng_seed, score_table, resample_cases, workers
    )
    return summarize(tables[:, 0].sum(axis=1), confidence, point)


def pa_reduction(
    policy: Policy, records: Sequence[ScoredRecord], attacks: Iterable[AttackRecord]
) -> PaReductionResult:
    counts: dict[str, int] = {}
    for att in attacks:
        counts[att.cve_id] = counts.get(att.cve_id, 0) + att.attack_count
    foiled = total = selected = 0
    for s in records:
        hit = counts.get(s.cve_id, 0)
        chosen = decide(policy, s.record, s.epa)
        selected += chosen
        total += hit
        if chosen:
            foiled += hit
    n = len(records)
    return PaReductionResult(
        percent_v=selected / n if n else 0.0,
        pa_foiled=math.log10(foiled) if foiled > 0 else None,
        pa_total=math.log10(total) if total > 0 else None,
        n_selected=selected,
        n_records=n,
    )


@dataclass(frozen=True)
class EvaluationConfig:
    ratio: int = 10
    iterations: int = 1000
    confidence: float = 0.95
    seed: int = 0
    score_table: ScoreTable = TABLE4_CONSISTENT
    point: str = "mean"
    resample_cases: bool = True
    workers: int = 1


@dataclass(frozen=True)
class EvaluationRow:
    policy: str
    group: str  # category name or "Aggregate"
    n_vulns: int
    risk: RiskResult | None
    pa: PaReductionResult
    undefined_reason: str | None = None


@dataclass
class Evaluation:
    rows: list[EvaluationRow] = field(default_factory=list)
    n_cases: int = 0
    excluded_cases: tuple[str, ...] = ()
    config: EvaluationConfig = field(default_factory=EvaluationConfig)

    def row(self, policy: str, group: str = AGGREGATE) -> EvaluationRow:
        for r in self.rows:
            if r.policy == policy and r.group == group:
                return r
        raise KeyError((policy, group))


def split_cases(population: Sequence[VulnRecord], exploited) -> list[VulnRecord]:
    return [r for r in population if r.cve_id in exploited]


def evaluate_by_category(
    policies: Policy | Sequence[Policy],
    cases: Sequence[VulnRecord],
    population: Sequence[VulnRecord],
    exploited,
    attacks: Iterable[AttackRecord],
    config: EvaluationConfig = EvaluationConfig(),
) -> Evaluation:
    """Risk reduction, workload and pA reduction per policy, overall and per category.

    One set of bootstrap draws is shared by all policies; category rows use the
    cells of the records falling in that category, so the Aggregate row is the
    cell-wise sum of the category rows. Workload and pA reduction are computed
    over the population records in scope. Groups with no records are omitted.
    """
    if isinstance(policies, Policy):
        policies = [policies]
    attacks = list(attacks)
    tables, design = bootstrap_tables(
        policies,
        cases,
        population,
        exploited,
        config.ratio,
        config.iterations,
        config.seed,
        config.score_table,
        config.resample_cases,
        config.workers,
    )
    scored = [score_record(r, config.score_table) for r in population]
    present = [c for c in CATEGORIES if any(s.record.category == c for s in scored)]
    result = Evaluation(n_cases=design.n_cases, excluded_cases=tuple(design.excluded), config=config)
    for p, policy in enumerate(policies):
        groups: list[tuple[str, np.ndarray, list[ScoredRecord]]] = [(AGGREGATE, tables[:, p].sum(axis=1), scored)]
        for cat in present:
            k = CATEGORIES.index(cat)
            groups.append((cat.value, tables[:, p, k], [s for s in scored if s.record.category == cat]))
        for group, cells, members in groups:
            pa = pa_reduction(policy, members, attacks)
            try:
                risk, reason = summarize(cells, config.confidence, config.point), None
            except AllIterationsUndefined as exc:
                risk, reason = None, str(exc)
            result.rows.append(EvaluationRow(policy.name, group, pa.n_selected, risk, pa, reason))
    return result
