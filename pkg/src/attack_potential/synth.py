"""Synthetic vulnerability populations with known exploitation structure.

Each vulnerability is assigned an (impact, complexity) cell, a software
category and a disclosure year. Exploitation is a Bernoulli draw with a
per-cell probability; attack counts of exploited vulnerabilities are heavy
tailed with a per-cell median.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Mapping

import numpy as np

from .cvss import (
    IMPACT_ORDER,
    AccessComplexity,
    AccessVector,
    Authentication,
    CvssVector,
    ImpactThresholds,
    DEFAULT_THRESHOLDS,
    Level,
    ScoreTable,
    base_score,
    format_vector,
    impact_level,
)
from .ingest import AttackRecord, Category, VulnRecord, classify_software, default_category_rules
from .policy import Policy, decide
from .potential import estimated_pa

Cell = tuple[Level, Level]  # (impact, complexity)
CELLS: tuple[Cell, ...] = tuple(product(Level, Level))


class InvalidConfig(ValueError):
    pass


# Share of NVD vulnerabilities per (impact, complexity) cell as tabulated for NVD.
NVD_CELL_MIX: dict[Cell, float] = {
    (Level.HIGH, Level.HIGH): 0.92,
    (Level.MEDIUM, Level.HIGH): 1.89,
    (Level.LOW, Level.HIGH): 1.89,
    (Level.HIGH, Level.MEDIUM): 7.65,
    (Level.MEDIUM, Level.MEDIUM): 7.69,
    (Level.LOW, Level.MEDIUM): 14.83,
    (Level.HIGH, Level.LOW): 11.80,
    (Level.MEDIUM, Level.LOW): 30.43,
    (Level.LOW, Level.LOW): 22.90,
}

PRODUCT_NAMES = {
    Category.IE: ("internet_explorer",),
    Category.WINDOWS: ("windows_xp", "windows_7", "windows_server_2008"),
    Category.PLUGIN: ("flash_player", "jre", "acrobat_reader", "quicktime"),
    Category.PROD: ("office", "firefox", "apache_http_server", "php", "mysql"),
}


@dataclass(frozen=True)
class SynthConfig:
    cell_exploit_prob: Mapping[Cell, float]
    cell_volume_scale: Mapping[Cell, float]
    population_size: int
    category_mix: Mapping[Category, float] = field(
        default_factory=lambda: {Category.IE: 1.0, Category.PLUGIN: 1.0, Category.PROD: 1.0, Category.WINDOWS: 1.0}
    )
    year_range: tuple[int, int] = (2005, 2012)
    seed: int = 0
    cell_mix: Mapping[Cell, float] = field(default_factory=lambda: dict(NVD_CELL_MIX))
    volume_dist: str = "lognormal"  # or "pareto"
    volume_sigma: float = 1.0  # log-normal sigma, natural-log units
    tail_index: float = 1.5  # pareto shape

    def validate(self) -> None:
        if self.population_size < 0:
            raise InvalidConfig("population_size must be >= 0")
        for cell in CELLS:
            p = self.cell_exploit_prob.get(cell, 0.0)
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"exploit probability {p} for {cell} outside [0, 1]")
            if p > 0 and not self.cell_volume_scale.get(cell, 0) > 0:
                raise InvalidConfig(f"cell {cell} can be exploited but has no positive volume scale")
        for label, weights in (("category_mix", self.category_mix), ("cell_mix", self.cell_mix)):
            vals = list(weights.values())
            if any(w < 0 for w in vals) or not any(w > 0 for w in vals):
                raise InvalidConfig(f"{label} weights must be non-negative and not all zero")
        lo, hi = self.year_range
        if lo > hi or lo < 1999:
            raise InvalidConfig(f"bad year_range {self.year_range}")
        if self.volume_dist not in ("lognormal", "pareto"):
            raise InvalidConfig(f"unknown volume_dist {self.volume_dist!r}")
        if self.volume_sigma <= 0 or self.tail_index <= 0:
            raise InvalidConfig("volume_sigma and tail_index must be positive")


def realize_vector(
    impact: Level, complexity: Level, thresholds: ImpactThresholds = DEFAULT_THRESHOLDS
) -> CvssVector:
    """Network/no-auth vector with the smallest C/I/A triple (N < P < C) reaching ``impact``."""
    ac = {Level.HIGH: AccessComplexity.HIGH, Level.MEDIUM: AccessComplexity.MEDIUM, Level.LOW: AccessComplexity.LOW}
    for c, i, a in product(IMPACT_ORDER, repeat=3):
        v = CvssVector(AccessVector.NETWORK, ac[complexity], Authentication.NONE, c, i, a)
        if impact_level(v, thresholds) == impact:
            return v
    raise InvalidConfig(f"no vector reaches impact level {impact.name} under {thresholds}")


@dataclass
class SynthOutput:
    population: list[VulnRecord]
    exploited: set[str]
    attacks: list[AttackRecord]
    ground_truth: dict


def _draw_volumes(rng: np.random.Generator, config: SynthConfig, scale: float, n: int) -> np.ndarray:
    if config.volume_dist == "lognormal":
        raw = rng.lognormal(mean=math.log(scale), sigma=config.volume_sigma, size=n)
    else:
        # Pareto with median equal to scale
        x_m = scale / 2 ** (1 / config.tail_index)
        raw = x_m * (1 + rng.pareto(config.tail_index, size=n))
    return np.maximum(1, np.rint(raw)).astype(np.int64)


def generate(config: SynthConfig, thresholds: ImpactThresholds = DEFAULT_THRESHOLDS) -> SynthOutput:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.population_size

    cells = list(CELLS)
    cell_w = np.array([config.cell_mix.get(c, 0.0) for c in cells], dtype=float)
    cats = list(config.category_mix)
    cat_w = np.array([config.category_mix[c] for c in cats], dtype=float)
    lo, hi = config.year_range

    cell_idx = rng.choice(len(cells), size=n, p=cell_w / cell_w.sum())
    cat_idx = rng.choice(len(cats), size=n, p=cat_w / cat_w.sum())
    years = rng.integers(lo, hi + 1, size=n)
    product_pick = rng.integers(0, 1 << 30, size=n)
    exploit_u = rng.random(size=n)

    vectors = {c: realize_vector(*c, thresholds) for c in cells}
    rules = default_category_rules()
    population: list[VulnRecord] = []
    exploited_mask = np.zeros(n, dtype=bool)
    for k in range(n):
        cell = cells[cell_idx[k]]
        cat = cats[cat_idx[k]]
        names = PRODUCT_NAMES[cat]
        software = (names[product_pick[k] % len(names)],)
        vector = vectors[cell]
        population.append(
            VulnRecord(
                cve_id=f"CVE-{years[k]}-{100000 + k}",
                vector=vector,
                cvss_score=base_score(vector),
                software_names=software,
                year=int(years[k]),
                category=classify_software(software, rules),
                score_source="computed",
            )
        )
        exploited_mask[k] = exploit_u[k] < config.cell_exploit_prob.get(cell, 0.0)

    counts = np.zeros(n, dtype=np.int64)
    truth_cells = {}
    for ci, cell in enumerate(cells):
        members = np.flatnonzero((cell_idx == ci) & exploited_mask)
        if len(members):
            counts[members] = _draw_volumes(rng, config, config.cell_volume_scale[cell], len(members))
        in_cell = int((cell_idx == ci).sum())
        logs = np.log10(counts[members]) if len(members) else np.zeros(0)
        truth_cells[f"{cell[0].name}/{cell[1].name}"] = {
            "impact": cell[0].name,
            "complexity": cell[1].name,
            "n": in_cell,
            "n_exploited": int(len(members)),
            "exploit_prob": float(config.cell_exploit_prob.get(cell, 0.0)),
            "volume_scale": float(config.cell_volume_scale.get(cell, 0.0)),
            "mean_log10_attacks": float(logs.mean()) if len(logs) else None,
        }

    exploited = {population[k].cve_id for k in np.flatnonzero(exploited_mask)}
    attacks = [AttackRecord(population[k].cve_id, int(counts[k])) for k in np.flatnonzero(exploited_mask)]
    truth = {
        "seed": config.seed,
        "population_size": n,
        "n_exploited": len(exploited),
        "volume_dist": config.volume_dist,
        "cells": truth_cells,
    }
    return SynthOutput(population, exploited, attacks, truth)


def _uniform(value: float) -> dict[Cell, float]:
    return {c: value for c in CELLS}


def separation_config(
    policy: Policy, table: ScoreTable, population_size: int = 5000, seed: int = 0, scale: float = 1e4
) -> SynthConfig:
    """Config where a vulnerability is exploited exactly when ``policy`` selects it.

    Only valid for policies that depend on the (impact, complexity) cell alone.
    """
    probs = {}
    for cell in CELLS:
        v = realize_vector(*cell)
        rec = VulnRecord("CVE-2000-0000", v, base_score(v), ("x",), 2000, Category.PROD)
        probs[cell] = 1.0 if decide(policy, rec, estimated_pa(cell[0], cell[1], table)) else 0.0
    return SynthConfig(probs, _uniform(scale), population_size, seed=seed)


def independent_config(rate: float = 0.1, population_size: int = 15000, seed: int = 0) -> SynthConfig:
    """Same exploit probability in every cell: exploitation carries no signal."""
    return SynthConfig(_uniform(rate), _uniform(1e3), population_size, seed=seed)


def nvd_mix_config(population_size: int = 15000, seed: int = 0) -> SynthConfig:
    """Exploitation concentrated on high-impact, low/medium-complexity cells."""
    probs = {
        (Level.HIGH, Level.LOW): 0.30,
        (Level.HIGH, Level.MEDIUM): 0.35,
        (Level.HIGH, Level.HIGH): 0.05,
        (Level.MEDIUM, Level.LOW): 0.06,
        (Level.MEDIUM, Level.MEDIUM): 0.03,
        (Level.MEDIUM, Level.HIGH): 0.02,
        (Level.LOW, Level.LOW): 0.05,
        (Level.LOW, Level.MEDIUM): 0.01,
        (Level.LOW, Level.HIGH): 0.01,
    }
    scale = {
        (Level.HIGH, Level.LOW): 1e5,
        (Level.HIGH, Level.MEDIUM): 2e4,
        (Level.HIGH, Level.HIGH): 1e2,
        (Level.MEDIUM, Level.LOW): 3e3,
        (Level.MEDIUM, Level.MEDIUM): 3e2,
        (Level.MEDIUM, Level.HIGH): 30.0,
        (Level.LOW, Level.LOW): 3e2,
        (Level.LOW, Level.MEDIUM): 10.0,
        (Level.LOW, Level.HIGH): 10.0,
    }
    return SynthConfig(probs, scale, population_size, seed=seed)


def _cell_map_to_json(m: Mapping[Cell, float]) -> dict[str, float]:
    return {f"{i.name}/{c.name}": float(v) for (i, c), v in m.items()}


def _cell_map_from_json(m: Mapping[str, float]) -> dict[Cell, float]:
    out = {}
    for key, v in m.items():
        try:
            imp, comp = key.split("/")
            out[(Level.parse(imp), Level.parse(comp))] = float(v)
        except ValueError:
            raise InvalidConfig(f"bad cell key {key!r}; expected 'IMPACT/COMPLEXITY'") from None
    return out


def config_to_json(config: SynthConfig) -> dict:
    return {
        "cell_exploit_prob": _cell_map_to_json(config.cell_exploit_prob),
        "cell_volume_scale": _cell_map_to_json(config.cell_volume_scale),
        "population_size": config.population_size,
        "category_mix": {c.value: float(w) for c, w in config.category_mix.items()},
        "year_range": list(config.year_range),
        "seed": config.seed,
        "cell_mix": _cell_map_to_json(config.cell_mix),
        "volume_dist": config.volume_dist,
        "volume_sigma": config.volume_sigma,
        "tail_index": config.tail_index,
    }


def config_from_json(data: Mapping) -> SynthConfig:
    try:
        kwargs = dict(
            cell_exploit_prob=_cell_map_from_json(data["cell_exploit_prob"]),
            cell_volume_scale=_cell_map_from_json(data["cell_volume_scale"]),
            population_size=int(data["population_size"]),
        )
    except KeyError as exc:
        raise InvalidConfig(f"missing key {exc}") from None
    if "category_mix" in data:
        kwargs["category_mix"] = {Category(k.upper()): float(v) for k, v in data["category_mix"].items()}
    if "cell_mix" in data:
        kwargs["cell_mix"] = _cell_map_from_json(data["cell_mix"])
    if "year_range" in data:
        lo, hi = data["year_range"]
        kwargs["year_range"] = (int(lo), int(hi))
    for key in ("seed",):
        if key in data:
            kwargs[key] = int(data[key])
    for key in ("volume_sigma", "tail_index"):
        if key in data:
            kwargs[key] = float(data[key])
    if "volume_dist" in data:
        kwargs["volume_dist"] = str(data["volume_dist"])
    config = SynthConfig(**kwargs)
    config.validate()
    return config


def write_outputs(out: SynthOutput, directory: str | Path) -> dict[str, Path]:
    """Write the population, attacks, exploited set and ground truth in the ingest formats."""
    from .io import atomic_write_text

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    feed = []
    for r in out.population:
        entry: dict = {"id": r.cve_id, "published": f"{r.year}-06-01", "cvss2_vector": format_vector(r.vector)}
        if r.score_source == "feed":
            entry["cvss2_score"] = r.cvss_score
        entry["products"] = list(r.software_names)
        feed.append(entry)
    paths = {
        "nvd": directory / "nvd.json",
        "attacks": directory / "attacks.csv",
        "exploited": directory / "exploited.txt",
        "ground_truth": directory / "ground_truth.json",
    }
    atomic_write_text(paths["nvd"], json.dumps(feed, indent=1) + "\n")
    atomic_write_text(
        paths["attacks"], "cve_id,attack_count\n" + "".join(f"{a.cve_id},{a.attack_count}\n" for a in out.attacks)
    )
    atomic_write_text(paths["exploited"], "".join(f"{c}\n" for c in sorted(out.exploited)))
    atomic_write_text(paths["ground_truth"], json.dumps(out.ground_truth, indent=2, sort_keys=True) + "\n")
    return paths
