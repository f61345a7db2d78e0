"""Command-line front end: score, triage, evaluate, report, synth."""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import TOOL_NAME, __version__
from .cvss import DEFAULT_PRESET, PRESETS, get_preset
from .evaluation import AllIterationsUndefined, EvaluationConfig, evaluate_by_category, split_cases
from .ingest import IngestError, attack_counts, default_category_rules, load_attacks, load_category_rules
from .ingest import load_exploited_set, load_nvd
from .io import atomic_write_text, csv_text, write_csv, write_json
from .policy import BUILTIN_POLICIES, Policy, decide, load_policies, resolve_policy
from .potential import ZeroAttacks, confusion_matrix, match_flag, observed_pa, score_records
from .report import (
    CROSSTAB_HEADER,
    DENSITY_HEADER,
    PA_HEADER,
    QUANTILE_HEADER,
    RR_HEADER,
    crosstab,
    density_svg,
    evaluation_json,
    pa_density,
    pa_rows,
    rr_rows,
)
from .synth import (
    InvalidConfig,
    config_from_json,
    generate,
    independent_config,
    nvd_mix_config,
    separation_config,
    write_outputs,
)

log = logging.getLogger(TOOL_NAME)

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

SCORED_HEADER = (
    "cve_id",
    "category",
    "impact_level",
    "complexity_level",
    "epa_value",
    "epa_level",
    "epa_exact",
)
PA_COLUMNS = ("attack_count", "pa_value", "pa_level", "pa_exact", "match")


class InvariantViolation(AssertionError):
    pass


def _meta(args: argparse.Namespace, **extra: Any) -> dict[str, Any]:
    meta = {"tool": f"{TOOL_NAME} {__version__}", "command": args.command, "preset": args.preset, "seed": args.seed}
    meta.update(extra)
    return meta


def _rules(args: argparse.Namespace):
    return load_category_rules(args.rules) if args.rules else default_category_rules()


def _policies(args: argparse.Namespace, default: Sequence[str]) -> list[Policy]:
    custom = load_policies(args.policies_file) if args.policies_file else []
    names = args.policy or ([p.name for p in custom] if custom else list(default))
    return [resolve_policy(name, custom) for name in names]


def _emit(args: argparse.Namespace, stem: str, header, rows, extra_meta: dict | None = None) -> Path:
    out_dir = Path(args.out)
    meta = _meta(args, **(extra_meta or {}))
    if args.format == "json":
        payload = {"meta": meta, "columns": list(header), "rows": [dict(zip(header, r)) for r in rows]}
        return write_json(out_dir / f"{stem}.json", payload)
    return write_csv(out_dir / f"{stem}.csv", header, rows, meta)


def cmd_score(args: argparse.Namespace) -> int:
    table = get_preset(args.preset)
    feed = load_nvd(args.nvd, _rules(args))
    counts = attack_counts(load_attacks(args.attacks)) if args.attacks else None
    scored = score_records(feed.records, table)

    header = SCORED_HEADER + (PA_COLUMNS if counts is not None else ())
    rows = []
    for s in scored:
        row: list[Any] = [
            s.cve_id,
            s.record.category.value,
            s.impact.name,
            s.complexity.name,
            s.epa.display,
            s.epa.level.name,
            repr(s.epa.value),
        ]
        if counts is not None:
            n = counts.get(s.cve_id, 0)
            try:
                pa = observed_pa(n)
            except ZeroAttacks:
                row += [n, "", "", "", ""]
            else:
                row += [n, pa.display, pa.level.name, repr(pa.value), match_flag(pa.level, s.epa.level)]
        rows.append(row)
    path = _emit(args, "scored", header, rows, {"skipped_entries": feed.skip_count})
    print(f"wrote {path} ({len(rows)} records, {feed.skip_count} skipped)")
    return EXIT_OK


def triage_order(scored):
    """E[pA] descending, then CVSS score descending, then CVE id ascending."""
    return sorted(scored, key=lambda s: (-s.epa.value, -s.record.cvss_score, s.cve_id))


def cmd_triage(args: argparse.Namespace) -> int:
    table = get_preset(args.preset)
    feed = load_nvd(args.nvd, _rules(args))
    policies = _policies(args, default=()) if (args.policy or args.policies_file) else []
    ranked = triage_order(score_records(feed.records, table))
    header = (
        "rank",
        "cve_id",
        "category",
        "cvss_score",
        "score_source",
        "impact_level",
        "complexity_level",
        "epa_value",
        "epa_exact",
    ) + tuple(f"patch:{p.name}" for p in policies)
    rows = []
    for rank, s in enumerate(ranked, 1):
        row = [
            rank,
            s.cve_id,
            s.record.category.value,
            f"{s.record.cvss_score:.1f}",
            s.record.score_source,
            s.impact.name,
            s.complexity.name,
            s.epa.display,
            repr(s.epa.value),
        ]
        row += ["Patch" if decide(p, s.record, s.epa) else "NotPatch" for p in policies]
        rows.append(row)
    path = _emit(args, "triage", header, rows)
    print(f"wrote {path} ({len(rows)} records)")
    return EXIT_OK


def _eval_config(args: argparse.Namespace) -> EvaluationConfig:
    file_cfg: dict[str, Any] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        unknown = set(file_cfg) - {"ratio", "iterations", "confidence", "seed", "preset", "point", "policies"}
        if unknown:
            raise ValueError(f"{args.config}: unknown keys {sorted(unknown)}")

    def pick(name: str, default: Any) -> Any:
        value = getattr(args, name, None)
        if value is not None:
            return value
        return file_cfg.get(name, default)

    args.preset = pick("preset", DEFAULT_PRESET)
    if args.seed is None and "seed" in file_cfg:
        args.seed = int(file_cfg["seed"])
    if not args.policy and "policies" in file_cfg:
        args.policy = list(file_cfg["policies"])
    config = EvaluationConfig(
        ratio=int(pick("ratio", 10)),
        iterations=int(pick("iterations", 1000)),
        confidence=float(pick("confidence", 0.95)),
        seed=int(args.seed),
        score_table=get_preset(args.preset),
        point=str(pick("point", "mean")),
        resample_cases=not args.fixed_cases,
        workers=int(args.workers),
    )
    if config.ratio < 1 or config.iterations < 1 or not 0 < config.confidence < 1:
        raise ValueError("need ratio >= 1, iterations >= 1 and 0 < confidence < 1")
    return config


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _eval_config(args)
    population = load_nvd(args.nvd, _rules(args)).records
    exploited = load_exploited_set(args.exploited)
    attacks = load_attacks(args.attacks) if args.attacks else []
    policies = _policies(args, default=BUILTIN_POLICIES)
    cases = split_cases(population, exploited)
    if not cases:
        raise AllIterationsUndefined("no exploited vulnerability is present in the population")

    log.info("evaluating %d policies, seed %d", len(policies), config.seed)
    result = evaluate_by_category(policies, cases, population, exploited, attacks, config)
    if result.n_cases == 0:
        raise AllIterationsUndefined("every case was excluded for lack of matching controls")
    _check_evaluation(result)

    extra = {
        "ratio": config.ratio,
        "iterations": config.iterations,
        "confidence": config.confidence,
        "point": config.point,
        "cases": result.n_cases,
        "excluded_cases": len(result.excluded_cases),
    }
    out = Path(args.out)
    if args.format == "json":
        path = write_json(out / "evaluation.json", {"meta": _meta(args, **extra), **evaluation_json(result)})
        print(f"wrote {path}")
    else:
        p1 = write_csv(out / "risk_reduction.csv", RR_HEADER, rr_rows(result), _meta(args, **extra))
        p2 = write_csv(out / "pa_reduction.csv", PA_HEADER, pa_rows(result), _meta(args, **extra))
        print(f"wrote {p1} and {p2}")
    return EXIT_OK


def _check_evaluation(result) -> None:
    for row in result.rows:
        if row.risk is not None and not -1 <= row.risk.rr <= 1:
            raise InvariantViolation(f"RR out of [-1, 1] for {row.policy}/{row.group}: {row.risk.rr}")
        if row.pa.pa_foiled is not None and row.pa.pa_total is not None and row.pa.pa_foiled > row.pa.pa_total + 1e-12:
            raise InvariantViolation(f"pA foiled exceeds total for {row.policy}/{row.group}")


def cmd_report(args: argparse.Namespace) -> int:
    table = get_preset(args.preset)
    scored = score_records(load_nvd(args.nvd, _rules(args)).records, table)
    exploited = load_exploited_set(args.exploited) if args.exploited else set()
    attacks = load_attacks(args.attacks) if args.attacks else []
    out = Path(args.out)
    meta = _meta(args)

    ct = crosstab(scored, exploited)
    density = pa_density(attacks, args.bin_width)
    counts = attack_counts(attacks)
    pairs = [
        (observed_pa(counts[s.cve_id]).level, s.epa.level) for s in scored if counts.get(s.cve_id, 0) >= 1
    ]
    cm = confusion_matrix(pairs)
    if ct.population is not None and abs(sum(ct.population.values()) - 1) > 1e-9:
        raise InvariantViolation("population cross-tab does not sum to 1")
    if density.histogram.n and abs(density.histogram.integral() - 1) > 1e-9:
        raise InvariantViolation("pA histogram does not integrate to 1")

    quantiles = density.quantiles(sorted(set(args.quantile or []) | {0.5, 0.75}))
    q_rows = [[f"{p:g}", "" if v is None else f"{v:.6f}"] for p, v in quantiles.items()]
    cm_rows = cm.rows()
    if args.format == "json":
        write_json(
            out / "report.json",
            {
                "meta": meta,
                "crosstab": [dict(zip(CROSSTAB_HEADER, r)) for r in ct.rows()],
                "density": [dict(zip(DENSITY_HEADER, r)) for r in density.histogram.rows()],
                "quantiles": [dict(zip(QUANTILE_HEADER, r)) for r in q_rows],
                "confusion": cm_rows,
                "under_estimation_rate": cm.under_estimation_rate,
            },
        )
    else:
        write_csv(out / "crosstab.csv", CROSSTAB_HEADER, ct.rows(), meta)
        write_csv(out / "density.csv", DENSITY_HEADER, density.histogram.rows(), meta)
        write_csv(out / "quantiles.csv", QUANTILE_HEADER, q_rows, meta)
        cm_meta = dict(meta, under_estimation_rate=f"{cm.under_estimation_rate:.6f}")
        atomic_write_text(out / "confusion.csv", csv_text(cm_rows[0], cm_rows[1:], cm_meta))
    if args.svg:
        atomic_write_text(out / "density.svg", density_svg(density))
    print(f"wrote report to {out}")
    return EXIT_OK


SYNTH_PROFILES = ("nvd-mix", "independent", "separation")


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = config_from_json(json.load(fh))
        overrides = {}
        if args.size is not None:
            overrides["population_size"] = args.size
        if args.seed_given:
            overrides["seed"] = args.seed
        config = replace(config, **overrides)
    else:
        size = args.size if args.size is not None else 15000
        if args.profile == "nvd-mix":
            config = nvd_mix_config(size, args.seed)
        elif args.profile == "independent":
            config = independent_config(0.1, size, args.seed)
        else:
            config = separation_config(BUILTIN_POLICIES["EpaHigh"], get_preset(args.preset), size, args.seed)
    result = generate(config)
    paths = write_outputs(result, args.out)
    print(f"wrote {len(result.population)} vulnerabilities ({len(result.exploited)} exploited) to {args.out}")
    for key, path in paths.items():
        log.debug("%s: %s", key, path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description=__doc__)
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(PRESETS), default=None, help=f"score table (default {DEFAULT_PRESET})")
    common.add_argument("--seed", type=int, default=None, help="RNG seed; generated and printed when omitted")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--rules", help="category rules file (pattern<TAB>CATEGORY)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def policy_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--policy", action="append", help=f"policy name, repeatable; built-ins: {', '.join(BUILTIN_POLICIES)}")
        p.add_argument("--policies-file", help="custom policies, one 'name = expression' per line")

    p = sub.add_parser("score", parents=[common], help="compute E[pA] (and pA when attacks are given)")
    p.add_argument("--nvd", required=True)
    p.add_argument("--attacks")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("triage", parents=[common], help="rank vulnerabilities by E[pA]")
    p.add_argument("--nvd", required=True)
    policy_flags(p)
    p.set_defaults(func=cmd_triage)

    p = sub.add_parser("evaluate", parents=[common], help="bootstrapped case-control policy evaluation")
    p.add_argument("--nvd", required=True)
    p.add_argument("--exploited", required=True)
    p.add_argument("--attacks")
    policy_flags(p)
    p.add_argument("--ratio", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--point", choices=("mean", "pooled"))
    p.add_argument("--config", help="JSON file with evaluation defaults; flags win")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--fixed-cases", action="store_true", help="keep the case set fixed instead of resampling it")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="cross-tabs, pA density and confusion matrix")
    p.add_argument("--nvd", required=True)
    p.add_argument("--exploited")
    p.add_argument("--attacks")
    p.add_argument("--bin-width", type=float, default=0.25)
    p.add_argument("--quantile", type=float, action="append")
    p.add_argument("--svg", action="store_true", help="also write density.svg")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic population")
    p.add_argument("--profile", choices=SYNTH_PROFILES, default="nvd-mix")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    args.seed_given = args.seed is not None
    if args.command != "evaluate":
        args.preset = args.preset or DEFAULT_PRESET
        if args.seed is None:
            args.seed = secrets.randbelow(2**31)
            print(f"seed: {args.seed}", file=sys.stderr)
    elif args.seed is None and not args.config:
        args.seed = secrets.randbelow(2**31)
        print(f"seed: {args.seed}", file=sys.stderr)
    try:
        if args.command == "evaluate" and args.seed is None:
            # a config file may still supply it
            _seed_from_config(args)
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, IngestError, InvalidConfig, AllIterationsUndefined, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def _seed_from_config(args: argparse.Namespace) -> None:
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "seed" in data:
        args.seed = int(data["seed"])
    else:
        args.seed = secrets.randbelow(2**31)
        print(f"seed: {args.seed}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
