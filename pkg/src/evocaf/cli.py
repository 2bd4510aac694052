"""Command line entry point: benchmark campaigns, evolution runs, histograms.

Exit codes are 0 on success, 1 when some run failed and 2 for bad
configuration or usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import afdsl, bo, evolve
from .bench import BENCHMARKS, make_instance
from .errors import EvocafError, InitFailure
from .llm import ConfigError, HttpProvider, MockProvider

log = logging.getLogger("evocaf")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2
SUMMARY_COLUMNS = ["instance", "budget", "af", "mean_gap", "mean_evals", "std_gap", "n_runs", "n_failed"]
_BUILTIN_AFS = {"ei", "eipu", "eicool", "evolcaf"}


class UsageError(Exception):
    pass


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    return data


def _as_list(value, name: str) -> list:
    if value is None:
        raise UsageError(f"campaign config needs '{name}'")
    items = value if isinstance(value, list) else [value]
    if not items:
        raise UsageError(f"'{name}' must not be empty")
    return items


def check_af(spec: str) -> str:
    if spec.startswith("dsl:"):
        if not Path(spec[4:]).exists():
            raise UsageError(f"DSL program not found: {spec[4:]}")
        return spec
    name, _, mask = spec.partition(":")
    if name not in _BUILTIN_AFS:
        raise UsageError(f"unknown acquisition function {spec!r}")
    if mask:
        if name != "evolcaf" or not re.fullmatch(r"[01]{3}", mask) or mask == "000":
            raise UsageError(f"bad component mask in {spec!r}")
    return spec


@dataclass(frozen=True)
class CampaignConfig:
    instances: tuple
    budgets: tuple
    afs: tuple
    seeds: tuple
    output_dir: Path

    @classmethod
    def from_dict(cls, data: dict, *, afs=None, seed=None, output=None) -> "CampaignConfig":
        instances = [str(i) for i in _as_list(data.get("instances"), "instances")]
        for name in instances:
            if name not in BENCHMARKS:
                raise UsageError(f"unknown benchmark {name!r}")
        budgets = [float(b) for b in _as_list(data.get("budgets", data.get("budget")), "budgets")]
        if any(not b > 0 for b in budgets):
            raise UsageError("budgets must be positive")
        af_list = afs if afs else _as_list(data.get("afs"), "afs")
        af_list = [check_af(str(a)) for a in af_list]
        seeds = data.get("seeds", 10)
        base = 0 if seed is None else seed
        if isinstance(seeds, int):
            if seeds < 1:
                raise UsageError("seeds must be positive")
            seeds = list(range(base, base + seeds))
        else:
            seeds = [int(s) + base for s in _as_list(seeds, "seeds")]
        out = output or data.get("output_dir") or "results"
        return cls(tuple(instances), tuple(budgets), tuple(af_list), tuple(seeds), Path(out))


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text).strip("_")


def _run_one(job):
    instance, budget, af, seed, out_dir = job
    problem = bo.Problem.from_instance(make_instance(instance, seed))
    record = bo.run(problem, af, budget, seed=seed, af_name=af)
    stem = f"{instance}_B{budget:g}_{_slug(af)}_s{seed}"
    record.write(Path(out_dir) / "runs" / f"{stem}.jsonl")
    return {"instance": instance, "budget": budget, "af": af, **record.summary()}


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Group per-run summaries by (instance, budget, af)."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["instance"], r["budget"], r["af"]), []).append(r)
    out = []
    for (inst, budget, af), runs in groups.items():
        ok = [r for r in runs if not r["failed"] and r["gap"] is not None]
        gaps = np.array([r["gap"] for r in ok], dtype=float)
        evals = np.array([r["T"] for r in ok], dtype=float)
        out.append(
            {
                "instance": inst,
                "budget": budget,
                "af": af,
                "mean_gap": float(gaps.mean()) if len(gaps) else math.nan,
                "mean_evals": float(evals.mean()) if len(evals) else math.nan,
                "std_gap": float(gaps.std(ddof=1)) if len(gaps) > 1 else 0.0,
                "n_runs": len(runs),
                "n_failed": len(runs) - len(ok),
            }
        )
    return out


def pretty_table(summary: Sequence[dict]) -> str:
    """Rows per (instance, budget), one column per AF, cells as ``mean(evals)``."""
    afs = list(dict.fromkeys(r["af"] for r in summary))
    keys = list(dict.fromkeys((r["instance"], r["budget"]) for r in summary))
    cell = {(r["instance"], r["budget"], r["af"]): r for r in summary}
    header = ["instance", "budget"] + afs
    lines = [header]
    for inst, budget in keys:
        row = [inst, f"{budget:g}"]
        for af in afs:
            r = cell.get((inst, budget, af))
            if r is None or math.isnan(r["mean_gap"]):
                row.append("-")
            else:
                row.append(f"{r['mean_gap']:.4f}({r['mean_evals']:.0f})")
        lines.append(row)
    widths = [max(len(str(l[i])) for l in lines) for i in range(len(header))]
    return "\n".join("  ".join(str(v).ljust(w) for v, w in zip(l, widths)).rstrip() for l in lines)


def cmd_run(args) -> int:
    cfg = CampaignConfig.from_dict(
        load_config(args.config),
        afs=args.afs.split(",") if args.afs else None,
        seed=args.seed,
        output=args.output,
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (inst, budget, af, seed, str(cfg.output_dir))
        for inst in cfg.instances
        for budget in cfg.budgets
        for af in cfg.afs
        for seed in cfg.seeds
    ]
    n_workers = args.jobs or os.cpu_count() or 1
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(n_workers, len(jobs))) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    summary = aggregate(rows)
    with (cfg.output_dir / "summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(summary)
    if args.pretty:
        print(pretty_table(summary))
    failed = sum(r["n_failed"] for r in summary)
    if failed:
        print(f"{failed} of {len(rows)} runs failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _evolve_config(data: dict, args) -> evolve.EvolveConfig:
    kw = {}
    for key in (
        "pop_size", "generations", "crossover_prob", "mutation_prob", "time_threshold",
        "max_retries", "seed_with_goldens", "rng_seed", "jobs",
    ):
        if key in data:
            kw[key] = data[key]
    if "fitness_instances" in data:
        cases = []
        for item in _as_list(data["fitness_instances"], "fitness_instances"):
            seeds = item.get("seeds", 10)
            seeds = range(seeds) if isinstance(seeds, int) else seeds
            if item["instance"] not in BENCHMARKS:
                raise UsageError(f"unknown benchmark {item['instance']!r}")
            cases += [evolve.FitnessCase(item["instance"], int(s), float(item.get("budget", 30))) for s in seeds]
        kw["fitness_instances"] = tuple(cases)
    if args.generations is not None:
        kw["generations"] = args.generations
    if args.pop is not None:
        kw["pop_size"] = args.pop
    if args.seed is not None:
        kw["rng_seed"] = args.seed
    if args.jobs is not None:
        kw["jobs"] = args.jobs
    try:
        return evolve.EvolveConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid evolve config: {exc}") from exc


def make_provider(kind: str, script: Optional[str]):
    if kind == "mock":
        if not script:
            raise UsageError("--provider mock needs --script")
        if not Path(script).exists():
            raise UsageError(f"script not found: {script}")
        return MockProvider.from_file(script)
    try:
        return HttpProvider()
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def cmd_evolve(args) -> int:
    cfg = _evolve_config(load_config(args.config), args)
    provider = make_provider(args.provider, args.script)
    out = Path(args.output or "evolve_run")
    try:
        best, _, trace = evolve.evolve(cfg, provider, out)
    except InitFailure as exc:
        print(f"evolution failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"best fitness {best.fitness:.6g} after {len(trace)} generations; results in {out}")
    return EXIT_OK


def histogram(paths: Sequence[str], bins: int, lo: float, hi: float) -> list[tuple[float, float, int]]:
    z = []
    for p in paths:
        if not Path(p).exists():
            raise UsageError(f"run file not found: {p}")
        z += [e.z for e in bo.read_jsonl(p)]
    if not z:
        raise UsageError("no evaluations in input")
    counts, edges = np.histogram(np.asarray(z), bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def cmd_hist(args) -> int:
    if args.bins < 1:
        raise UsageError("--bins must be at least 1")
    rows = histogram(args.files, args.bins, args.range[0], args.range[1])
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count"])
        w.writerows(rows)
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    p = Path(args.path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    text = p.read_text()
    code = "\n".join(l for l in text.splitlines() if not l.startswith("##"))
    try:
        prog = afdsl.parse(code)
    except afdsl.DslError as exc:
        print(f"invalid: {exc.kind}: {exc}")
        return EXIT_PARTIAL
    report = afdsl.validate(prog)
    if not report:
        print(f"invalid: {report.error_type}: {report.reason}")
        return EXIT_PARTIAL
    kind = "pointwise" if prog.pointwise else "batch-coupled"
    print(f"ok: {prog.node_count} nodes, {kind}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evocaf", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a benchmark campaign")
    r.add_argument("config")
    r.add_argument("--afs", help="comma separated AFs, overrides the config")
    r.add_argument("--seed", type=int, help="offset added to every seed")
    r.add_argument("--jobs", type=int, help="worker processes (default: core count)")
    r.add_argument("--output", help="output directory")
    r.add_argument("--pretty", action="store_true", help="print a mean(evals) table")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evolve", help="evolve acquisition programs with an LLM")
    e.add_argument("config", nargs="?")
    e.add_argument("--provider", choices=("http", "mock"), default="http")
    e.add_argument("--script", help="JSON response script for the mock provider")
    e.add_argument("--generations", type=int)
    e.add_argument("--pop", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--jobs", type=int)
    e.add_argument("--output", help="run directory")
    e.set_defaults(func=cmd_evolve)

    h = sub.add_parser("hist", help="histogram of evaluation costs")
    h.add_argument("files", nargs="+")
    h.add_argument("--bins", type=int, default=10)
    h.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    h.add_argument("--output")
    h.set_defaults(func=cmd_hist)

    v = sub.add_parser("validate-program", help="parse and probe a DSL program")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvocafError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
