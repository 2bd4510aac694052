"""Steady-state evolution of acquisition programs driven by an LLM.

Each generation picks two parents, asks the LLM for a crossover child
(and, with some probability, a mutation of that child), scores the child
by running the budgeted BO loop on a fixed set of benchmark cases, adds
it to the population and deletes the worst members.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from . import afdsl, bo
from .bench import make_instance
from .errors import InitFailure, InvalidRequest
from .llm import DEFAULT_TEMPERATURE, ExtractionError, LlmError, LlmRequest, extract_program

log = logging.getLogger(__name__)

SENTINEL_FITNESS = math.inf

Kind = Literal["init", "crossover", "mutation"]


@dataclass(frozen=True)
class FitnessCase:
    instance: str
    seed: int
    budget: float


def default_cases(
    names: Sequence[str] = ("ackley2", "rastrigin2"),
    seeds: Sequence[int] = tuple(range(10)),
    budget: float = 30.0,
) -> tuple[FitnessCase, ...]:
    return tuple(FitnessCase(n, s, budget) for n in names for s in seeds)


@dataclass(frozen=True)
class EvolveConfig:
    pop_size: int = 10
    generations: int = 20
    parents_per_offspring: int = 2
    offspring_per_generation: int = 1
    crossover_prob: float = 1.0
    mutation_prob: float = 0.5
    time_threshold: float = 60.0
    fitness_instances: tuple[FitnessCase, ...] = field(default_factory=default_cases)
    rng_seed: int = 0
    max_retries: int = 3
    init_attempts_per_slot: int = 4
    seed_with_goldens: bool = False
    jobs: int = 1
    run_options: bo.RunOptions = field(default_factory=bo.RunOptions)

    def __post_init__(self):
        for p in (self.crossover_prob, self.mutation_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.pop_size < self.parents_per_offspring:
            raise ValueError("pop_size must be at least parents_per_offspring")
        if self.time_threshold <= 0:
            raise ValueError("time_threshold must be positive")

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["fitness_instances"] = [dataclasses.asdict(c) for c in self.fitness_instances]
        d["run_options"] = repr(self.run_options)
        return d


@dataclass
class Individual:
    program: afdsl.AfProgram
    fitness: float = SENTINEL_FITNESS
    eval_wall_time: float = 0.0
    provenance: str = "init"
    gaps: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def key(self) -> str:
        return program_key(self.program)

    def to_json(self) -> dict:
        return {
            "key": self.key,
            "description": self.program.description,
            "source": self.program.source,
            "fitness": self.fitness if math.isfinite(self.fitness) else None,
            "provenance": self.provenance,
            "eval_wall_time": self.eval_wall_time,
            "gaps": self.gaps,
            "error": self.error,
        }


@dataclass
class Population:
    individuals: list = field(default_factory=list)
    generation: int = 0
    best_history: list = field(default_factory=list)
    mean_history: list = field(default_factory=list)

    def sort(self):
        self.individuals.sort(key=lambda ind: ind.fitness)

    @property
    def best(self) -> Individual:
        return min(self.individuals, key=lambda ind: ind.fitness)

    def stats(self) -> tuple[float, float]:
        fits = [i.fitness for i in self.individuals]
        finite = [f for f in fits if math.isfinite(f)]
        return min(fits), (float(np.mean(finite)) if finite else math.inf)


def program_key(program: afdsl.AfProgram) -> str:
    return hashlib.sha256(program.canonical_source().encode()).hexdigest()[:16]


# ------------------------------------------------------------------ prompts


def _prompt_file(name: str) -> str:
    return resources.files("evocaf").joinpath(f"prompts/{name}.txt").read_text().strip()


def system_prompt() -> str:
    return _prompt_file("system")


def _format_parent(i: int, ind: Individual) -> str:
    desc = ind.program.description or "(no description)"
    return f"No. {i} description: {desc}\nCode:\n```\n{ind.program.source.strip()}\n```"


def build_prompt(kind: Kind, parents: Sequence[Individual] = ()) -> str:
    """Assemble the four-part user prompt for one LLM operation."""
    if kind not in ("init", "crossover", "mutation"):
        raise InvalidRequest(f"unknown prompt kind {kind!r}")
    if kind == "crossover" and len(parents) < 2:
        raise InvalidRequest("crossover needs at least two parents")
    if kind == "mutation" and len(parents) < 1:
        raise InvalidRequest("mutation needs a parent")
    parts = [
        _prompt_file("task"),
        _prompt_file("code").replace("{grammar}", afdsl.GRAMMAR.strip()),
        _prompt_file("inputs"),
        _prompt_file("hints"),
    ]
    instruction = _prompt_file(kind)
    if kind != "init":
        body = "\n\n".join(_format_parent(i + 1, p) for i, p in enumerate(parents))
        instruction = instruction.replace("{n}", str(len(parents))).replace("{parents}", body)
    parts.append(instruction)
    parts.append(
        "First describe the idea of your acquisition function in one paragraph, "
        "then give the program in a single fenced code block."
    )
    return "\n\n".join(parts)


# ------------------------------------------------------------------ fitness


def _run_case(program, case: FitnessCase, options: bo.RunOptions, time_limit: float):
    inst = make_instance(case.instance, case.seed)
    problem = bo.Problem.from_instance(inst)
    opts = dataclasses.replace(options, time_limit=time_limit)
    rec = bo.run(problem, program, case.budget, seed=case.seed, options=opts, af_name="dsl")
    return rec.optimal_gap, rec.failed, rec.error


def evaluate_fitness(program: afdsl.AfProgram, config: EvolveConfig) -> tuple[float, list, Optional[str]]:
    """Mean optimal gap over the fitness cases, or the sentinel on any failure.

    Returns ``(fitness, per-case gaps, error)``.
    """
    gaps = []
    cases = config.fitness_instances
    if config.jobs > 1:
        with ProcessPoolExecutor(config.jobs) as pool:
            results = list(
                pool.map(
                    _run_case,
                    [program] * len(cases),
                    cases,
                    [config.run_options] * len(cases),
                    [config.time_threshold] * len(cases),
                )
            )
    else:
        results = []
        for case in cases:
            res = _run_case(program, case, config.run_options, config.time_threshold)
            results.append(res)
            if res[1]:
                break
    for (gap, failed, error), case in zip(results, cases):
        if failed or gap is None or not math.isfinite(gap):
            return SENTINEL_FITNESS, gaps, f"{case.instance}/seed {case.seed}: {error}"
        gaps.append(gap)
    return float(np.mean(gaps)), gaps, None


# ------------------------------------------------------------------ engine


class Evolver:
    """Holds the LLM, fitness cache and audit log for one evolution run."""

    def __init__(self, config: EvolveConfig, llm, run_dir: Optional[Path] = None):
        self.config = config
        self.llm = llm
        self.rng = np.random.default_rng(config.rng_seed)
        self.cache: dict[str, tuple[float, list, Optional[str], float]] = {}
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.llm_log: list[dict] = []
        self.trace: list[dict] = []
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "config.json").write_text(json.dumps(config.to_json(), indent=2))
            (self.run_dir / "llm_log.jsonl").write_text("")

    def _audit(self, entry: dict):
        self.llm_log.append(entry)
        if self.run_dir is not None:
            with (self.run_dir / "llm_log.jsonl").open("a") as fh:
                fh.write(json.dumps(entry) + "\n")

    def request_program(self, kind: Kind, parents: Sequence[Individual], generation: int):
        """Ask the LLM for a program; retry with the error appended. None on failure."""
        user = build_prompt(kind, parents)
        base_user = user
        for attempt in range(self.config.max_retries + 1):
            req = LlmRequest(
                system_prompt=system_prompt(),
                user_prompt=user,
                temperature=DEFAULT_TEMPERATURE[kind],
                kind=kind,
            )
            entry = {
                "generation": generation,
                "kind": kind,
                "attempt": attempt,
                "request": req.digest(),
                "system_prompt": req.system_prompt,
                "user_prompt": req.user_prompt,
            }
            try:
                resp = self.llm.complete(req)
            except LlmError as exc:
                entry.update(response=None, outcome=f"provider error: {exc}")
                self._audit(entry)
                log.warning("LLM %s request failed: %s", kind, exc)
                return None
            entry["response"] = resp.text
            try:
                desc, source = extract_program(resp.text)
                prog = afdsl.parse(source, desc)
                report = afdsl.validate(prog)
                if not report:
                    raise _Rejected(f"{report.error_type}: {report.reason}")
            except (ExtractionError, afdsl.DslError, _Rejected) as exc:
                entry["outcome"] = f"rejected: {exc}"
                self._audit(entry)
                user = (
                    base_user
                    + f"\n\nYour previous answer was rejected ({exc}). "
                    "Reply again following the language and format exactly."
                )
                continue
            entry["outcome"] = "accepted"
            self._audit(entry)
            return prog
        return None

    def score(self, program: afdsl.AfProgram, provenance: str) -> Individual:
        key = program_key(program)
        if key not in self.cache:
            t0 = time.perf_counter()
            fit, gaps, err = evaluate_fitness(program, self.config)
            self.cache[key] = (fit, gaps, err, time.perf_counter() - t0)
        fit, gaps, err, wall = self.cache[key]
        return Individual(program, fit, wall, provenance, list(gaps), err)

    def initial_population(self) -> Population:
        cfg = self.config
        pop = Population()
        if cfg.seed_with_goldens:
            for name in ("evolcaf", "ei", "eipu"):
                if len(pop.individuals) < cfg.pop_size:
                    pop.individuals.append(self.score(afdsl.load_golden(name), "init"))
        attempts = 0
        limit = cfg.pop_size * cfg.init_attempts_per_slot
        while len(pop.individuals) < cfg.pop_size:
            if attempts >= limit:
                raise InitFailure(
                    f"only {len(pop.individuals)} of {cfg.pop_size} initial programs "
                    f"after {attempts} requests"
                )
            attempts += 1
            prog = self.request_program("init", [], 0)
            if prog is not None:
                pop.individuals.append(self.score(prog, "init"))
        pop.sort()
        self._snapshot(pop)
        return pop

    def select_parents(self, pop: Population) -> list[Individual]:
        ranked = sorted(pop.individuals, key=lambda i: i.fitness)
        w = 1.0 / np.arange(1, len(ranked) + 1)
        idx = self.rng.choice(len(ranked), size=self.config.parents_per_offspring, replace=False, p=w / w.sum())
        return [ranked[i] for i in idx]

    def step(self, pop: Population) -> Population:
        cfg = self.config
        gen = pop.generation + 1
        new = []
        for _ in range(cfg.offspring_per_generation):
            parents = self.select_parents(pop)
            child, provenance = None, "crossover"
            if self.rng.random() < cfg.crossover_prob:
                child = self.request_program("crossover", parents, gen)
            if self.rng.random() < cfg.mutation_prob:
                base = Individual(child, provenance="crossover") if child is not None else parents[0]
                mutant = self.request_program("mutation", [base], gen)
                if mutant is not None:
                    child, provenance = mutant, "mutation"
            if child is None:
                log.info("generation %d: no offspring produced", gen)
                continue
            new.append(self.score(child, provenance))
        pop.individuals.extend(new)
        pop.sort()
        del pop.individuals[cfg.pop_size:]
        pop.generation = gen
        best, mean = pop.stats()
        pop.best_history.append(best)
        pop.mean_history.append(mean)
        self.trace.append({"generation": gen, "best": best, "mean": mean})
        self._snapshot(pop)
        return pop

    def _snapshot(self, pop: Population):
        if self.run_dir is None:
            return
        snap = {
            "generation": pop.generation,
            "individuals": [i.to_json() for i in pop.individuals],
        }
        (self.run_dir / f"generation_{pop.generation}.json").write_text(json.dumps(snap, indent=2))
        with (self.run_dir / "fitness_trace.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "best", "mean"])
            for row in self.trace:
                w.writerow([row["generation"], row["best"], row["mean"]])
        best = pop.best
        (self.run_dir / "best_program.dsl").write_text(
            f"## {best.program.description}\n{best.program.source.strip()}\n"
            if best.program.description
            else best.program.source.strip() + "\n"
        )

    def run(self) -> tuple[Individual, Population]:
        pop = self.initial_population()
        for _ in range(self.config.generations):
            pop = self.step(pop)
        return pop.best, pop


class _Rejected(Exception):
    pass


def step(pop: Population, config: EvolveConfig, llm, evolver: Optional[Evolver] = None) -> Population:
    return (evolver or Evolver(config, llm)).step(pop)


def evolve(config: EvolveConfig, llm, run_dir: Optional[Path] = None) -> tuple[Individual, Population, list]:
    """Run a whole evolution; returns ``(best, final population, fitness trace)``."""
    ev = Evolver(config, llm, run_dir)
    best, pop = ev.run()
    return best, pop, ev.trace
