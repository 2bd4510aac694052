"""The budgeted cost-aware Bayesian-optimization loop.

Each run evaluates a scrambled-Sobol initial design, then repeatedly fits
the objective and cost GPs, maximizes the acquisition function and pays
for one more evaluation while the spent budget is below the total. The
budget check happens before an evaluation, so the final evaluation may
overspend.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from . import acqopt, gp
from .acquisition import AfContext, EvolcafComponents, get_builtin
from .bench import BenchmarkInstance
from .errors import EvocafError, InvalidData, NumericalFailure

log = logging.getLogger(__name__)


@dataclass
class Problem:
    """A black-box maximization problem with a positive evaluation cost."""

    objective: Callable[[np.ndarray], float]
    cost: Callable[[np.ndarray], float]
    bounds: np.ndarray
    f_star: Optional[float] = None
    x_star: Optional[np.ndarray] = None
    name: str = "problem"
    noise_std: float = 0.0
    cost_noise_std: float = 0.0

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (d, 2)")
        if np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ValueError("each lower bound must be below its upper bound")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @classmethod
    def from_instance(cls, inst: BenchmarkInstance) -> "Problem":
        return cls(
            objective=lambda x: float(inst.objective(x)),
            cost=lambda x: float(inst.cost(x)),
            bounds=inst.bounds,
            f_star=inst.f_star,
            x_star=inst.x_star_raw,
            name=inst.name,
        )

    def to_unit(self, X):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (np.asarray(X, dtype=float) - lo) / (hi - lo)

    def from_unit(self, U):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + np.asarray(U, dtype=float) * (hi - lo)


@dataclass
class Evaluation:
    x: list
    y: float
    z: float
    cum_budget: float
    wall_ms: float


@dataclass
class BudgetLedger:
    B_total: float
    B_init: float = 0.0
    B_used: float = 0.0

    def charge(self, z: float) -> None:
        self.B_used += z

    @property
    def exhausted(self) -> bool:
        return not self.B_used < self.B_total


@dataclass
class RunRecord:
    history: list = field(default_factory=list)
    seed: int = 0
    af: str = ""
    problem: str = ""
    budget_total: float = math.nan
    n_init: int = 0
    f_star: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    @property
    def T(self) -> int:
        return len(self.history)

    @property
    def best_y(self) -> float:
        return max(e.y for e in self.history) if self.history else -math.inf

    @property
    def best_x(self) -> Optional[list]:
        if not self.history:
            return None
        return max(self.history, key=lambda e: e.y).x

    @property
    def optimal_gap(self) -> Optional[float]:
        if self.f_star is None or not self.history:
            return None
        return optimal_gap(self, self.f_star)

    @property
    def budget_used(self) -> float:
        return self.history[-1].cum_budget if self.history else 0.0

    def summary(self) -> dict[str, Any]:
        return {
            "problem": self.problem,
            "af": self.af,
            "seed": self.seed,
            "budget_total": self.budget_total,
            "budget_used": self.budget_used,
            "T": self.T,
            "n_init": self.n_init,
            "best_y": self.best_y,
            "gap": self.optimal_gap,
            "failed": self.failed,
            "error": self.error,
        }

    def write(self, jsonl_path: Union[str, Path], summary_path: Union[str, Path, None] = None):
        """Write one JSON object per evaluation plus a summary JSON file."""
        jsonl_path = Path(jsonl_path)
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        with jsonl_path.open("w") as fh:
            for e in self.history:
                fh.write(json.dumps(dataclasses.asdict(e)) + "\n")
        if summary_path is None:
            summary_path = jsonl_path.with_suffix(".summary.json")
        Path(summary_path).write_text(json.dumps(self.summary(), indent=2))


def read_jsonl(path: Union[str, Path]) -> list[Evaluation]:
    with Path(path).open() as fh:
        return [Evaluation(**json.loads(line)) for line in fh if line.strip()]


def optimal_gap(record: RunRecord, f_star: float) -> float:
    if not record.history:
        raise ValueError("record has no evaluations")
    return float(f_star - record.best_y)


def init_design(bounds, n: int, seed: int) -> np.ndarray:
    """``n`` scrambled Sobol points mapped into ``bounds`` (deterministic per seed)."""
    if n < 2:
        raise ValueError("initial design needs at least 2 points")
    bounds = np.asarray(bounds, dtype=float)
    U = acqopt.sobol_points(n, bounds.shape[0], seed)
    return bounds[:, 0] + U * (bounds[:, 1] - bounds[:, 0])


def resolve_af(spec):
    """Turn ``"ei"``, ``"evolcaf:110"``, ``"dsl:<path>"`` or a callable into an AF."""
    if not isinstance(spec, str):
        return spec
    if spec.startswith("dsl:"):
        from . import afdsl

        text = Path(spec[4:]).read_text()
        code = "\n".join(l for l in text.splitlines() if not l.startswith("##"))
        return afdsl.parse(code)
    name, _, mask = spec.partition(":")
    if name == "evolcaf" and mask:
        return get_builtin("evolcaf", EvolcafComponents.from_mask(mask))
    return get_builtin(name)


def af_label(af) -> str:
    return getattr(af, "name", None) or type(af).__name__


@dataclass(frozen=True)
class RunOptions:
    gp_config: gp.GpConfig = gp.GpConfig()
    cost_gp_config: gp.GpConfig = gp.GpConfig()
    acq_config: acqopt.AcqOptConfig = acqopt.AcqOptConfig()
    n_init: Optional[int] = None
    time_limit: Optional[float] = None
    max_evals: int = 10_000


def _fit_with_retry(U, v, config: gp.GpConfig, seed: int) -> gp.GpModel:
    cfg = dataclasses.replace(config, seed=seed)
    try:
        return gp.fit(U, v, cfg)
    except NumericalFailure:
        log.warning("GP fit failed; retrying with a raised noise floor")
        return gp.fit(U, v, dataclasses.replace(cfg, noise_floor=cfg.noise_floor * 1e3))


def run(
    problem: Problem,
    af,
    B_total: float,
    seed: int = 0,
    options: RunOptions = RunOptions(),
    af_name: Optional[str] = None,
) -> RunRecord:
    """Run the budgeted loop. Failures are flagged on the record, never raised."""
    af_obj = resolve_af(af)
    record = RunRecord(
        seed=seed,
        af=af_name or (af if isinstance(af, str) else af_label(af_obj)),
        problem=problem.name,
        budget_total=float(B_total),
        f_star=problem.f_star,
    )
    d = problem.dim
    n_init = options.n_init or 2 * d
    record.n_init = n_init
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    deadline = None if options.time_limit is None else t0 + options.time_limit
    ledger = BudgetLedger(float(B_total))

    U: list[np.ndarray] = []
    ys: list[float] = []
    zs: list[float] = []

    def evaluate(u):
        x = problem.from_unit(u)
        y = float(problem.objective(x))
        z = float(problem.cost(x))
        if problem.noise_std:
            y += problem.noise_std * rng.standard_normal()
        if problem.cost_noise_std:
            z = max(1e-9, z + problem.cost_noise_std * rng.standard_normal())
        if not (z > 0 and math.isfinite(z)) or not math.isfinite(y):
            raise InvalidData(f"bad observation y={y!r}, z={z!r}")
        ledger.charge(z)
        U.append(np.asarray(u, dtype=float))
        ys.append(y)
        zs.append(z)
        record.history.append(
            Evaluation(
                x=[float(v) for v in x],
                y=y,
                z=z,
                cum_budget=ledger.B_used,
                wall_ms=1000.0 * (time.perf_counter() - t0),
            )
        )

    try:
        for u in problem.to_unit(init_design(problem.bounds, n_init, seed)):
            evaluate(u)
        ledger.B_init = ledger.B_used
        it = 0
        while not ledger.exhausted and record.T < options.max_evals:
            Ux = np.array(U)
            obj = _fit_with_retry(Ux, np.array(ys), options.gp_config, seed * 7919 + it)
            cst = _fit_with_retry(Ux, np.array(zs), options.cost_gp_config, seed * 7919 + it + 1)
            ctx = AfContext.from_data(
                Ux, np.array(ys), obj, cst, ledger.B_used, ledger.B_total, ledger.B_init
            )
            acfg = dataclasses.replace(options.acq_config, rng_seed=seed * 100_003 + it)
            x_next, _ = acqopt.maximize(af_obj, ctx, acfg, deadline=deadline)
            evaluate(np.clip(x_next, 0.0, 1.0))
            it += 1
            if deadline is not None and time.perf_counter() > deadline:
                raise_timeout(options.time_limit)
    except EvocafError as exc:
        record.failed = True
        record.error = f"{type(exc).__name__}: {exc}"
        log.info("run %s/%s seed %d failed: %s", problem.name, record.af, seed, record.error)
    return record


def raise_timeout(limit):
    from .errors import TimeLimitExceeded

    raise TimeLimitExceeded(f"run exceeded its {limit:g} s time limit")
