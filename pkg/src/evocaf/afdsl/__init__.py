"""Closed expression language for acquisition functions.

Programs see exactly ten named inputs (``train_x``, ``train_y``,
``best_x``, ``best_y``, ``test_x``, ``mean_test_y``, ``std_test_y``,
``cost_test_y``, ``budget_used``, ``budget_total``) and must produce one
utility per query point. There are no loops, user functions or I/O, so
any program that parses is safe to run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Union

import numpy as np

from ..acquisition import AfContext, BatchUtility, posterior_at
from .errors import (
    DslError,
    DslNameError,
    DslTypeError,
    LimitExceeded,
    NumericalFault,
    ParseError,
)
from .nodes import Module, count_nodes
from .parser import parse_syntax, to_source, tokenize
from .semantics import FUNCTIONS, INPUTS, Evaluator, TypeInfo, typecheck

__all__ = [
    "AfProgram",
    "DslError",
    "DslNameError",
    "DslTypeError",
    "EvalLimits",
    "FUNCTIONS",
    "GRAMMAR",
    "INPUTS",
    "LimitExceeded",
    "NumericalFault",
    "ParseError",
    "ValidationReport",
    "evaluate",
    "golden_source",
    "load_golden",
    "parse",
    "parse_syntax",
    "to_source",
    "tokenize",
    "validate",
]

GRAMMAR = """\
program    = { NAME "=" expr SEP } expr ;        (* SEP is a newline or ";" *)
expr       = term { ("+" | "-") term } ;
term       = unary { ("*" | "/") unary } ;
unary      = "-" unary | power ;
power      = atom [ "^" unary ] ;                 (* right-associative *)
atom       = NUMBER | NAME | NAME "(" [ expr { "," expr } ] ")"
           | "(" expr ")" | "[" expr { "," expr } "]" ;

inputs     : train_x matrix(t, d)   train_y vector(t)   best_x vector(d)
             best_y scalar          test_x matrix(m, d) mean_test_y vector(m)
             std_test_y vector(m)   cost_test_y vector(m)
             budget_used scalar     budget_total scalar
functions  : exp log sqrt abs normpdf normcdf      elementwise
             max(a, b) min(a, b) clamp(x, lo, hi)  elementwise
             mean sum std max(v) min(v)            reduce all elements to a scalar
             minrows(M)                            per-row minimum of a matrix
             pairwise_dist(A, B)                   Euclidean distances between rows
             detach(x)                             value of x, held fixed while the
                                                   optimizer follows the gradient
broadcast  : scalars combine with anything; otherwise trailing dimensions
             must match exactly (vector(d) with matrix(m, d) is allowed).
result     : the final expression must be a vector(m).
"""


@dataclass(frozen=True)
class EvalLimits:
    max_nodes: int = 2000
    max_wall_time: float = 10.0
    max_batch: int = 100_000

    def __post_init__(self):
        if min(self.max_nodes, self.max_batch) <= 0 or not self.max_wall_time > 0:
            raise ValueError("evaluation limits must be positive")


@dataclass(frozen=True)
class AfProgram:
    """A parsed, shape-checked acquisition program.

    Instances are callable as acquisition functions with default limits.
    """

    description: str
    source: str
    ast: Module = field(repr=False)
    info: TypeInfo = field(repr=False)
    node_count: int = 0
    limits: EvalLimits = field(default=EvalLimits(), repr=False, compare=False)

    arity_signature = tuple(INPUTS)

    @property
    def pointwise(self) -> bool:
        return self.info.pointwise

    def __call__(self, ctx: AfContext, Xq: np.ndarray) -> BatchUtility:
        return evaluate(self, ctx, Xq, self.limits)

    def canonical_source(self) -> str:
        return to_source(self.ast)


def parse(source: str, description: str = "") -> AfProgram:
    """Parse and shape-check ``source``.

    Raises ParseError, DslNameError or DslTypeError.
    """
    mod = parse_syntax(source)
    info = typecheck(mod, source)
    return AfProgram(description, source, mod, info, count_nodes(mod))


def evaluate(
    prog: AfProgram,
    ctx: AfContext,
    Xq: np.ndarray,
    limits: EvalLimits = EvalLimits(),
) -> BatchUtility:
    """Evaluate ``prog`` on a query batch ``(m, d)`` or stacked ``(B, m, d)``."""
    Xq = np.asarray(Xq, dtype=float)
    stacked = Xq.ndim == 3
    X3 = Xq if stacked else Xq[None]
    if prog.node_count > limits.max_nodes:
        raise LimitExceeded(f"program has {prog.node_count} nodes, limit {limits.max_nodes}")
    if X3.shape[1] > limits.max_batch:
        raise LimitExceeded(f"query batch of {X3.shape[1]} exceeds limit {limits.max_batch}")
    deadline = time.perf_counter() + limits.max_wall_time

    used = prog.info.used_inputs
    bindings = {
        "train_x": ctx.train_x[None],
        "train_y": ctx.train_y[None],
        "best_x": ctx.best_x[None],
        "best_y": np.array([ctx.best_y]),
        "test_x": X3,
        "budget_used": np.array([ctx.budget_used]),
        "budget_total": np.array([ctx.budget_total]),
    }
    if "mean_test_y" in used or "std_test_y" in used:
        post = posterior_at(ctx.obj_model, X3)
        bindings["mean_test_y"] = post.mean
        bindings["std_test_y"] = np.sqrt(post.var)
    cost = posterior_at(ctx.cost_model, X3).mean
    bindings["cost_test_y"] = cost

    with np.errstate(all="ignore"):
        out = Evaluator(prog.ast, bindings, deadline, prog.source).run()
    out = np.broadcast_to(out, X3.shape[:2]).copy()
    if not stacked:
        out, cost = out[0], cost[0]
    return BatchUtility(out, cost)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    reason: Optional[str] = None
    error_type: Optional[str] = None

    def __bool__(self):
        return self.ok


_PROBE: Optional[tuple] = None


def probe_context() -> tuple[AfContext, np.ndarray]:
    """A fixed synthetic context (d=2, t=6) and a 3-point probe batch."""
    global _PROBE
    if _PROBE is None:
        from .. import gp

        rng = np.random.default_rng(20240101)
        X = rng.uniform(size=(6, 2))
        y = np.sin(3 * X[:, 0]) + np.cos(2 * X[:, 1])
        z = np.exp(-np.linalg.norm(X - 0.5, axis=1))
        ym, ys = float(y.mean()), float(y.std())
        zm, zs = float(z.mean()), float(z.std())
        obj = gp.build_model(X, (y - ym) / ys, 0.4, 1.0, 1e-6, ym, ys)
        cst = gp.build_model(X, (z - zm) / zs, 0.4, 1.0, 1e-6, zm, zs)
        ctx = AfContext.from_data(X, y, obj, cst, float(z.sum()), 30.0, float(z[:4].sum()))
        Xq = rng.uniform(size=(3, 2))
        _PROBE = (ctx, Xq)
    return _PROBE


def validate(
    prog: Union[AfProgram, str],
    probe: Optional[tuple[AfContext, np.ndarray]] = None,
    limits: EvalLimits = EvalLimits(),
) -> ValidationReport:
    """Check that a program parses and runs cleanly on a probe context."""
    try:
        if isinstance(prog, str):
            prog = parse(prog)
        ctx, Xq = probe or probe_context()
        out = evaluate(prog, ctx, Xq, limits)
        if out.values.shape != (Xq.shape[0],):
            return ValidationReport(False, f"output shape {out.values.shape}", "TypeError")
    except DslError as exc:
        return ValidationReport(False, str(exc), exc.kind)
    return ValidationReport(True)


def golden_source(name: str) -> str:
    """Text of a shipped program under ``programs/`` (e.g. ``"evolcaf"``)."""
    return resources.files("evocaf").joinpath(f"programs/{name}.dsl").read_text()


def load_golden(name: str) -> AfProgram:
    text = golden_source(name)
    desc_lines, code_lines = [], []
    for line in text.splitlines():
        (desc_lines if line.startswith("##") else code_lines).append(line)
    desc = " ".join(l.lstrip("#").strip() for l in desc_lines).strip()
    return parse("\n".join(code_lines), desc)
