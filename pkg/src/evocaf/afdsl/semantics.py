"""Static shape checking and batched numeric evaluation.

Logical shapes are tuples over the symbolic dimensions ``m`` (query batch),
``t`` (observations) and ``d`` (input dimension), or literal integers.
At runtime every value carries one extra leading axis holding stacked
copies of the query batch (size 1 for values that do not depend on the
queries), so reductions never mix copies. Copy 0 is the reference batch
and the others are finite-difference perturbations of it; ``detach(x)``
returns the reference value in every copy, which removes ``x`` from the
optimizer's gradient without changing any utility value.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .errors import DslNameError, DslTypeError, LimitExceeded, NumericalFault
from .nodes import BinOp, Call, ListLit, Module, Name, Neg, Num

Shape = tuple

INPUTS: dict[str, Shape] = {
    "train_x": ("t", "d"),
    "train_y": ("t",),
    "best_x": ("d",),
    "best_y": (),
    "test_x": ("m", "d"),
    "mean_test_y": ("m",),
    "std_test_y": ("m",),
    "cost_test_y": ("m",),
    "budget_used": (),
    "budget_total": (),
}

UNARY_FUNCS = ("exp", "log", "sqrt", "abs", "normpdf", "normcdf", "detach")
REDUCTIONS = ("mean", "sum", "std")
FUNCTIONS = UNARY_FUNCS + REDUCTIONS + ("max", "min", "clamp", "minrows", "pairwise_dist")


def fmt_shape(shape: Shape) -> str:
    if shape == ():
        return "scalar"
    kind = "vector" if len(shape) == 1 else "matrix"
    return f"{kind}({', '.join(str(s) for s in shape)})"


@dataclass(frozen=True)
class TypeInfo:
    result_shape: Shape
    pointwise: bool
    used_inputs: frozenset


def _broadcast(a: Shape, b: Shape, node, source) -> Shape:
    if a == ():
        return b
    if b == ():
        return a
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise DslTypeError(
            f"shape mismatch: {fmt_shape(a)} and {fmt_shape(b)}", node.pos, source
        )
    return long_


class _Checker:
    def __init__(self, source):
        self.source = source
        self.env: dict[str, Shape] = dict(INPUTS)
        self.coupled = False
        self.used: set[str] = set()

    def err(self, cls, msg, node):
        return cls(msg, node.pos, self.source)

    def module(self, mod: Module) -> Shape:
        for a in mod.assigns:
            if a.name in INPUTS or a.name in FUNCTIONS:
                raise DslNameError(f"cannot assign to reserved name {a.name!r}", a.pos, self.source)
            if a.name in self.env:
                raise DslNameError(f"name {a.name!r} is already defined", a.pos, self.source)
            self.env[a.name] = self.check(a.value)
        return self.check(mod.result)

    def check(self, node) -> Shape:
        if isinstance(node, Num):
            return ()
        if isinstance(node, Name):
            if node.id not in self.env:
                raise self.err(DslNameError, f"unknown identifier {node.id!r}", node)
            if node.id in INPUTS:
                self.used.add(node.id)
            return self.env[node.id]
        if isinstance(node, Neg):
            return self.check(node.operand)
        if isinstance(node, BinOp):
            return _broadcast(self.check(node.left), self.check(node.right), node, self.source)
        if isinstance(node, ListLit):
            shapes = [self.check(i) for i in node.items]
            if any(s != shapes[0] for s in shapes):
                raise self.err(DslTypeError, "list literal items must share one shape", node)
            if len(shapes[0]) > 1:
                raise self.err(DslTypeError, "list literals nest at most two levels", node)
            return (len(shapes),) + shapes[0]
        if isinstance(node, Call):
            return self.call(node)
        raise TypeError(f"unexpected node {node!r}")

    def arity(self, node, *allowed):
        if len(node.args) not in allowed:
            want = " or ".join(str(a) for a in allowed)
            raise self.err(
                DslTypeError, f"{node.func}() takes {want} argument(s), got {len(node.args)}", node
            )

    def call(self, node: Call) -> Shape:
        f = node.func
        if f not in FUNCTIONS:
            raise self.err(DslNameError, f"unknown function {f!r}", node)
        args = [self.check(a) for a in node.args]
        if f in UNARY_FUNCS:
            self.arity(node, 1)
            return args[0]
        if f in REDUCTIONS:
            self.arity(node, 1)
            self._reduce(args[0])
            return ()
        if f in ("max", "min"):
            self.arity(node, 1, 2)
            if len(args) == 1:
                self._reduce(args[0])
                return ()
            return _broadcast(args[0], args[1], node, self.source)
        if f == "clamp":
            self.arity(node, 3)
            return _broadcast(_broadcast(args[0], args[1], node, self.source), args[2], node, self.source)
        if f == "minrows":
            self.arity(node, 1)
            if len(args[0]) != 2:
                raise self.err(DslTypeError, f"minrows() needs a matrix, got {fmt_shape(args[0])}", node)
            if args[0][1] == "m":
                self.coupled = True
            return args[0][:1]
        if f == "pairwise_dist":
            self.arity(node, 2)
            a, b = args
            if len(a) != 2 or len(b) != 2 or a[1] != b[1]:
                raise self.err(
                    DslTypeError,
                    f"pairwise_dist() needs two matrices with equal column counts, "
                    f"got {fmt_shape(a)} and {fmt_shape(b)}",
                    node,
                )
            if a[1] == "m":
                self.coupled = True
            return (a[0], b[0])
        raise AssertionError(f)

    def _reduce(self, shape):
        if "m" in shape:
            self.coupled = True


def typecheck(mod: Module, source: Optional[str] = None) -> TypeInfo:
    chk = _Checker(source)
    shape = chk.module(mod)
    if shape != ("m",):
        raise DslTypeError(
            f"program must produce vector(m) (one utility per query point), got {fmt_shape(shape)}",
            mod.result.pos,
            source,
        )
    return TypeInfo(shape, not chk.coupled, frozenset(chk.used))


# ---------------------------------------------------------------- evaluation


def _align(x: np.ndarray, rank: int) -> np.ndarray:
    """Insert singleton axes after the copies axis to reach ``rank`` logical dims."""
    missing = rank - (x.ndim - 1)
    if missing <= 0:
        return x
    return x.reshape(x.shape[:1] + (1,) * missing + x.shape[1:])


def _binary(a, b):
    r = max(a.ndim, b.ndim) - 1
    return _align(a, r), _align(b, r)


def _logical_axes(x):
    return tuple(range(1, x.ndim))


class Evaluator:
    def __init__(self, mod: Module, bindings: dict, deadline: Optional[float], source=None):
        self.mod = mod
        self.env = dict(bindings)
        self.deadline = deadline
        self.source = source

    def run(self) -> np.ndarray:
        for a in self.mod.assigns:
            self.env[a.name] = self.eval(a.value)
        return self.eval(self.mod.result)

    def eval(self, node) -> np.ndarray:
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise LimitExceeded("evaluation exceeded its wall-time limit", node.pos, self.source)
        out = self._eval(node)
        if not np.all(np.isfinite(out)):
            raise NumericalFault("non-finite intermediate value", node.pos, self.source)
        return out

    def _eval(self, node) -> np.ndarray:
        if isinstance(node, Num):
            return np.array([node.value])
        if isinstance(node, Name):
            return self.env[node.id]
        if isinstance(node, Neg):
            return -self.eval(node.operand)
        if isinstance(node, BinOp):
            a, b = _binary(self.eval(node.left), self.eval(node.right))
            op = node.op
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return a / b
            return np.power(a, b)
        if isinstance(node, ListLit):
            items = [self.eval(i) for i in node.items]
            items = np.broadcast_arrays(*items)
            return np.stack(items, axis=1)
        if isinstance(node, Call):
            return self._call(node)
        raise TypeError(node)

    def _call(self, node: Call) -> np.ndarray:
        f = node.func
        args = [self.eval(a) for a in node.args]
        x = args[0]
        if f == "exp":
            return np.exp(x)
        if f == "log":
            return np.log(x)
        if f == "sqrt":
            return np.sqrt(x)
        if f == "abs":
            return np.abs(x)
        if f == "normpdf":
            return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        if f == "normcdf":
            return ndtr(x)
        if f == "detach":
            # copy 0 of a stacked batch is the unperturbed reference
            return np.broadcast_to(x[:1], x.shape).copy() if x.shape[0] > 1 else x
        if f == "mean":
            return np.mean(x, axis=_logical_axes(x))
        if f == "sum":
            return np.sum(x, axis=_logical_axes(x))
        if f == "std":
            axes = _logical_axes(x)
            n = int(np.prod([x.shape[i] for i in axes])) if axes else 1
            if n < 2:
                return np.full(x.shape[:1], np.nan)
            return np.std(x, axis=axes, ddof=1)
        if f in ("max", "min"):
            if len(args) == 1:
                red = np.max if f == "max" else np.min
                return red(x, axis=_logical_axes(x)) if x.ndim > 1 else x
            a, b = _binary(x, args[1])
            return np.maximum(a, b) if f == "max" else np.minimum(a, b)
        if f == "clamp":
            r = max(a.ndim for a in args) - 1
            v, lo, hi = (_align(a, r) for a in args)
            return np.minimum(np.maximum(v, lo), hi)
        if f == "minrows":
            return np.min(x, axis=2)
        if f == "pairwise_dist":
            a, b = args
            diff = a[:, :, None, :] - b[:, None, :, :]
            return np.sqrt(np.sum(diff * diff, axis=-1))
        raise AssertionError(f)
