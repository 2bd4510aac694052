"""Synthetic benchmark problems with an optimum-centred cost surface.

Objectives are the usual literature test functions, negated where needed
so that every problem is a maximization. The evaluation cost is
``exp(-||u - u*||)`` with both points mapped to the unit cube, so the
global optimizer is the most expensive point to evaluate.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, NotSupported

_BOUND_TOL = 1e-9


def _ackley(x):
    d = x.shape[-1]
    a, b, c = 20.0, 0.2, 2.0 * math.pi
    t1 = -a * np.exp(-b * np.sqrt(np.sum(x**2, axis=-1) / d))
    t2 = -np.exp(np.sum(np.cos(c * x), axis=-1) / d)
    return t1 + t2 + a + math.e


def _rastrigin(x):
    d = x.shape[-1]
    return 10.0 * d + np.sum(x**2 - 10.0 * np.cos(2.0 * math.pi * x), axis=-1)


def _griewank(x):
    i = np.arange(1, x.shape[-1] + 1)
    return np.sum(x**2, axis=-1) / 4000.0 - np.prod(np.cos(x / np.sqrt(i)), axis=-1) + 1.0


def _rosenbrock(x):
    return np.sum(
        100.0 * (x[..., 1:] - x[..., :-1] ** 2) ** 2 + (x[..., :-1] - 1.0) ** 2, axis=-1
    )


def _levy(x):
    w = 1.0 + (x - 1.0) / 4.0
    head = np.sin(math.pi * w[..., 0]) ** 2
    mid = np.sum(
        (w[..., :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(math.pi * w[..., :-1] + 1.0) ** 2),
        axis=-1,
    )
    tail = (w[..., -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * math.pi * w[..., -1]) ** 2)
    return head + mid + tail


def _three_hump_camel(x):
    x1, x2 = x[..., 0], x[..., 1]
    return 2.0 * x1**2 - 1.05 * x1**4 + x1**6 / 6.0 + x1 * x2 + x2**2


def _styblinski_tang(x):
    return 0.5 * np.sum(x**4 - 16.0 * x**2 + 5.0 * x, axis=-1)


_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array(
    [[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]]
)
_H6_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def _hartmann(A, P):
    def f(x):
        inner = np.sum(A * (x[..., None, :] - P) ** 2, axis=-1)
        return -np.sum(_H3_ALPHA * np.exp(-inner), axis=-1)

    return f


def _powell(x):
    x1, x2, x3, x4 = (x[..., i::4] for i in range(4))
    return np.sum(
        (x1 + 10 * x2) ** 2 + 5 * (x3 - x4) ** 2 + (x2 - 2 * x3) ** 4 + 10 * (x1 - x4) ** 4,
        axis=-1,
    )


_SHEKEL_BETA = 0.1 * np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5], dtype=float)
_SHEKEL_C = np.array(
    [
        [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
        [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
        [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
        [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
    ]
)


def _shekel(x):
    sq = np.sum((x[..., None, :] - _SHEKEL_C.T) ** 2, axis=-1)
    return -np.sum(1.0 / (sq + _SHEKEL_BETA), axis=-1)


def _cosine_mixture(x):
    # already a maximization problem (optimum 0.1 * d at the origin)
    return 0.1 * np.sum(np.cos(5.0 * math.pi * x), axis=-1) - np.sum(x**2, axis=-1)


@dataclass(frozen=True)
class _Spec:
    fn: Callable
    bounds: tuple
    x_opt: tuple
    minimize: bool = True


def _box(lo, hi, d):
    return ((lo, hi),) * d


_SPECS: dict[str, _Spec] = {
    "ackley2": _Spec(_ackley, _box(-32.768, 32.768, 2), (0.0, 0.0)),
    "rastrigin2": _Spec(_rastrigin, _box(-5.12, 5.12, 2), (0.0, 0.0)),
    "griewank2": _Spec(_griewank, _box(-600.0, 600.0, 2), (0.0, 0.0)),
    "rosenbrock2": _Spec(_rosenbrock, _box(-5.0, 10.0, 2), (1.0, 1.0)),
    "levy2": _Spec(_levy, _box(-10.0, 10.0, 2), (1.0, 1.0)),
    "threehumpcamel2": _Spec(_three_hump_camel, _box(-5.0, 5.0, 2), (0.0, 0.0)),
    "styblinskitang2": _Spec(_styblinski_tang, _box(-5.0, 5.0, 2), (-2.903534, -2.903534)),
    "hartmann3": _Spec(_hartmann(_H3_A, _H3_P), _box(0.0, 1.0, 3), (0.114614, 0.555649, 0.852547)),
    "powell4": _Spec(_powell, _box(-4.0, 5.0, 4), (0.0, 0.0, 0.0, 0.0)),
    "shekel4": _Spec(_shekel, _box(0.0, 10.0, 4), (4.00075, 4.00059, 3.99966, 3.99951)),
    "hartmann6": _Spec(
        _hartmann(_H6_A, _H6_P),
        _box(0.0, 1.0, 6),
        (0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573),
    ),
    "cosine8": _Spec(_cosine_mixture, _box(-1.0, 1.0, 8), (0.0,) * 8, minimize=False),
}

BENCHMARKS = tuple(_SPECS)


@functools.lru_cache(maxsize=None)
def _refined_optimum(name: str) -> tuple[np.ndarray, float]:
    """Polish the literature optimizer so f(x*) is the true optimum to ~1e-12."""
    spec = _SPECS[name]
    sign = 1.0 if spec.minimize else -1.0
    b = np.array(spec.bounds)
    x0 = np.array(spec.x_opt, dtype=float)
    f0 = sign * spec.fn(x0)
    res = minimize(
        lambda x: sign * spec.fn(x),
        x0,
        method="L-BFGS-B",
        bounds=b,
        options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000},
    )
    if res.fun < f0:
        x0, f0 = res.x, float(res.fun)
    f_star = -f0  # maximization convention
    if abs(f_star) < 1e-12:
        f_star = 0.0
    return x0, f_star + 0.0


@dataclass(frozen=True)
class BenchmarkInstance:
    """A named test problem; ``seed`` drives the initial design only."""

    name: str
    bounds: np.ndarray
    x_star_raw: np.ndarray
    f_star: float
    seed: int = 0
    maximize_sign: float = -1.0

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def x_star(self) -> np.ndarray:
        """Known optimizer in unit-cube coordinates."""
        return self.to_unit(self.x_star_raw)

    def to_unit(self, x):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def from_unit(self, u):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + np.asarray(u, dtype=float) * (hi - lo)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"{self.name} expects {self.dim}-D input, got shape {x.shape}")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        tol = _BOUND_TOL * (hi - lo)
        if np.any(x < lo - tol) or np.any(x > hi + tol) or not np.all(np.isfinite(x)):
            raise DomainError(f"point outside the {self.name} domain")
        return x

    def objective(self, x):
        """Maximization-convention objective value(s) at raw point(s) ``x``."""
        x = self._check(x)
        return self.maximize_sign * _SPECS[self.name].fn(x)

    def cost(self, x):
        """Evaluation cost in (exp(-sqrt(d)), 1], peaking at the optimizer."""
        x = self._check(x)
        dist = np.linalg.norm(self.to_unit(x) - self.x_star, axis=-1)
        return np.exp(-dist)


def make_instance(name: str, seed: int = 0) -> BenchmarkInstance:
    if name not in _SPECS:
        raise NotSupported(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
    spec = _SPECS[name]
    x_star, f_star = _refined_optimum(name)
    return BenchmarkInstance(
        name=name,
        bounds=np.array(spec.bounds, dtype=float),
        x_star_raw=np.asarray(x_star, dtype=float),
        f_star=float(f_star),
        seed=seed,
        maximize_sign=-1.0 if spec.minimize else 1.0,
    )


def eval_cost(instance: BenchmarkInstance, x) -> float:
    return instance.cost(x)


def eval_objective(instance: BenchmarkInstance, x) -> float:
    return instance.objective(x)
