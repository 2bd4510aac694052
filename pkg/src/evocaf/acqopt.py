"""Multi-start maximization of acquisition functions over the unit cube.

Restarts are picked from a scrambled Sobol sample by Boltzmann sampling
on standardized utilities, then the whole restart batch is refined
jointly with L-BFGS-B. The acquisition function is always evaluated on
the complete batch, so batch-coupled terms see every restart; gradients
are central differences of the summed batch utility.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import OptFailure, SeedingFailure, TimeLimitExceeded


@dataclass(frozen=True)
class AcqOptConfig:
    n_raw: int = 100
    n_restarts: int = 20
    local_max_iters: int = 50
    local_tol: float = 1e-6
    rng_seed: int = 0
    temperature: float = 1.0
    fd_step: float = 1e-6

    def __post_init__(self):
        if min(self.n_raw, self.n_restarts, self.local_max_iters) <= 0:
            raise ValueError("counts must be positive")
        if self.n_restarts > self.n_raw:
            raise ValueError("n_restarts cannot exceed n_raw")


def sobol_points(n: int, d: int, seed: int) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # non power-of-two n
        return qmc.Sobol(d, scramble=True, seed=seed).random(n)


def boltzmann_select(
    values: np.ndarray, k: int, rng: np.random.Generator, temperature: float = 1.0
) -> np.ndarray:
    """Indices of ``k`` entries drawn without replacement, weights ``exp(z / T)``.

    ``z`` are the standardized finite utilities; non-finite entries get zero
    weight. A flat utility vector reduces to uniform sampling.
    """
    values = np.asarray(values, dtype=float)
    finite = np.isfinite(values)
    if not finite.any():
        raise SeedingFailure("all seeding utilities are non-finite")
    n = values.size
    if k >= n:
        return rng.permutation(n)
    v = values[finite]
    std = float(np.std(v))
    if std == 0.0:
        logits = np.where(finite, 0.0, -np.inf)
    else:
        logits = np.full(n, -np.inf)
        logits[finite] = (v - v.mean()) / std / temperature
    # Gumbel top-k == sequential weighted sampling without replacement
    keys = logits + rng.gumbel(size=n)
    idx = np.argsort(-keys, kind="stable")[:k]
    if std > 0.0:
        best = int(np.argmax(np.where(finite, values, -np.inf)))
        if best not in idx:
            idx[-1] = best
    return idx


def seed_restarts(af, ctx, config: AcqOptConfig = AcqOptConfig()) -> np.ndarray:
    d = ctx.train_x.shape[1]
    raw = sobol_points(config.n_raw, d, config.rng_seed)
    vals = np.asarray(af(ctx, raw).values, dtype=float)
    rng = np.random.default_rng(config.rng_seed)
    idx = boltzmann_select(vals, config.n_restarts, rng, config.temperature)
    return raw[idx]


def batch_gradient(af, ctx, X: np.ndarray, h: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Summed utility, its gradient w.r.t. every coordinate, and per-point values."""
    m, d = X.shape
    if getattr(af, "pointwise", False):
        # one shifted copy of the whole batch per (dimension, sign)
        shifts = np.zeros((2 * d, 1, d))
        for k in range(d):
            shifts[2 * k, 0, k] = h
            shifts[2 * k + 1, 0, k] = -h
        stack = np.concatenate([X[None], X[None] + shifts])
        vals = np.asarray(af(ctx, stack).values, dtype=float)
        grad = (vals[1::2] - vals[2::2]).T / (2.0 * h)
    else:
        shifts = np.zeros((2 * m * d, m, d))
        for i in range(m):
            for k in range(d):
                j = 2 * (i * d + k)
                shifts[j, i, k] = h
                shifts[j + 1, i, k] = -h
        stack = np.concatenate([X[None], X[None] + shifts])
        vals = np.asarray(af(ctx, stack).values, dtype=float)
        totals = vals.sum(axis=1)
        grad = ((totals[1::2] - totals[2::2]) / (2.0 * h)).reshape(m, d)
    return float(vals[0].sum()), grad, vals[0]


def maximize(
    af,
    ctx,
    config: AcqOptConfig = AcqOptConfig(),
    deadline: Optional[float] = None,
) -> tuple[np.ndarray, float]:
    """Return ``(x_best, utility)`` with ``x_best`` in the closed unit cube.

    ``deadline`` is a ``time.perf_counter()`` value; passing it aborts the
    ascent with TimeLimitExceeded.
    """
    X0 = seed_restarts(af, ctx, config)
    m, d = X0.shape

    def objective(flat):
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeLimitExceeded("acquisition optimization ran past the deadline")
        total, grad, _ = batch_gradient(af, ctx, flat.reshape(m, d), config.fd_step)
        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            return 1e30, np.zeros(m * d)
        return -total, -grad.ravel()

    res = minimize(
        objective,
        X0.ravel(),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * (m * d),
        options={"maxiter": config.local_max_iters, "gtol": config.local_tol},
    )
    X1 = np.clip(res.x.reshape(m, d), 0.0, 1.0)

    candidates = []
    for X in (X1, X0):
        vals = np.asarray(af(ctx, X).values, dtype=float)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        i = int(np.argmax(vals))
        candidates.append((vals[i], X[i]))
    (u1, x1), (u0, x0) = candidates
    if not np.isfinite(max(u0, u1)):
        raise OptFailure("no restart produced a finite utility")
    if u1 + config.local_tol >= u0 or not np.isfinite(u0):
        return x1.copy(), float(u1)
    return x0.copy(), float(u0)
