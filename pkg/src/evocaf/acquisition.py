"""Built-in acquisition functions over a shared :class:`AfContext`.

All functions follow the maximization convention and accept query batches
of shape ``(m, d)`` or stacked batches ``(B, m, d)``; the leading axes are
carried through to the returned utilities. Stacked batches let the
optimizer evaluate many perturbed copies of a restart batch in one call
while keeping batch-coupled terms (the distance term of the evolved
function) confined to their own copy. Copy 0 of a stacked batch is the
unperturbed reference; the evolved function's improvement term takes the
reference value in every copy, so it shapes utility values but not the
optimizer's gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np
from scipy.special import ndtr

from . import gp
from .errors import InvalidContext, NotSupported

SIGMA_MIN = 1e-9
COST_FLOOR = 1e-6

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AfContext:
    """Everything an acquisition function may look at.

    ``train_x`` and query points live in the unit cube; ``train_y`` and
    ``best_y`` are in original objective units.
    """

    train_x: np.ndarray
    train_y: np.ndarray
    best_x: np.ndarray
    best_y: float
    obj_model: gp.GpModel
    cost_model: gp.GpModel
    budget_used: float
    budget_total: float
    budget_init: float

    @classmethod
    def from_data(
        cls,
        train_x,
        train_y,
        obj_model,
        cost_model,
        budget_used,
        budget_total,
        budget_init,
    ) -> "AfContext":
        train_x = np.atleast_2d(np.asarray(train_x, dtype=float))
        train_y = np.asarray(train_y, dtype=float).ravel()
        if train_y.size == 0:
            raise InvalidContext("context needs at least one observation")
        i = int(np.argmax(train_y))
        return cls(
            train_x=train_x,
            train_y=train_y,
            best_x=train_x[i].copy(),
            best_y=float(train_y[i]),
            obj_model=obj_model,
            cost_model=cost_model,
            budget_used=float(budget_used),
            budget_total=float(budget_total),
            budget_init=float(budget_init),
        )

    @property
    def remaining_budget(self) -> float:
        return self.budget_total - self.budget_used

    def cooling_alpha(self) -> float:
        span = self.budget_total - self.budget_init
        if span <= 0:
            return 0.0
        return float(np.clip(self.remaining_budget / span, 0.0, 1.0))


@dataclass(frozen=True)
class BatchUtility:
    values: np.ndarray
    per_point_costs: np.ndarray


@dataclass(frozen=True)
class EvolcafComponents:
    use_alpha1: bool = True
    use_alpha2: bool = True
    use_alpha3: bool = True

    def __post_init__(self):
        if not (self.use_alpha1 or self.use_alpha2 or self.use_alpha3):
            raise ValueError("at least one EvolCAF component must be enabled")

    @classmethod
    def from_mask(cls, mask: str) -> "EvolcafComponents":
        """Parse a three-character mask such as ``"110"`` (alpha3 off)."""
        if len(mask) != 3 or set(mask) - {"0", "1"}:
            raise ValueError(f"component mask must look like '101', got {mask!r}")
        return cls(*(c == "1" for c in mask))

    @property
    def mask(self) -> str:
        return "".join(
            "1" if f else "0"
            for f in (self.use_alpha1, self.use_alpha2, self.use_alpha3)
        )


class AcquisitionFunction(Protocol):
    """Callable ``(ctx, Xq) -> BatchUtility``.

    ``pointwise`` tells the optimizer whether each point's utility depends
    only on that point, which allows cheaper finite differences.
    """

    pointwise: bool

    def __call__(self, ctx: AfContext, Xq: np.ndarray) -> BatchUtility: ...


def unique_rows(X2: np.ndarray) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Distinct rows of a 2-D array and the inverse map (None if all distinct).

    Stacked finite-difference batches repeat most points, and every
    pointwise quantity only needs computing once per distinct point.
    """
    if X2.shape[0] < 64:
        return X2, None
    U, inv = np.unique(X2, axis=0, return_inverse=True)
    if U.shape[0] > 0.75 * X2.shape[0]:
        return X2, None
    return U, inv.ravel()


def posterior_at(model: gp.GpModel, Xq: np.ndarray) -> gp.Posterior:
    """Posterior for arbitrarily stacked query arrays ``(..., d)``."""
    Xq = np.asarray(Xq, dtype=float)
    lead = Xq.shape[:-1]
    U, inv = unique_rows(Xq.reshape(-1, Xq.shape[-1]))
    post = gp.predict(model, U)
    mean, var = post.mean, post.var
    if inv is not None:
        mean, var = mean[inv], var[inv]
    return gp.Posterior(mean.reshape(lead), var.reshape(lead))


def normpdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def normcdf(z):
    return ndtr(z)


def expected_improvement(mu, sigma, best_y):
    """Closed-form EI with a floor on sigma; vectorized."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    diff = mu - best_y
    safe = sigma > SIGMA_MIN
    s = np.where(safe, sigma, 1.0)
    z = diff / s
    ei = s * (normpdf(z) + z * normcdf(z))
    return np.where(safe, np.maximum(ei, 0.0), np.maximum(diff, 0.0))


def _ei_and_cost(ctx: AfContext, Xq):
    post = posterior_at(ctx.obj_model, Xq)
    ei = expected_improvement(post.mean, np.sqrt(post.var), ctx.best_y)
    cost = posterior_at(ctx.cost_model, Xq).mean
    return ei, cost


def eval_ei(ctx: AfContext, Xq: np.ndarray) -> BatchUtility:
    ei, cost = _ei_and_cost(ctx, Xq)
    return BatchUtility(ei, cost)


def eval_eipu(ctx: AfContext, Xq: np.ndarray) -> BatchUtility:
    ei, cost = _ei_and_cost(ctx, Xq)
    return BatchUtility(ei / np.maximum(COST_FLOOR, cost), cost)


def eval_eicool(ctx: AfContext, Xq: np.ndarray) -> BatchUtility:
    ei, cost = _ei_and_cost(ctx, Xq)
    a = ctx.cooling_alpha()
    if a == 1.0:
        return BatchUtility(ei / np.maximum(COST_FLOOR, cost), cost)
    if a == 0.0:
        return BatchUtility(ei, cost)
    return BatchUtility(ei / np.maximum(COST_FLOOR, cost) ** a, cost)


def min_distance(Xq: np.ndarray, train_x: np.ndarray) -> np.ndarray:
    """Euclidean distance from each query row to its nearest training row."""
    diffs = Xq[..., :, None, :] - train_x  # (..., m, t, d)
    return np.min(np.sqrt(np.sum(diffs * diffs, axis=-1)), axis=-1)


def evolcaf_terms(ctx: AfContext, Xq: np.ndarray):
    """Return ``(alpha1, alpha2, alpha3, cost)`` for a query batch.

    ``alpha3`` has the batch shape minus the point axis: one scalar per
    stacked copy.
    """
    Xq = np.asarray(Xq, dtype=float)
    if ctx.train_y.size < 2:
        raise InvalidContext("EvolCAF needs >= 2 observations for var(train_y)")
    var_y = float(np.var(ctx.train_y, ddof=1))
    if not var_y > 0:
        raise InvalidContext("train_y has zero variance")

    lead = Xq.shape[:-1]
    U, inv = unique_rows(Xq.reshape(-1, Xq.shape[-1]))
    post = gp.predict(ctx.obj_model, U)
    cost = gp.predict(ctx.cost_model, U).mean

    s2 = post.var + var_y
    s = np.sqrt(s2)
    diff = post.mean - ctx.best_y
    z = diff / s
    ei_mod = diff * normcdf(z) + s * normpdf(z)
    info = np.maximum(0.0, (np.log(s2) - np.log(var_y)) / 2.0)
    alpha1 = ei_mod * (1.0 - info)
    # The evolved code computes this term without gradient tracking; in a
    # stacked finite-difference batch every copy sees the reference value.

    alpha2 = -np.exp(-cost) * ctx.remaining_budget

    min_dist = min_distance(U, ctx.train_x)

    if inv is not None:
        alpha1, alpha2, cost, min_dist = (a[inv] for a in (alpha1, alpha2, cost, min_dist))
    alpha1, alpha2, cost, min_dist = (a.reshape(lead) for a in (alpha1, alpha2, cost, min_dist))
    if len(lead) > 1 and lead[0] > 1:
        alpha1 = np.broadcast_to(alpha1[:1], lead).copy()
    alpha3 = np.mean(min_dist, axis=-1)
    return alpha1, alpha2, alpha3, cost


def eval_evolcaf(
    ctx: AfContext,
    Xq: np.ndarray,
    comp: EvolcafComponents = EvolcafComponents(),
) -> BatchUtility:
    a1, a2, a3, cost = evolcaf_terms(ctx, Xq)
    values = np.zeros_like(a1)
    if comp.use_alpha1:
        values = values + a1
    if comp.use_alpha2:
        values = values + a2
    if comp.use_alpha3:
        values = values + a3[..., None]
    return BatchUtility(values, cost)


class _Builtin:
    def __init__(self, name: str, fn: Callable, pointwise: bool, **kwargs):
        self.name = name
        self._fn = fn
        self._kwargs = kwargs
        self.pointwise = pointwise

    def __call__(self, ctx: AfContext, Xq: np.ndarray) -> BatchUtility:
        return self._fn(ctx, Xq, **self._kwargs)

    def __repr__(self):
        return f"<acquisition {self.name}>"


def get_builtin(name: str, comp: Optional[EvolcafComponents] = None):
    """Look up a built-in AF by name (``ei``, ``eipu``, ``eicool``, ``evolcaf``)."""
    if name == "ei":
        return _Builtin("ei", eval_ei, True)
    if name == "eipu":
        return _Builtin("eipu", eval_eipu, True)
    if name == "eicool":
        return _Builtin("eicool", eval_eicool, True)
    if name == "evolcaf":
        comp = comp or EvolcafComponents()
        label = "evolcaf" if comp.mask == "111" else f"evolcaf:{comp.mask}"
        return _Builtin(label, eval_evolcaf, not comp.use_alpha3, comp=comp)
    raise NotSupported(f"unknown acquisition function {name!r}")
