"""Exact Gaussian-process regression for the objective and cost surrogates.

Hyperparameters (ARD lengthscales, signal variance, noise variance) are fit
by maximizing the log marginal likelihood with multi-restart L-BFGS-B over
log-parameters. Outputs are standardized before fitting and inputs are
optionally mapped to the unit cube; :func:`predict` undoes both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .errors import InvalidData, NumericalFailure, ShapeError

KernelFamily = Literal["matern52-ard", "rbf-ard"]

JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

# log-space boxes for hyperopt (unit-cube inputs, standardized outputs)
LENGTHSCALE_BOUNDS = (1e-2, 1e1)
SIGNAL_VAR_BOUNDS = (5e-2, 2e1)
NOISE_VAR_MAX = 0.5

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GpConfig:
    kernel_family: KernelFamily = "matern52-ard"
    noise_floor: float = 1e-6
    standardize_outputs: bool = True
    normalize_inputs: bool = True
    hyperopt_restarts: int = 5
    hyperopt_max_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.noise_floor > 0:
            raise ValueError("noise_floor must be positive")
        if self.hyperopt_restarts < 1:
            raise ValueError("hyperopt_restarts must be >= 1")
        if self.kernel_family not in ("matern52-ard", "rbf-ard"):
            raise ValueError(f"unknown kernel family {self.kernel_family!r}")


@dataclass(frozen=True)
class GpModel:
    """A fitted GP. Immutable; ``train_x``/``train_y`` are in model space."""

    train_x: np.ndarray
    train_y: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    kernel_family: KernelFamily = "matern52-ard"
    x_lower: Optional[np.ndarray] = None
    x_upper: Optional[np.ndarray] = None
    lml: float = field(default=float("nan"))

    @property
    def dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def n(self) -> int:
        return self.train_x.shape[0]

    def to_model_space(self, X: np.ndarray) -> np.ndarray:
        if self.x_lower is None:
            return X
        return (X - self.x_lower) / (self.x_upper - self.x_lower)


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    var: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def kernel(
    A: np.ndarray,
    B: np.ndarray,
    lengthscales: np.ndarray,
    signal_var: float,
    family: KernelFamily = "matern52-ard",
) -> np.ndarray:
    """Cross-covariance matrix between the rows of ``A`` and ``B``."""
    As = A / lengthscales
    Bs = B / lengthscales
    sq = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2.0 * As @ Bs.T
    )
    np.maximum(sq, 0.0, out=sq)
    return _kernel_from_sq(sq, signal_var, family)


def _kernel_from_sq(sq, signal_var, family):
    if family == "rbf-ard":
        return signal_var * np.exp(-0.5 * sq)
    r5 = np.sqrt(5.0 * sq)
    return signal_var * (1.0 + r5 + (5.0 / 3.0) * sq) * np.exp(-r5)


def _cholesky(K: np.ndarray, noise_var: float) -> tuple[np.ndarray, float]:
    n = K.shape[0]
    eye = np.eye(n)
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(K + (noise_var + jitter) * eye)
        except np.linalg.LinAlgError:
            continue
        return L, noise_var + jitter
    raise NumericalFailure(
        f"Cholesky failed after jitter escalation to {JITTER_LADDER[-1]:g}"
    )


def _lml_from_parts(L: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    n = y.shape[0]
    return float(
        -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI
    )


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ShapeError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if X.shape[0] < 1:
        raise InvalidData("need at least one training point")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidData("training data contains non-finite values")
    return X, y


def fit(
    X: np.ndarray,
    y: np.ndarray,
    config: GpConfig = GpConfig(),
    bounds: Optional[np.ndarray] = None,
) -> GpModel:
    """Fit a GP with hyperparameters chosen by multi-restart MLE.

    ``bounds`` is a ``(d, 2)`` array of box limits used for input
    normalization; without it the inputs are taken to be in model space
    already.
    """
    X, y = _validate_xy(X, y)
    n, d = X.shape

    lower = upper = None
    if config.normalize_inputs and bounds is not None:
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (d, 2):
            raise ShapeError(f"bounds must have shape ({d}, 2)")
        lower, upper = bounds[:, 0].copy(), bounds[:, 1].copy()
        X = (X - lower) / (upper - lower)

    if config.standardize_outputs:
        y_mean = float(np.mean(y))
        y_std = float(np.std(y)) if n > 1 else 0.0
        if not y_std > 1e-12 * max(1.0, abs(y_mean)):
            y_std = 1.0
    else:
        y_mean, y_std = 0.0, 1.0
    ys = (y - y_mean) / y_std

    diffs_sq = (X[:, None, :] - X[None, :, :]) ** 2  # (n, n, d)
    floor = config.noise_floor
    lo = np.log(
        np.r_[np.full(d, LENGTHSCALE_BOUNDS[0]), SIGNAL_VAR_BOUNDS[0], floor]
    )
    hi = np.log(
        np.r_[
            np.full(d, LENGTHSCALE_BOUNDS[1]),
            SIGNAL_VAR_BOUNDS[1],
            max(NOISE_VAR_MAX, 10 * floor),
        ]
    )

    eye = np.eye(n)
    n_par = d + 2
    step = 1e-6
    # row 0: theta itself; rows 2k+1 / 2k+2: theta -/+ step along axis k
    offsets = np.zeros((2 * n_par + 1, n_par))
    for k in range(n_par):
        offsets[2 * k + 1, k] = -step
        offsets[2 * k + 2, k] = step

    def batch_neg_lml(thetas):
        ls = np.exp(thetas[:, :d])
        sf2 = np.exp(thetas[:, d])
        noise = np.exp(thetas[:, d + 1])
        sq = np.einsum("ijk,bk->bij", diffs_sq, 1.0 / ls**2)
        if config.kernel_family == "rbf-ard":
            K = sf2[:, None, None] * np.exp(-0.5 * sq)
        else:
            r5 = np.sqrt(5.0 * sq)
            K = sf2[:, None, None] * (1.0 + r5 + (5.0 / 3.0) * sq) * np.exp(-r5)
        K = K + noise[:, None, None] * eye
        out = np.full(len(thetas), np.inf)
        try:
            L = np.linalg.cholesky(K)
            ok = np.ones(len(thetas), dtype=bool)
        except np.linalg.LinAlgError:
            L = np.zeros_like(K)
            ok = np.zeros(len(thetas), dtype=bool)
            for b in range(len(thetas)):
                try:
                    L[b] = np.linalg.cholesky(K[b])
                    ok[b] = True
                except np.linalg.LinAlgError:
                    pass
        good = np.flatnonzero(ok)
        Lg = L[good]
        alpha = np.linalg.solve(K[good], np.broadcast_to(ys, (len(good), n))[..., None])[..., 0]
        logdet = np.sum(np.log(np.diagonal(Lg, axis1=1, axis2=2)), axis=1)
        out[good] = 0.5 * alpha @ ys + logdet + 0.5 * n * _LOG_2PI
        return out

    def neg_lml_and_grad(theta):
        vals = batch_neg_lml(theta + offsets)
        f0 = vals[0]
        if not np.isfinite(f0):
            return 1e25, np.zeros(n_par)
        lo_v, hi_v = vals[1::2], vals[2::2]
        grad = np.where(
            np.isfinite(lo_v) & np.isfinite(hi_v),
            (hi_v - lo_v) / (2 * step),
            np.where(np.isfinite(hi_v), (hi_v - f0) / step, (f0 - lo_v) / step),
        )
        grad = np.where(np.isfinite(grad), grad, 0.0)
        return float(f0), grad

    rng = np.random.default_rng(config.seed)
    starts = [
        np.clip(
            np.log(np.r_[np.full(d, 0.3), 1.0, max(1e-3, floor)]), lo, hi
        )
    ]
    for _ in range(config.hyperopt_restarts - 1):
        starts.append(rng.uniform(lo, hi))

    best_theta, best_val = starts[0], neg_lml_and_grad(starts[0])[0]
    for theta0 in starts:
        res = minimize(
            neg_lml_and_grad,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": config.hyperopt_max_iters},
        )
        if res.fun < best_val:
            best_theta, best_val = res.x, float(res.fun)

    return build_model(
        X,
        ys,
        lengthscales=np.exp(best_theta[:d]),
        signal_var=math.exp(best_theta[d]),
        noise_var=max(math.exp(best_theta[d + 1]), floor),
        y_mean=y_mean,
        y_std=y_std,
        kernel_family=config.kernel_family,
        x_lower=lower,
        x_upper=upper,
    )


def build_model(
    X: np.ndarray,
    ys: np.ndarray,
    lengthscales,
    signal_var: float,
    noise_var: float,
    y_mean: float = 0.0,
    y_std: float = 1.0,
    kernel_family: KernelFamily = "matern52-ard",
    x_lower=None,
    x_upper=None,
) -> GpModel:
    """Assemble a model from fixed hyperparameters (model-space data)."""
    X = np.asarray(X, dtype=float)
    ys = np.asarray(ys, dtype=float).ravel()
    ls = np.broadcast_to(np.asarray(lengthscales, dtype=float), (X.shape[1],)).copy()
    if np.any(ls <= 0):
        raise InvalidData("lengthscales must be positive")
    K = kernel(X, X, ls, signal_var, kernel_family)
    L, noise_eff = _cholesky(K, noise_var)
    alpha = cho_solve((L, True), ys)
    return GpModel(
        train_x=X,
        train_y=ys,
        lengthscales=ls,
        signal_var=float(signal_var),
        noise_var=float(noise_eff),
        chol=L,
        alpha=alpha,
        y_mean=float(y_mean),
        y_std=float(y_std),
        kernel_family=kernel_family,
        x_lower=x_lower,
        x_upper=x_upper,
        lml=_lml_from_parts(L, ys, alpha),
    )


def predict(model: GpModel, Xq: np.ndarray) -> Posterior:
    """Posterior mean and variance at ``Xq`` in original output units."""
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1 and Xq.size == 0:
        Xq = Xq.reshape(0, model.dim)
    if Xq.ndim != 2 or Xq.shape[1] != model.dim:
        raise ShapeError(
            f"query must have shape (m, {model.dim}), got {Xq.shape}"
        )
    if Xq.shape[0] == 0:
        return Posterior(np.empty(0), np.empty(0))
    Z = model.to_model_space(Xq)
    Kq = kernel(Z, model.train_x, model.lengthscales, model.signal_var,
                model.kernel_family)
    mean_s = Kq @ model.alpha
    v = solve_triangular(model.chol, Kq.T, lower=True, check_finite=False)
    var_s = model.signal_var - np.sum(v * v, axis=0)
    np.maximum(var_s, 0.0, out=var_s)
    return Posterior(
        mean=mean_s * model.y_std + model.y_mean,
        var=var_s * model.y_std**2,
    )


def log_marginal_likelihood(model: GpModel) -> float:
    """LML of the standardized training targets under the fitted model."""
    return _lml_from_parts(model.chol, model.train_y, model.alpha)
