"""Exact Gaussian-process regression with an RBF-ARD kernel.

Targets are standardized before fitting; hyperparameters live in log space and
are fitted by gradient descent on the negative log marginal likelihood with
step halving, so the likelihood never gets worse across a fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import FactorizationError, InputError

LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-4, 1e4)
NOISE_BOUNDS = (1e-6, 1e1)
JITTER_LEVELS = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-2

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if ls.ndim != 1 or ls.size == 0 or np.any(~(ls > 0)):
            raise InputError("lengthscales must be a non-empty vector of positive reals")
        if not self.signal_variance > 0 or not self.noise_variance > 0:
            raise InputError("signal and noise variances must be positive")

    @classmethod
    def default(cls, dim: int, lengthscale: float = 1.0) -> "GpHyperparams":
        return cls(np.full(dim, float(lengthscale)), 1.0, 1e-2)

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        return np.log(np.concatenate([self.lengthscales, [self.signal_variance, self.noise_variance]]))

    @classmethod
    def from_log(cls, theta: np.ndarray) -> "GpHyperparams":
        theta = np.exp(np.asarray(theta, dtype=float))
        return cls(theta[:-2].copy(), float(theta[-2]), float(theta[-1]))


def _log_bounds(dim: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.log([LENGTHSCALE_BOUNDS[0]] * dim + [SIGNAL_BOUNDS[0], NOISE_BOUNDS[0]])
    hi = np.log([LENGTHSCALE_BOUNDS[1]] * dim + [SIGNAL_BOUNDS[1], NOISE_BOUNDS[1]])
    return lo, hi


def _as_points(a, dim: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None] if dim == 1 else a[None, :]
    if a.ndim != 2:
        raise InputError(f"expected a list of vectors, got array of shape {a.shape}")
    if dim is not None and a.shape[1] != dim:
        raise InputError(f"dimension mismatch: vectors have {a.shape[1]} entries, kernel expects {dim}")
    return a


def kernel_matrix(a, b, h: GpHyperparams) -> np.ndarray:
    """RBF-ARD covariance between the rows of ``a`` and ``b``."""
    a = _as_points(a, h.dim) / h.lengthscales
    b = _as_points(b, h.dim) / h.lengthscales
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    np.maximum(sq, 0.0, out=sq)
    return h.signal_variance * np.exp(-0.5 * sq)


def _cholesky(mat: np.ndarray, scale: float, bare_first: bool = True) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter relative to ``scale``."""
    if bare_first:
        try:
            return np.linalg.cholesky(mat), 0.0
        except np.linalg.LinAlgError:
            pass
    eye = np.eye(mat.shape[0])
    for level in JITTER_LEVELS:
        try:
            return np.linalg.cholesky(mat + level * scale * eye), level
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError(
        f"covariance not positive definite after jitter {JITTER_LEVELS[-1]:g} x signal variance",
        jitter=JITTER_LEVELS[-1],
    )


def negative_log_likelihood(theta, inputs, targets, with_grad=True):
    """NLL of (already standardized) ``targets`` and its gradient w.r.t. log-params."""
    h = GpHyperparams.from_log(theta)
    x = _as_points(inputs, h.dim)
    n = x.shape[0]
    kf = kernel_matrix(x, x, h)
    chol, _ = _cholesky(kf + h.noise_variance * np.eye(n), h.signal_variance)
    alpha = cho_solve((chol, True), targets)
    nll = 0.5 * targets @ alpha + np.log(np.diag(chol)).sum() + 0.5 * n * math.log(2 * math.pi)
    if not with_grad:
        return float(nll), None
    w = np.outer(alpha, alpha) - cho_solve((chol, True), np.eye(n))
    a = w * kf
    xs = x / h.lengthscales
    row = a.sum(1)
    quad = 2.0 * (xs**2).T @ row - 2.0 * (xs * (a @ xs)).sum(0)
    grad = np.empty(h.dim + 2)
    grad[: h.dim] = -0.5 * quad
    grad[h.dim] = -0.5 * a.sum()
    grad[h.dim + 1] = -0.5 * h.noise_variance * np.trace(w)
    return float(nll), grad


@dataclass(frozen=True)
class GpModel:
    hyperparams: GpHyperparams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol_factor: np.ndarray
    alpha: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    jitter: float = 0.0
    nll_trace: tuple = field(default=(), compare=False)

    @property
    def dim(self) -> int:
        return self.hyperparams.dim


def _standardize(targets: np.ndarray) -> tuple[np.ndarray, float, float]:
    mean = float(targets.mean())
    std = float(targets.std())
    if not std > 1e-12:
        std = 1.0
    return (targets - mean) / std, mean, std


def _build(h, x, y_raw) -> GpModel:
    ys, mean, std = _standardize(y_raw)
    n = x.shape[0]
    chol, jitter = _cholesky(kernel_matrix(x, x, h) + h.noise_variance * np.eye(n), h.signal_variance)
    alpha = cho_solve((chol, True), ys)
    return GpModel(h, x, y_raw, chol, alpha, mean, std, jitter)


def fit_gp(inputs, targets, init: GpHyperparams | None = None, steps: int = 100, lr: float = 0.1) -> GpModel:
    """Fit hyperparameters by descent on the mean NLL and cache the factorization.

    A step that raises the NLL (or breaks the factorization) is halved up to
    ten times and otherwise abandoned, which ends the fit early.
    """
    y = np.asarray(targets, dtype=float).ravel()
    x = _as_points(inputs, init.dim if init is not None else None)
    if x.shape[0] < 2 or x.shape[0] != y.size:
        raise InputError("fit_gp needs at least two points and one target per input")
    if init is None:
        init = GpHyperparams.default(x.shape[1])
    ys, _, _ = _standardize(y)
    lo, hi = _log_bounds(init.dim)
    theta = np.clip(init.to_log(), lo, hi)
    n = x.shape[0]
    nll, grad = negative_log_likelihood(theta, x, ys)
    trace = [nll]
    for _ in range(steps):
        step = lr * grad / n
        accepted = False
        for _ in range(10):
            cand = np.clip(theta - step, lo, hi)
            if np.array_equal(cand, theta):
                break
            try:
                cand_nll, cand_grad = negative_log_likelihood(cand, x, ys)
            except FactorizationError:
                cand_nll = math.inf
            if cand_nll <= nll:
                theta, nll, grad, accepted = cand, cand_nll, cand_grad, True
                break
            step = 0.5 * step
        if not accepted:
            break
        trace.append(nll)
    model = _build(GpHyperparams.from_log(theta), x, y)
    return replace(model, nll_trace=tuple(trace))


def posterior(model: GpModel, query) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance on the original target scale."""
    q = _as_points(query, model.dim)
    h = model.hyperparams
    ks = kernel_matrix(model.train_inputs, q, h)
    mean = ks.T @ model.alpha
    v = solve_triangular(model.chol_factor, ks, lower=True)
    var = np.maximum(h.signal_variance - (v * v).sum(0), 0.0)
    return model.y_mean + model.y_std * mean, model.y_std**2 * var


def posterior_covariance(model: GpModel, query) -> tuple[np.ndarray, np.ndarray]:
    q = _as_points(query, model.dim)
    h = model.hyperparams
    ks = kernel_matrix(model.train_inputs, q, h)
    mean = ks.T @ model.alpha
    v = solve_triangular(model.chol_factor, ks, lower=True)
    cov = kernel_matrix(q, q, h) - v.T @ v
    cov = 0.5 * (cov + cov.T)
    return model.y_mean + model.y_std * mean, model.y_std**2 * cov


def thompson_sample(model: GpModel, candidates, rng: np.random.Generator) -> np.ndarray:
    """One joint posterior draw over ``candidates``."""
    q = _as_points(candidates, model.dim)
    if q.shape[0] == 0:
        raise InputError("candidate set is empty")
    mean, cov = posterior_covariance(model, q)
    scale = model.hyperparams.signal_variance * model.y_std**2
    # candidate covariances are usually rank deficient, so start at the first jitter level
    chol, _ = _cholesky(cov, scale, bare_first=False)
    return mean + chol @ rng.standard_normal(q.shape[0])
