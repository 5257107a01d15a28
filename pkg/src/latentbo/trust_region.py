"""Trust-region geometry and the doubling/halving side-length schedule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class TrustRegionConfig:
    length_init: float = 0.8
    length_min: float = 0.008
    length_max: float = 1.6
    succ_tol: int = 3
    fail_tol: int = 10

    def __post_init__(self):
        if not 0 < self.length_min < self.length_init <= self.length_max:
            raise InputError("trust region lengths must satisfy 0 < L_min < L_init <= L_max")
        if self.succ_tol < 1 or self.fail_tol < 1:
            raise InputError("success and failure tolerances must be at least 1")


@dataclass(frozen=True)
class TrustRegionState:
    length: float
    succ_count: int = 0
    fail_count: int = 0
    config: TrustRegionConfig = TrustRegionConfig()

    @classmethod
    def initial(cls, config: TrustRegionConfig | None = None) -> "TrustRegionState":
        config = config or TrustRegionConfig()
        return cls(config.length_init, 0, 0, config)


def update_schedule(state: TrustRegionState, improved: bool) -> TrustRegionState:
    cfg = state.config
    length = state.length
    if improved:
        succ, fail = state.succ_count + 1, 0
    else:
        succ, fail = 0, state.fail_count + 1
    if succ >= cfg.succ_tol:
        length, succ = min(2.0 * length, cfg.length_max), 0
    elif fail >= cfg.fail_tol:
        length, fail = length / 2.0, 0
    if length < cfg.length_min:
        length, succ, fail = cfg.length_init, 0, 0
    return replace(state, length=length, succ_count=succ, fail_count=fail)


def region_bounds(anchor, state: TrustRegionState, lengthscales=None, box=(-np.inf, np.inf), mode: str = "ard"):
    """Box of side ``state.length`` around ``anchor``, clipped to ``box``.

    In ``ard`` mode each half-width is scaled by lengthscale / mean(lengthscale).
    """
    anchor = np.asarray(anchor, dtype=float)
    half = np.full(anchor.shape, state.length / 2.0)
    if mode == "ard":
        if lengthscales is None:
            raise InputError("ard-weighted region needs lengthscales")
        ls = np.asarray(lengthscales, dtype=float)
        if ls.shape != anchor.shape:
            raise InputError(f"lengthscales shape {ls.shape} does not match anchor shape {anchor.shape}")
        half = half * ls / ls.mean()
    elif mode != "isotropic":
        raise InputError(f"unknown region mode {mode!r}")
    lo, hi = box
    return np.clip(anchor - half, lo, hi), np.clip(anchor + half, lo, hi)


def sample_candidates(bounds, n_cand: int, rng: np.random.Generator, center=None, perturb_prob: float = 1.0) -> np.ndarray:
    """Uniform points in the box.

    With ``perturb_prob < 1`` each candidate keeps ``center`` in every coordinate
    except a random subset (each coordinate with probability ``perturb_prob``,
    at least one), which helps trust-region search in high dimension.
    """
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    if np.any(lower > upper):
        raise InputError("lower bound exceeds upper bound")
    if not 0.0 < perturb_prob <= 1.0:
        raise InputError("perturb_prob must be in (0, 1]")
    u = rng.random((n_cand, lower.size))
    cand = lower + u * (upper - lower)
    if perturb_prob < 1.0:
        if center is None:
            raise InputError("a perturbation mask needs the region center")
        mask = rng.random(cand.shape) < perturb_prob
        empty = ~mask.any(axis=1)
        mask[np.flatnonzero(empty), rng.integers(lower.size, size=int(empty.sum()))] = True
        cand = np.where(mask, cand, np.asarray(center, dtype=float))
    return cand
