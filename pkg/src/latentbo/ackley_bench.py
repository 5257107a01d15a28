"""Trust-region BO directly on Ackley (no VAE), with objective or PAS anchors.

Inputs are searched in the unit cube and mapped affinely onto
[-32.768, 32.768]^d. The engine maximizes -ackley; curves report the minimum
Ackley value found so far.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .anchors import select_anchor
from .benchmarks import ACKLEY_BOUND, MeteredOracle, ackley
from .errors import ConfigError
from .gp import GpHyperparams, fit_gp, thompson_sample
from .trust_region import TrustRegionConfig, TrustRegionState, region_bounds, sample_candidates, update_schedule

log = logging.getLogger(__name__)

POLICY_ANCHORS = {"turbo": "objective", "turbo_pas": "pas"}
WORKERS_ENV = "LATENTBO_WORKERS"


@dataclass(frozen=True)
class AckleyBenchConfig:
    dim: int = 40
    budget: int = 1000
    n_init: int = 80
    batch_size: int = 10
    top_k: int = 10
    n_cand: int = 512
    gp_steps_init: int = 100
    gp_steps: int = 10
    gp_lr: float = 0.1
    lengthscale_init: float = 1.0
    perturb_prob: float = 0.0  # 0 means min(20 / dim, 1)
    tr: TrustRegionConfig = TrustRegionConfig()

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dimension must be at least 1", key="dim")
        if self.n_init < 2 or self.budget < self.n_init:
            raise ConfigError("need 2 <= n_init <= budget", key="budget")
        if not 0.0 <= self.perturb_prob <= 1.0:
            raise ConfigError("perturb_prob must be in [0, 1]", key="perturb_prob")

    @property
    def mask_prob(self) -> float:
        return self.perturb_prob or min(20.0 / self.dim, 1.0)


def to_ackley_box(u: np.ndarray) -> np.ndarray:
    return np.clip(-ACKLEY_BOUND + 2.0 * ACKLEY_BOUND * u, -ACKLEY_BOUND, ACKLEY_BOUND)


def initial_design(cfg: AckleyBenchConfig, seed: int) -> np.ndarray:
    """Scrambled Sobol points in the unit cube; shared by every policy for a seed."""
    with warnings.catch_warnings():
        # n_init need not be a power of two; the balance warning is expected
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(cfg.dim, scramble=True, seed=seed).random(cfg.n_init)


def run_ackley(policy: str, seed: int, cfg: AckleyBenchConfig = AckleyBenchConfig()) -> np.ndarray:
    """Best-so-far (minimum) Ackley value after each oracle call."""
    if policy not in POLICY_ANCHORS:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {tuple(POLICY_ANCHORS)}", key="policy")
    oracle = MeteredOracle(lambda u: ackley(to_ackley_box(u)), cfg.budget, "ackley")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    u = initial_design(cfg, seed)
    y = np.array([-oracle(p) for p in u])
    tr = TrustRegionState.initial(cfg.tr)
    hyper = GpHyperparams.default(cfg.dim, cfg.lengthscale_init)
    steps = cfg.gp_steps_init
    while oracle.remaining > 0:
        model = fit_gp(u, y, hyper, steps, cfg.gp_lr)
        hyper, steps = model.hyperparams, cfg.gp_steps
        top = np.argsort(-y, kind="stable")[: cfg.top_k]
        pick = select_anchor(
            u[top], y[top], model, tr, POLICY_ANCHORS[policy], cfg.n_cand, rng, box=(0.0, 1.0),
            perturb_prob=cfg.mask_prob,
        )
        bounds = region_bounds(u[top[pick]], tr, hyper.lengthscales, (0.0, 1.0))
        n_q = min(cfg.batch_size, oracle.remaining)
        cand = sample_candidates(bounds, max(cfg.n_cand, n_q), rng, u[top[pick]], cfg.mask_prob)
        sample = thompson_sample(model, cand, rng)
        new_u = cand[np.argsort(-sample, kind="stable")[:n_q]]
        new_y = np.array([-oracle(p) for p in new_u])
        tr = update_schedule(tr, bool(new_y.max() > y.max()))
        u, y = np.vstack([u, new_u]), np.concatenate([y, new_y])
    return np.minimum.accumulate(-y)


def _one(args):
    policy, seed, cfg = args
    return policy, seed, run_ackley(policy, seed, cfg)


def run_matrix(policies, seeds, cfg: AckleyBenchConfig = AckleyBenchConfig(), workers: int | None = None) -> dict:
    """``{(policy, seed): curve}``; results are gathered in (policy, seed) order."""
    jobs = [(p, s, cfg) for p in policies for s in seeds]
    workers = workers or int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_one, jobs))
    else:
        out = []
        for job in jobs:
            out.append(_one(job))
            log.info("ackley run done", extra={"policy": job[0], "seed": job[1], "best": float(out[-1][2][-1])})
    return {(p, s): c for p, s, c in out}


def per_seed_csv(curves: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("policy", "seed", "call_index", "best_so_far"))
    for (policy, seed), curve in sorted(curves.items()):
        for i, v in enumerate(curve, 1):
            w.writerow((policy, seed, i, repr(float(v))))
    return buf.getvalue()


def aggregate(curves: dict) -> dict:
    """``{policy: (mean, std)}`` over seeds, per call index."""
    out = {}
    for policy in sorted({p for p, _ in curves}):
        stack = np.stack([c for (p, _), c in sorted(curves.items()) if p == policy])
        out[policy] = (stack.mean(0), stack.std(0))
    return out


def aggregate_csv(curves: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("policy", "call_index", "mean_best", "std_best", "n_seeds"))
    n = {p: sum(1 for q, _ in curves if q == p) for p, _ in curves}
    for policy, (mean, std) in aggregate(curves).items():
        for i in range(mean.size):
            w.writerow((policy, i + 1, repr(float(mean[i])), repr(float(std[i])), n[policy]))
    return buf.getvalue()
