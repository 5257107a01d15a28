"""Trust-region anchor selection: potential-aware scoring and baseline policies."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gp import GpModel, thompson_sample
from .trust_region import TrustRegionState, region_bounds, sample_candidates

POLICIES = ("pas", "objective", "acquisition", "random")


@dataclass(frozen=True)
class AnchorScores:
    y: np.ndarray
    alpha_pot: np.ndarray
    alpha_scaled: np.ndarray
    s: np.ndarray


def _region_seeds(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    # one child stream per region keeps results independent of evaluation order
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(rng.integers(2**63))).spawn(n)]


def potential_scores(
    anchors,
    model: GpModel,
    tr: TrustRegionState,
    n_cand: int,
    rng: np.random.Generator,
    box=(-np.inf, np.inf),
    region_mode: str = "ard",
    workers: int = 1,
    perturb_prob: float = 1.0,
) -> np.ndarray:
    """Max of one Thompson draw over ``n_cand`` points in the region around each anchor."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    streams = _region_seeds(rng, anchors.shape[0])
    ls = model.hyperparams.lengthscales

    def score(i):
        bounds = region_bounds(anchors[i], tr, ls, box, region_mode)
        cand = sample_candidates(bounds, n_cand, streams[i], anchors[i], perturb_prob)
        return float(np.max(thompson_sample(model, cand, streams[i])))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return np.array(list(pool.map(score, range(anchors.shape[0]))))
    return np.array([score(i) for i in range(anchors.shape[0])])


def scale_scores(alpha_pot, y) -> np.ndarray:
    """Min-max rescale potential scores onto the spread of observed scores."""
    a = np.asarray(alpha_pot, dtype=float)
    y = np.asarray(y, dtype=float)
    a_span = a.max() - a.min()
    y_span = y.max() - y.min()
    if not a_span > 0 or not y_span > 0:
        return np.zeros_like(a)
    return np.clip((a - a.min()) / a_span, 0.0, 1.0) * y_span


def final_scores(y, alpha_scaled) -> np.ndarray:
    return np.asarray(y, dtype=float) + np.asarray(alpha_scaled, dtype=float)


def pas_scores(y, alpha_pot) -> AnchorScores:
    y = np.asarray(y, dtype=float)
    alpha_pot = np.asarray(alpha_pot, dtype=float)
    scaled = scale_scores(alpha_pot, y)
    return AnchorScores(y, alpha_pot, scaled, final_scores(y, scaled))


def select_anchor(
    anchors,
    y,
    model: GpModel | None,
    tr: TrustRegionState,
    policy: str,
    n_cand: int,
    rng: np.random.Generator,
    box=(-np.inf, np.inf),
    region_mode: str = "ard",
    workers: int = 1,
    perturb_prob: float = 1.0,
) -> int:
    """Index of the chosen anchor; ties go to the lowest index (``np.argmax``)."""
    y = np.asarray(y, dtype=float)
    if policy not in POLICIES:
        raise ValueError(f"unknown anchor policy {policy!r}; expected one of {POLICIES}")
    if y.size == 1:
        return 0
    if policy == "objective":
        return int(np.argmax(y))
    if policy == "random":
        return int(rng.integers(y.size))
    alpha = potential_scores(anchors, model, tr, n_cand, rng, box, region_mode, workers, perturb_prob)
    if policy == "acquisition":
        return int(np.argmax(alpha))
    return int(np.argmax(pas_scores(y, alpha).s))
