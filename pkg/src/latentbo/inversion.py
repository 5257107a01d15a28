"""Decoder inversion, the normalized edit distance it targets, and recentering.

Inversion starts from the encoder mean and descends the decoder's token
cross-entropy in latent space until the argmax decode reproduces the target.
It never touches the objective. Recentering, the costlier alternative, spends
one oracle call per triplet.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

from .errors import InversionError
from .vae import VaeParams, as_tokens, decode_argmax, encode, grad_wrt_latent, unpadded

if TYPE_CHECKING:
    from .benchmarks import MeteredOracle
    from .engine import Triplet

ALIGN_MODES = ("inversion", "recentering", "encoder_only")


@lru_cache(maxsize=200_000)
def _edit_distance(a: tuple, b: tuple) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ta in enumerate(a, 1):
        cur = [i]
        for j, tb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ta != tb)))
        prev = cur
    return prev[-1]


def edit_distance(a, b) -> int:
    """Levenshtein distance between the unpadded prefixes of two token sequences."""
    return _edit_distance(unpadded(a), unpadded(b))


def normalized_levenshtein(a, b) -> float:
    a, b = unpadded(a), unpadded(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return _edit_distance(a, b) / longest


@dataclass(frozen=True)
class InversionResult:
    z_inv: np.ndarray
    final_distance: float
    iterations_used: int
    converged: bool


def invert_batch(
    vae: VaeParams,
    targets,
    steps: int = 1000,
    lr: float = 0.1,
    eps: float = 1e-9,
    distance=normalized_levenshtein,
) -> list[InversionResult]:
    """Invert several targets at once; rows stop independently once converged.

    Each row keeps its best-so-far iterate, so the returned distance is never
    worse than the encoder initialization.
    """
    x = as_tokens(targets, vae.dims)
    z, _ = encode(vae, x)
    z = np.array(z, dtype=float)
    n = x.shape[0]
    decoded = decode_argmax(vae, z)
    dist = np.array([distance(x[i], decoded[i]) for i in range(n)])
    best_z, best_d = z.copy(), dist.copy()
    iters = np.zeros(n, dtype=int)
    active = best_d >= eps
    for t in range(1, steps + 1):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        grad = grad_wrt_latent(vae, z[idx], x[idx])
        if not np.all(np.isfinite(grad)):
            raise InversionError(f"non-finite latent gradient at step {t}", step=t)
        z[idx] -= lr * grad
        iters[idx] = t
        new = decode_argmax(vae, z[idx])
        for k, i in enumerate(idx):
            if np.array_equal(new[k], decoded[i]):
                continue
            decoded[i] = new[k]
            d = distance(x[i], new[k])
            if d < best_d[i]:
                best_d[i], best_z[i] = d, z[i].copy()
            if d < eps:
                active[i] = False
    return [InversionResult(best_z[i].copy(), float(best_d[i]), int(iters[i]), bool(best_d[i] < eps)) for i in range(n)]


def invert(vae: VaeParams, x, steps: int = 1000, lr: float = 0.1, eps: float = 1e-9, distance=normalized_levenshtein) -> InversionResult:
    return invert_batch(vae, np.atleast_2d(x), steps, lr, eps, distance)[0]


def recenter(vae: VaeParams, triplet: "Triplet", oracle: "MeteredOracle", phase: str = "recenter") -> "Triplet":
    """Re-decode the encoder mean of ``triplet.x`` and pay one oracle call to score it."""
    from .engine import Triplet

    oracle.require(1)
    z, _ = encode(vae, triplet.x)
    x_new = decode_argmax(vae, z)
    y_new = oracle(x_new, phase=phase)
    return Triplet(x_new, np.asarray(z, dtype=float), y_new, True)


def align_dataset(
    vae: VaeParams,
    dataset: list,
    mode: str,
    steps: int = 1000,
    lr: float = 0.1,
    eps: float = 1e-9,
    oracle: "MeteredOracle | None" = None,
) -> list:
    if mode not in ALIGN_MODES:
        raise ValueError(f"unknown align mode {mode!r}; expected one of {ALIGN_MODES}")
    if not dataset:
        return []
    if mode == "recentering":
        if oracle is None:
            raise ValueError("recentering needs an oracle")
        oracle.require(len(dataset))
        return [recenter(vae, t, oracle) for t in dataset]
    xs = np.stack([t.x for t in dataset])
    if mode == "inversion":
        results = invert_batch(vae, xs, steps, lr, eps)
        return [replace(t, z=r.z_inv, aligned=r.converged) for t, r in zip(dataset, results)]
    mu, _ = encode(vae, xs)
    decoded = decode_argmax(vae, mu)
    return [
        replace(t, z=mu[i].copy(), aligned=normalized_levenshtein(t.x, decoded[i]) == 0)
        for i, t in enumerate(dataset)
    ]
