"""Empirical checks of the surrogate error bound and of triplet misalignment.

``check_bound`` splits the error of the GP mean against the decoded objective
around an anchor into three Lipschitz pieces (objective in sequence space, GP
mean in latent space, decoded objective in latent space) plus the error at the
anchor itself. The Lipschitz constants are estimated from sampled pairs and
are therefore lower bounds, so a reported violation means either a spike the
samples missed or a genuinely failing premise. It is a diagnostic, not a proof.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError, NumericalError
from .gp import GpHyperparams, GpModel, fit_gp, posterior
from .inversion import invert_batch, normalized_levenshtein
from .vae import VaeParams, as_tokens, decode_argmax, encode, unpadded

# relative slack when comparing the two sides, so equal quantities computed
# through different BLAS paths do not register as violations
BOUND_RTOL = 1e-12


class LipschitzError(NumericalError):
    """Every sampled pair had zero distance, so no ratio exists."""


def estimate_lipschitz(fn, pairs, metric) -> float:
    """Largest observed ``|fn(a) - fn(b)| / metric(a, b)`` over ``pairs``.

    Coincident pairs are skipped. The value is an empirical lower bound on
    the true constant.
    """
    best = None
    for a, b in pairs:
        d = float(metric(a, b))
        if d <= 0.0:
            continue
        ratio = abs(float(fn(a)) - float(fn(b))) / d
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise LipschitzError("all sampled pairs coincide; the Lipschitz ratio is undefined")
    return best


def euclidean(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def sample_ball(center, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform in the Euclidean ball around ``center``."""
    center = np.asarray(center, dtype=float)
    d = center.size
    if radius <= 0.0:
        return np.repeat(center[None, :], n, axis=0)
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return center + direction * r[:, None]


@dataclass(frozen=True)
class BoundReport:
    c: float
    gamma: float
    delta: float
    L1: float
    L2: float
    L3: float
    samples: int
    violations: int
    violation_rate: float
    margin_min: float
    margin_mean: float
    margin_max: float
    mean_error: float
    boundary_crossings: int
    rows: tuple = field(default=(), repr=False)

    @property
    def rhs(self) -> float:
        return self.c + self.gamma * self.L1 + self.delta * (self.L2 + self.L3)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        out["rhs"] = self.rhs
        return out

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("sample", "dist_z", "error", "bound", "margin", "violated", "decode_changed"))
        for i, (dz, err, margin, changed) in enumerate(self.rows):
            w.writerow((i, repr(dz), repr(err), repr(self.rhs), repr(margin), int(margin < 0), int(changed)))
        return buf.getvalue()

    def summary_text(self) -> str:
        s = self.summary()
        width = max(len(k) for k in s)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in s.items()) + "\n"


def _mean(model: GpModel, z) -> np.ndarray:
    return posterior(model, np.atleast_2d(z))[0]


def check_bound(
    vae: VaeParams,
    gp: GpModel,
    score,
    anchor,
    delta: float,
    n_samples: int,
    rng: np.random.Generator,
    n_pairs: int = 10_000,
) -> BoundReport:
    """Test ``|f(decode(z')) - m(z')| <= c + gamma*L1 + delta*(L2 + L3)`` on samples ``z'``.

    ``anchor`` is a triplet-like object with ``x``, ``z`` and ``y``. ``c`` and
    ``gamma`` are measured at the anchor; the constants come from ``n_pairs``
    pairs drawn independently of the tested samples, uniform in the same ball.
    With ``delta = 0`` the latent terms vanish and their constants are reported
    as 0.
    """
    if delta < 0 or n_samples < 1:
        raise InputError("delta must be non-negative and n_samples positive")
    x = as_tokens(anchor.x, vae.dims)[0]
    z = np.asarray(anchor.z, dtype=float)
    decoded_anchor = decode_argmax(vae, z)
    c = abs(float(anchor.y) - float(_mean(gp, z)[0]))
    gamma = normalized_levenshtein(x, decoded_anchor)

    f_cache: dict = {}

    def f(seq):
        key = tuple(int(t) for t in seq)
        if key not in f_cache:
            f_cache[key] = float(score(np.asarray(seq)))
        return f_cache[key]

    if delta > 0:
        a = sample_ball(z, delta, n_pairs, rng)
        b = sample_ball(z, delta, n_pairs, rng)
        ma, mb = _mean(gp, a), _mean(gp, b)
        da, db = decode_argmax(vae, a), decode_argmax(vae, b)
        dist = np.linalg.norm(a - b, axis=1)
        ok = dist > 0
        if not ok.any():
            raise LipschitzError("all sampled latent pairs coincide")
        L2 = float(np.max(np.abs(ma - mb)[ok] / dist[ok]))
        fa = np.array([f(s) for s in da])
        fb = np.array([f(s) for s in db])
        L3 = float(np.max(np.abs(fa - fb)[ok] / dist[ok]))
        seq_pairs = [(x, decoded_anchor)] + list(zip(da, db))
    else:
        L2 = L3 = 0.0
        seq_pairs = [(x, decoded_anchor)]
    try:
        L1 = estimate_lipschitz(f, seq_pairs, normalized_levenshtein)
    except LipschitzError:
        # every sampled sequence equals the anchor's: gamma is 0 and L1 has no bite
        L1 = 0.0

    zs = sample_ball(z, delta, n_samples, rng)
    decoded = decode_argmax(vae, zs)
    errors = np.abs(np.array([f(s) for s in decoded]) - _mean(gp, zs))
    rhs = c + gamma * L1 + delta * (L2 + L3)
    margins = rhs - errors
    tol = BOUND_RTOL * max(1.0, abs(rhs))
    violated = margins < -tol
    margins = np.where(violated, margins, np.maximum(margins, 0.0))
    changed = np.array([not np.array_equal(s, decoded_anchor) for s in decoded])
    dz = np.linalg.norm(zs - z, axis=1)
    rows = tuple(zip(dz.tolist(), errors.tolist(), margins.tolist(), changed.tolist()))
    n_viol = int(violated.sum())
    return BoundReport(
        c=c, gamma=gamma, delta=float(delta), L1=L1, L2=L2, L3=L3,
        samples=n_samples, violations=n_viol, violation_rate=n_viol / n_samples,
        margin_min=float(margins.min()), margin_mean=float(margins.mean()), margin_max=float(margins.max()),
        mean_error=float(errors.mean()), boundary_crossings=int(changed.sum()), rows=rows,
    )


@dataclass(frozen=True)
class AnchorPair:
    """Bound reports around the same sequence, anchored by inversion and by the encoder."""

    inversion: BoundReport
    encoder: BoundReport


def _fit(z, y, steps: int, lr: float) -> GpModel:
    return fit_gp(z, y, GpHyperparams.default(z.shape[1]), steps, lr)


def paired_anchor_check(
    vae: VaeParams,
    sequences,
    score,
    rng: np.random.Generator,
    delta: float = 0.5,
    n_samples: int = 200,
    n_pairs: int = 10_000,
    gp_steps: int = 100,
    gp_lr: float = 0.1,
    inv_steps: int = 1000,
    inv_lr: float = 0.1,
    inv_eps: float = 1e-9,
) -> AnchorPair:
    """Fit one GP on inverted latents and one on encoder means, anchor each at
    the best-scoring sequence, and run ``check_bound`` on both with a shared stream.
    """
    from .engine import Triplet

    x = as_tokens(sequences, vae.dims)
    y = np.array([float(score(s)) for s in x])
    mu, _ = encode(vae, x)
    z_inv = np.stack([r.z_inv for r in invert_batch(vae, x, inv_steps, inv_lr, inv_eps)])
    best = int(np.argmax(y))
    seed = rng.integers(2**63)
    reports = []
    for z in (z_inv, mu):
        gp = _fit(z, y, gp_steps, gp_lr)
        anchor = Triplet(x[best], z[best], y[best])
        reports.append(check_bound(vae, gp, score, anchor, delta, n_samples, np.random.default_rng(seed), n_pairs))
    return AnchorPair(*reports)


@dataclass(frozen=True)
class FitReport:
    n_train: int
    n_test: int
    encoder_train_rmse: float
    encoder_test_rmse: float
    decoder_train_rmse: float
    decoder_test_rmse: float
    encoder_misaligned: int
    inversion_unconverged: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _rmse(model: GpModel, z, truth) -> float:
    return float(np.sqrt(np.mean((_mean(model, z) - truth) ** 2)))


def sample_decoded(vae: VaeParams, n: int, rng: np.random.Generator, max_draws: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """``n`` distinct non-empty decodes of prior latents, with one generating latent each."""
    seqs, lats, seen = [], [], set()
    for _ in range(max_draws):
        z = rng.standard_normal((n, vae.dims.latent))
        for zi, xi in zip(z, decode_argmax(vae, z)):
            key = unpadded(xi)
            if key and key not in seen:
                seen.add(key)
                seqs.append(xi)
                lats.append(zi)
            if len(seqs) == n:
                return np.stack(seqs), np.stack(lats)
    raise InputError(f"decoder produced only {len(seqs)} distinct sequences, {n} requested")


def surrogate_fit_comparison(
    vae: VaeParams,
    score,
    rng: np.random.Generator,
    n_train: int = 300,
    n_test: int = 100,
    gp_steps: int = 100,
    gp_lr: float = 0.1,
    inv_steps: int = 1000,
    inv_lr: float = 0.1,
    inv_eps: float = 1e-9,
) -> FitReport:
    """Train/test RMSE of GPs on encoder triplets versus decoder triplets.

    Sequences are decodes of random prior latents, so each has a latent that
    reproduces it. Encoder triplets put ``f(x)`` at the encoder mean of ``x``;
    decoder triplets put it at the inverted latent (or, if inversion did not
    converge, at the generating latent). Each GP is scored at its own latents
    against ``f(decode(z))``, the value the optimizer would observe there.
    """
    if n_test < 1:
        raise InputError("surrogate fit comparison needs at least one test point")
    if n_train < 2:
        raise InputError("surrogate fit comparison needs at least two training points")
    x, z_gen = sample_decoded(vae, n_train + n_test, rng)
    y = np.array([float(score(s)) for s in x])
    mu, _ = encode(vae, x)
    inv = invert_batch(vae, x, inv_steps, inv_lr, inv_eps)
    converged = np.array([r.converged for r in inv])
    z_inv = np.where(converged[:, None], np.stack([r.z_inv for r in inv]), z_gen)
    tr, te = slice(0, n_train), slice(n_train, n_train + n_test)
    out = {}
    misaligned = 0
    for name, z in (("encoder", mu), ("decoder", z_inv)):
        decoded = decode_argmax(vae, z)
        truth = np.array([float(score(s)) for s in decoded])
        if name == "encoder":
            misaligned = int(sum(not np.array_equal(a, b) for a, b in zip(decoded, x)))
        model = _fit(z[tr], y[tr], gp_steps, gp_lr)
        out[f"{name}_train_rmse"] = _rmse(model, z[tr], truth[tr])
        out[f"{name}_test_rmse"] = _rmse(model, z[te], truth[te])
    return FitReport(
        n_train=n_train, n_test=n_test, encoder_misaligned=misaligned,
        inversion_unconverged=int((~converged).sum()), **out,
    )
