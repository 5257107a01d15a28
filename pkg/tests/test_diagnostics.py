import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentbo import vae as V
from latentbo.diagnostics import (
    LipschitzError,
    check_bound,
    estimate_lipschitz,
    euclidean,
    paired_anchor_check,
    sample_ball,
    surrogate_fit_comparison,
)
from latentbo.engine import Triplet
from latentbo.errors import InputError
from latentbo.gp import GpHyperparams, fit_gp
from latentbo.inversion import invert_batch


def random_pairs(n, seed=0):
    rng = np.random.default_rng(seed)
    return list(zip(rng.normal(size=n), rng.normal(size=n)))


def absdiff(a, b):
    return abs(a - b)


def test_lipschitz_constant_function_is_zero():
    assert estimate_lipschitz(lambda x: 4.0, random_pairs(50), absdiff) == 0.0


def test_lipschitz_identity_is_one():
    assert estimate_lipschitz(lambda x: x, random_pairs(50), absdiff) == pytest.approx(1.0, rel=1e-12)


def test_lipschitz_linear_slope():
    assert abs(estimate_lipschitz(lambda x: 3 * x, random_pairs(200), absdiff) - 3.0) < 1e-12


def test_lipschitz_all_coincident_pairs():
    with pytest.raises(LipschitzError):
        estimate_lipschitz(lambda x: x, [(1.0, 1.0), (2.0, 2.0)], absdiff)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 30), st.integers(1, 30))
def test_lipschitz_monotone_in_pairs(seed, n, extra):
    pairs = random_pairs(n + extra, seed)
    fn = np.sin
    assert estimate_lipschitz(fn, pairs, absdiff) >= estimate_lipschitz(fn, pairs[:n], absdiff)


def test_ball_sampling_radius_and_uniformity():
    rng = np.random.default_rng(0)
    pts = sample_ball(np.ones(3), 2.0, 20_000, rng)
    r = np.linalg.norm(pts - 1.0, axis=1)
    assert r.max() <= 2.0
    # uniform in a 3-ball: P(r <= R/2) = 1/8
    assert np.mean(r <= 1.0) == pytest.approx(1 / 8, abs=0.01)
    assert np.allclose(sample_ball(np.zeros(2), 0.0, 3, rng), 0.0)
    assert euclidean([0, 3], [4, 0]) == 5.0


@pytest.fixture(scope="module")
def aligned_setup(trained_vae, string_task):
    x = string_task.corpus[:60]
    y = np.array([string_task.score(s) for s in x])
    results = invert_batch(trained_vae, x)
    z = np.stack([r.z_inv for r in results])
    gp = fit_gp(z, y, GpHyperparams.default(z.shape[1]), 30)
    i = next(i for i, r in enumerate(results) if r.converged)
    return gp, Triplet(x[i], z[i], y[i])


def test_zero_radius_zero_gamma_never_violates(trained_vae, string_task, aligned_setup):
    gp, anchor = aligned_setup
    rep = check_bound(trained_vae, gp, string_task.score, anchor, 0.0, 50, np.random.default_rng(0))
    assert rep.gamma == 0.0 and rep.delta == 0.0
    assert rep.violations == 0 and rep.violation_rate == 0.0
    assert rep.samples == 50 and len(rep.rows) == 50
    assert rep.rhs == pytest.approx(rep.c)


def test_report_rows_and_rate(trained_vae, string_task, aligned_setup):
    gp, anchor = aligned_setup
    rep = check_bound(trained_vae, gp, string_task.score, anchor, 0.5, 40, np.random.default_rng(1), n_pairs=500)
    assert rep.samples == 40 and len(rep.rows) == 40
    assert rep.violation_rate == rep.violations / 40
    assert all(r[0] <= 0.5 + 1e-12 for r in rep.rows)
    assert rep.rows_csv().count("\n") == 41
    assert min(rep.L1, rep.L2, rep.L3, rep.c, rep.gamma) >= 0


def test_rhs_monotone_in_delta(trained_vae, string_task, aligned_setup):
    gp, anchor = aligned_setup
    rhs = [
        check_bound(trained_vae, gp, string_task.score, anchor, d, 5, np.random.default_rng(2), n_pairs=300).rhs
        for d in (0.0, 0.25, 0.5, 1.0)
    ]
    assert all(b >= a for a, b in zip(rhs, rhs[1:]))


def test_check_bound_deterministic(trained_vae, string_task, aligned_setup):
    gp, anchor = aligned_setup
    a = check_bound(trained_vae, gp, string_task.score, anchor, 0.3, 20, np.random.default_rng(5), n_pairs=200)
    b = check_bound(trained_vae, gp, string_task.score, anchor, 0.3, 20, np.random.default_rng(5), n_pairs=200)
    assert a == b


def test_check_bound_validation(trained_vae, string_task, aligned_setup):
    gp, anchor = aligned_setup
    with pytest.raises(InputError):
        check_bound(trained_vae, gp, string_task.score, anchor, -1.0, 5, np.random.default_rng(0))


def test_paired_check_runs(trained_vae, string_task):
    pair = paired_anchor_check(
        trained_vae, string_task.corpus[:40], string_task.score, np.random.default_rng(0),
        delta=0.3, n_samples=30, n_pairs=300, gp_steps=10,
    )
    assert pair.inversion.gamma == 0.0
    assert pair.inversion.samples == pair.encoder.samples == 30


def test_fit_comparison_validation(tiny_vae):
    with pytest.raises(InputError):
        surrogate_fit_comparison(tiny_vae, lambda x: 0.0, np.random.default_rng(0), n_train=10, n_test=0)


def test_fit_comparison_on_well_trained_vae(trained_vae, string_task):
    rep = surrogate_fit_comparison(
        trained_vae, string_task.score, np.random.default_rng(0), n_train=60, n_test=20, gp_steps=20
    )
    assert rep.n_train == 60 and rep.n_test == 20
    for v in (rep.encoder_test_rmse, rep.decoder_test_rmse, rep.encoder_train_rmse, rep.decoder_train_rmse):
        assert np.isfinite(v) and v >= 0
    assert '"decoder_test_rmse"' in rep.to_json()
