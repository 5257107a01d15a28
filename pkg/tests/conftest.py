import numpy as np
import pytest

from latentbo import vae as vae_mod
from latentbo.benchmarks import get_task
from latentbo.engine import RunConfig, pretrained_vae


@pytest.fixture(scope="session")
def string_task():
    return get_task("target_string")


@pytest.fixture(scope="session")
def trained_vae(string_task):
    """The default pretrained VAE for the string task (cached across the session)."""
    return pretrained_vae(RunConfig(), string_task)


@pytest.fixture
def tiny_dims():
    return vae_mod.VaeDims(vocab=5, max_len=4, latent=3, hidden=6)


@pytest.fixture
def tiny_vae(tiny_dims):
    return vae_mod.init_params(tiny_dims, np.random.default_rng(3))


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def central_difference(fn, x, h=1e-6):
    x = np.array(x, dtype=float)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        out[idx] = (up - down) / (2 * h)
    return out


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
