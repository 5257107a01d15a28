"""Latent Bayesian optimization toolkit: exact GP surrogate, trust regions with
potential-aware anchor selection, a toy sequence VAE, decoder inversion, and
the diagnostics and benchmarks built on them."""

from .engine import RunConfig, RunResult, run
from .errors import (
    BudgetError,
    ConfigError,
    FactorizationError,
    InputError,
    InversionError,
    LatentBOError,
    NumericalError,
    OutputError,
    TrainingError,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "RunResult", "run",
    "LatentBOError", "ConfigError", "OutputError", "NumericalError", "FactorizationError",
    "InversionError", "TrainingError", "BudgetError", "InputError",
]
