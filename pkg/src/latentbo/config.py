"""Flat YAML experiment files: schema check, typed overrides, round-tripping."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from .engine import RunConfig
from .errors import ConfigError

SCHEMA = "latentbo-config/1"
REQUIRED_KEYS = ("schema", "task", "budget", "seed", "history_path", "summary_path")


@dataclass(frozen=True)
class DiagnosticConfig:
    bound_delta: float = 0.5
    bound_samples: int = 200
    bound_pairs: int = 10000
    bound_dataset: int = 100
    bound_report_prefix: str = ""
    fit_train: int = 300
    fit_test: int = 100
    fit_vae_epochs: int = 30
    fit_report_path: str = ""


def _field_types(cls) -> dict:
    defaults = cls()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


RUN_TYPES = _field_types(RunConfig)
DIAG_TYPES = _field_types(DiagnosticConfig)
ALL_TYPES = {"schema": str, **RUN_TYPES, **DIAG_TYPES}


def coerce(key: str, value):
    if key not in ALL_TYPES:
        raise ConfigError(f"unknown config key '{key}'", key=key)
    want = ALL_TYPES[key]
    if want is bool:
        ok = isinstance(value, bool)
    elif want is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif want is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"config key '{key}' expects {want.__name__}, got {value!r}", key=key)
    return value


def parse_override(key: str, text: str):
    key = key.replace("-", "_")
    if key in ALL_TYPES and ALL_TYPES[key] is str:
        return key, text
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value for '{key}': {text!r}", key=key) from exc
    return key, coerce(key, value)


def build(values: dict, check_required: bool = True) -> tuple[RunConfig, DiagnosticConfig]:
    if check_required:
        for key in REQUIRED_KEYS:
            if key not in values:
                raise ConfigError(f"missing required config key '{key}'", key=key)
    values = {k: coerce(k, v) for k, v in values.items()}
    if values.get("schema", SCHEMA) != SCHEMA:
        raise ConfigError(f"unsupported schema {values['schema']!r}; expected {SCHEMA!r}", key="schema")
    run = RunConfig(**{k: v for k, v in values.items() if k in RUN_TYPES})
    diag = DiagnosticConfig(**{k: v for k, v in values.items() if k in DIAG_TYPES})
    return run, diag


def load(path, overrides: dict | None = None) -> tuple[RunConfig, DiagnosticConfig]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}", key=None) from exc
    try:
        values = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from exc
    if not isinstance(values, dict) or any(isinstance(v, (dict, list)) for v in values.values()):
        raise ConfigError(f"{path}: config must be a flat key/value mapping")
    values.update(overrides or {})
    return build(values)


def dump(run: RunConfig, diag: DiagnosticConfig | None = None) -> str:
    values = {"schema": SCHEMA, **asdict(run), **asdict(diag or DiagnosticConfig())}
    return yaml.safe_dump(values, sort_keys=False)
