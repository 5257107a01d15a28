"""Command-line entry point.

Every experiment command reads a flat YAML config and accepts ``--key value``
overrides for any config key. Results go to files (or stdout for ``invert``);
logs go to stderr as JSON lines.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import config as cfg_mod
from . import vae as vae_mod
from .ackley_bench import POLICY_ANCHORS, AckleyBenchConfig, aggregate_csv, per_seed_csv, run_matrix
from .benchmarks import get_task
from .diagnostics import paired_anchor_check, surrogate_fit_comparison
from .engine import pretrained_vae, run
from .errors import ConfigError, InputError, LatentBOError
from .inversion import invert
from .io import configure_logging, write_files

log = logging.getLogger("latentbo.cli")


def _overrides(extra: list[str]) -> dict:
    """Turn ``--key value`` / ``--key=value`` tokens into typed config values."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}; overrides look like --key value")
        if "=" in tok:
            key, text = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {tok} is missing a value", key=tok[2:].replace("-", "_"))
            key, text = tok[2:], extra[i + 1]
            i += 2
        key, value = cfg_mod.parse_override(key, text)
        out[key] = value
    return out


def _load(args, extra):
    return cfg_mod.load(args.config, _overrides(extra))


def cmd_run(args, extra) -> int:
    run_cfg, _ = _load(args, extra)
    result = run(run_cfg)
    log.info("results written", extra={"history": run_cfg.history_path, "summary": run_cfg.summary_path})
    print(json.dumps({"best_score": result.state.best_score, "oracle_calls": result.state.oracle.calls}))
    return 0


def _seeds(text: str) -> list[int]:
    try:
        if "," in text:
            return [int(s) for s in text.split(",") if s.strip()]
        return list(range(int(text)))
    except ValueError as exc:
        raise ConfigError(f"--seeds expects a count or a comma-separated list, got {text!r}", key="seeds") from exc


def cmd_bench_ackley(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    bench = AckleyBenchConfig(
        dim=args.dim, budget=args.budget, n_init=args.n_init, batch_size=args.batch_size,
        top_k=args.top_k, n_cand=args.n_cand,
    )
    policies = args.policy or list(POLICY_ANCHORS)
    curves = run_matrix(policies, _seeds(args.seeds), bench, args.workers)
    files = {}
    if args.per_seed_path:
        files[args.per_seed_path] = per_seed_csv(curves)
    if args.aggregate_path:
        files[args.aggregate_path] = aggregate_csv(curves)
    write_files(files)
    for policy in policies:
        finals = [c[-1] for (p, _), c in sorted(curves.items()) if p == policy]
        print(json.dumps({"policy": policy, "mean_final_best": float(np.mean(finals)), "seeds": len(finals)}))
    return 0


def _tokens(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise InputError(f"target must be whitespace- or comma-separated integers, got {text!r}") from exc


def cmd_invert(args, extra) -> int:
    if extra:
        raise ConfigError(f"unexpected arguments {extra}")
    params = vae_mod.load_checkpoint(args.checkpoint)
    target = vae_mod.as_tokens(vae_mod.pad_sequence(_tokens(args.target), params.dims.max_len), params.dims)[0]
    res = invert(params, target, args.steps, args.lr, args.eps)
    print(json.dumps({
        "z_inv": [repr(float(v)) for v in res.z_inv],
        "final_distance": res.final_distance,
        "iterations_used": res.iterations_used,
        "converged": res.converged,
    }))
    return 0 if res.converged else 1


def cmd_train_vae(args, extra) -> int:
    run_cfg, _ = _load(args, extra)
    vae_mod.save_checkpoint(pretrained_vae(replace(run_cfg, vae_checkpoint="")), args.out)
    return 0


def cmd_check_bound(args, extra) -> int:
    run_cfg, diag = _load(args, extra)
    if not diag.bound_report_prefix:
        raise ConfigError("check-bound needs an output prefix", key="bound_report_prefix")
    task = get_task(run_cfg.task)
    params = pretrained_vae(run_cfg, task)
    rng = np.random.default_rng(np.random.SeedSequence([run_cfg.seed, 3]))
    idx = rng.choice(len(task.corpus), size=min(diag.bound_dataset, len(task.corpus)), replace=False)
    pair = paired_anchor_check(
        params, task.corpus[idx], task.score, rng, diag.bound_delta, diag.bound_samples, diag.bound_pairs,
        run_cfg.gp_steps_init, run_cfg.gp_lr, run_cfg.inv_steps, run_cfg.inv_lr, run_cfg.inv_eps,
    )
    prefix = diag.bound_report_prefix
    summary = {"inversion": pair.inversion.summary(), "encoder": pair.encoder.summary()}
    write_files({
        prefix + "vae.npz": vae_mod.checkpoint_bytes(params),
        prefix + "inversion.csv": pair.inversion.rows_csv(),
        prefix + "encoder.csv": pair.encoder.rows_csv(),
        prefix + "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    })
    for name, rep in (("inversion anchor", pair.inversion), ("encoder anchor", pair.encoder)):
        print(f"[{name}]")
        print(rep.summary_text(), end="")
    return 0


def cmd_fit_compare(args, extra) -> int:
    run_cfg, diag = _load(args, extra)
    if not diag.fit_report_path:
        raise ConfigError("fit-compare needs an output path", key="fit_report_path")
    task = get_task(run_cfg.task)
    rng = np.random.default_rng(np.random.SeedSequence([run_cfg.seed, 4]))
    params = vae_mod.train_vae(
        vae_mod.init_params(run_cfg.vae_dims(), rng), task.corpus, diag.fit_vae_epochs,
        run_cfg.vae_pretrain_lr, run_cfg.vae_kl_weight, rng, batch_size=run_cfg.vae_batch_size,
    )
    report = surrogate_fit_comparison(
        params, task.score, rng, diag.fit_train, diag.fit_test,
        run_cfg.gp_steps_init, run_cfg.gp_lr, run_cfg.inv_steps, run_cfg.inv_lr, run_cfg.inv_eps,
    )
    write_files({diag.fit_report_path: report.to_json()})
    print(report.to_json(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentbo", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="YAML config file")
        p.set_defaults(fn=fn)
        return p

    with_config("run", cmd_run, "run latent BO on a toy task")
    with_config("check-bound", cmd_check_bound, "test the surrogate error bound around two anchors")
    with_config("fit-compare", cmd_fit_compare, "compare GP fits on encoder and decoder triplets")
    p = with_config("train-vae", cmd_train_vae, "pretrain the task VAE and save a checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("bench-ackley", help="trust-region BO on Ackley with objective or PAS anchors")
    p.add_argument("--dim", type=int, default=40)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--n-init", type=int, default=80)
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--n-cand", type=int, default=512)
    p.add_argument("--policy", action="append", choices=tuple(POLICY_ANCHORS), help="repeatable; default both")
    p.add_argument("--seeds", default="10", help="a count N (seeds 0..N-1) or a comma-separated list")
    p.add_argument("--workers", type=int, default=None, help="process pool size (default from LATENTBO_WORKERS)")
    p.add_argument("--per-seed-path", default="")
    p.add_argument("--aggregate-path", default="")
    p.set_defaults(fn=cmd_bench_ackley)

    p = sub.add_parser("invert", help="invert one token sequence through a VAE checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("target", help="token ids, space or comma separated")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=1e-9)
    p.set_defaults(fn=cmd_invert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    configure_logging(getattr(logging, args.log_level))
    try:
        return args.fn(args, extra)
    except LatentBOError as exc:
        message = str(exc)
        key = getattr(exc, "key", None)
        if key and key not in message:
            message = f"config key '{key}': {message}"
        log.error(message, extra={"error": type(exc).__name__, "exit_code": exc.exit_code})
        print(f"error: {message}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
