"""The latent BO loop: initial alignment, surrogate fitting, anchor choice,
trust-region queries, VAE updates with realignment, and oracle accounting."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import vae as vae_mod
from .anchors import POLICIES, select_anchor
from .benchmarks import MeteredOracle, Task, get_task
from .errors import ConfigError
from .gp import GpHyperparams, fit_gp, thompson_sample
from .inversion import ALIGN_MODES, align_dataset, normalized_levenshtein
from .trust_region import TrustRegionConfig, TrustRegionState, region_bounds, sample_candidates, update_schedule
from .vae import VaeDims, VaeParams, decode_argmax, unpadded

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("call_index", "y", "best_so_far", "unique_count", "tr_length", "n_fail", "phase")


@dataclass(frozen=True)
class Triplet:
    x: np.ndarray
    z: np.ndarray
    y: float
    aligned: bool = False

    @property
    def key(self) -> tuple:
        return unpadded(self.x)


@dataclass(frozen=True)
class RunConfig:
    task: str = "target_string"
    budget: int = 500
    n_init: int = 100
    batch_size: int = 5
    top_k: int = 50
    n_fail_max: int = 10
    seed: int = 0
    align_mode: str = "inversion"
    anchor_policy: str = "pas"
    query_mode: str = "joint"
    memoize: bool = False
    n_cand: int = 512
    region_mode: str = "ard"
    latent_bound: float = 5.0
    gp_steps_init: int = 100
    gp_steps: int = 20
    gp_lr: float = 0.1
    tr_length_init: float = 0.8
    tr_length_min: float = 0.008
    tr_length_max: float = 1.6
    tr_succ_tol: int = 3
    tr_fail_tol: int = 10
    vae_vocab: int = 16
    vae_max_len: int = 16
    vae_latent: int = 8
    vae_hidden: int = 64
    vae_kl_weight: float = 0.01
    vae_batch_size: int = 32
    vae_pretrain_epochs: int = 1000
    vae_pretrain_lr: float = 0.5
    vae_pretrain_seed: int = 0
    vae_checkpoint: str = ""
    vae_update_epochs: int = 20
    vae_update_lr: float = 0.5
    inv_steps: int = 1000
    inv_lr: float = 0.1
    inv_eps: float = 1e-9
    workers: int = 1
    history_path: str = ""
    summary_path: str = ""

    def __post_init__(self):
        if self.n_init < 1:
            raise ConfigError("n_init must be at least 1", key="n_init")
        if self.budget < self.n_init:
            raise ConfigError("budget must cover the initial dataset", key="budget")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1", key="batch_size")
        if self.top_k < 1:
            raise ConfigError("top_k must be at least 1", key="top_k")
        if self.align_mode not in ALIGN_MODES:
            raise ConfigError(f"align_mode must be one of {ALIGN_MODES}", key="align_mode")
        if self.anchor_policy not in POLICIES:
            raise ConfigError(f"anchor_policy must be one of {POLICIES}", key="anchor_policy")
        if self.query_mode not in ("joint", "independent"):
            raise ConfigError("query_mode must be joint or independent", key="query_mode")
        if self.region_mode not in ("ard", "isotropic"):
            raise ConfigError("region_mode must be ard or isotropic", key="region_mode")
        try:
            self.tr_config()
        except ValueError as exc:
            raise ConfigError(str(exc), key="tr_length_init") from exc

    def tr_config(self) -> TrustRegionConfig:
        return TrustRegionConfig(
            self.tr_length_init, self.tr_length_min, self.tr_length_max, self.tr_succ_tol, self.tr_fail_tol
        )

    def vae_dims(self) -> VaeDims:
        return VaeDims(self.vae_vocab, self.vae_max_len, self.vae_latent, self.vae_hidden)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_types(cls) -> dict:
        defaults = cls()
        return {f.name: type(getattr(defaults, f.name)) for f in fields(cls)}


@dataclass
class RunState:
    dataset: list
    vae: VaeParams
    oracle: MeteredOracle
    tr: TrustRegionState
    best_score: float = -np.inf
    best_x: np.ndarray | None = None
    n_fail: int = 0
    gp_hyper: GpHyperparams | None = None
    history: list = field(default_factory=list)
    seen: set = field(default_factory=set)
    steps: int = 0
    retrains: int = 0

    @property
    def oracle_calls_used(self) -> int:
        return self.oracle.calls


def _streams(seed: int) -> dict:
    names = ("init", "bo", "vae")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


_PRETRAINED: dict = {}


def pretrained_vae(config: RunConfig, task: Task | None = None) -> VaeParams:
    """VAE trained on the task corpus, cached per training setting."""
    if config.vae_checkpoint:
        return vae_mod.load_checkpoint(config.vae_checkpoint)
    key = (
        config.task, config.vae_dims(), config.vae_pretrain_epochs, config.vae_pretrain_lr,
        config.vae_kl_weight, config.vae_batch_size, config.vae_pretrain_seed,
    )
    if key not in _PRETRAINED:
        task = task or get_task(config.task)
        rng = np.random.default_rng(config.vae_pretrain_seed)
        params = vae_mod.init_params(config.vae_dims(), rng)
        _PRETRAINED[key] = vae_mod.train_vae(
            params, task.corpus, config.vae_pretrain_epochs, config.vae_pretrain_lr,
            config.vae_kl_weight, rng, batch_size=config.vae_batch_size,
        )
    return _PRETRAINED[key].copy()


def _record(state: RunState, call: int, x: np.ndarray, y: float, phase: str) -> None:
    state.seen.add(unpadded(x))
    if y > state.best_score:
        state.best_score, state.best_x = y, np.array(x)
    state.history.append((call, y, state.best_score, len(state.seen), state.tr.length, state.n_fail, phase))


def _evaluate(state: RunState, x: np.ndarray, phase: str) -> float:
    y = state.oracle(x, phase=phase)
    _record(state, state.oracle.calls, x, y, phase)
    return y


def _realign(state: RunState, dataset: list, config: RunConfig) -> list:
    if config.align_mode != "recentering":
        return align_dataset(state.vae, dataset, config.align_mode, config.inv_steps, config.inv_lr, config.inv_eps)
    # recentering pays per triplet; whatever the budget cannot cover is dropped
    dataset = dataset[: state.oracle.remaining]
    start = len(state.oracle.log)
    out = align_dataset(state.vae, dataset, "recentering", oracle=state.oracle)
    for (call, _, y, phase), t in zip(state.oracle.log[start:], out):
        _record(state, call, t.x, y, phase)
    return out


def build_initial_dataset(task: Task, config: RunConfig, vae: VaeParams, oracle: MeteredOracle, rng=None) -> RunState:
    if config.n_init < 1:
        raise ConfigError("n_init must be at least 1", key="n_init")
    if oracle.budget < config.n_init:
        raise ConfigError("budget smaller than the initial dataset", key="budget")
    rng = rng if rng is not None else _streams(config.seed)["init"]
    if config.n_init > len(task.corpus):
        raise ConfigError(f"n_init exceeds corpus size {len(task.corpus)}", key="n_init")
    idx = rng.choice(len(task.corpus), size=config.n_init, replace=False)
    state = RunState([], vae, oracle, TrustRegionState.initial(config.tr_config()))
    raw = []
    for i in idx:
        x = task.corpus[i].copy()
        raw.append(Triplet(x, np.zeros(config.vae_latent), _evaluate(state, x, "init"), False))
    state.dataset = _realign(state, raw, config)
    return state


def working_subset(dataset: list, n_recent: int, k: int) -> list:
    """Most recent ``n_recent`` triplets plus the ``k`` best, deduplicated by sequence.

    Duplicates keep the higher score; output order is by first appearance in ``dataset``.
    """
    if not dataset:
        return []
    n = len(dataset)
    order = sorted(range(n), key=lambda i: (-dataset[i].y, i))
    chosen = set(order[:k]) | set(range(max(0, n - n_recent), n))
    best: dict = {}
    for i in sorted(chosen):
        t = dataset[i]
        if t.key not in best or t.y > dataset[best[t.key]].y:
            best[t.key] = i
    return [dataset[i] for i in sorted(best.values())]


def _top_indices(values: np.ndarray, k: int) -> np.ndarray:
    return np.argsort(-values, kind="stable")[:k]


def bo_step(state: RunState, config: RunConfig, rng: np.random.Generator) -> RunState:
    if state.oracle.remaining < 1:
        return state
    if state.n_fail >= config.n_fail_max:
        subset = working_subset(state.dataset, config.batch_size, config.top_k)
        state.vae = vae_mod.train_vae(
            state.vae, np.stack([t.x for t in subset]), config.vae_update_epochs, config.vae_update_lr,
            config.vae_kl_weight, rng, batch_size=config.vae_batch_size,
        )
        state.dataset = _realign(state, subset, config)
        state.n_fail = 0
        state.retrains += 1
        log.debug("vae retrained", extra={"step": state.steps, "calls": state.oracle.calls})
        if state.oracle.remaining < 1 or len(state.dataset) == 0:
            return state

    subset = working_subset(state.dataset, config.batch_size, config.top_k)
    z = np.stack([t.z for t in subset])
    y = np.array([t.y for t in subset])
    top = _top_indices(y, config.top_k)
    box = (-config.latent_bound, config.latent_bound)
    n_q = min(config.batch_size, state.oracle.remaining)
    if len(subset) < 2:
        # too little data for a surrogate: isotropic box, uniform queries
        bounds = region_bounds(z[0], state.tr, None, box, "isotropic")
        chosen = sample_candidates(bounds, n_q, rng)
    else:
        steps = config.gp_steps if state.gp_hyper is not None else config.gp_steps_init
        init = state.gp_hyper or GpHyperparams.default(config.vae_latent)
        model = fit_gp(z, y, init, steps, config.gp_lr)
        state.gp_hyper = model.hyperparams
        pick = select_anchor(
            z[top], y[top], model, state.tr, config.anchor_policy, config.n_cand, rng,
            box=box, region_mode=config.region_mode, workers=config.workers,
        )
        bounds = region_bounds(z[top[pick]], state.tr, model.hyperparams.lengthscales, box, config.region_mode)
        cand = sample_candidates(bounds, max(config.n_cand, n_q), rng)
        if config.query_mode == "joint":
            chosen = cand[_top_indices(thompson_sample(model, cand, rng), n_q)]
        else:
            chosen = np.stack([cand[np.argmax(thompson_sample(model, cand, rng))] for _ in range(n_q)])

    best_before = state.best_score
    xs = decode_argmax(state.vae, chosen)
    new = [Triplet(xs[i], chosen[i].copy(), _evaluate(state, xs[i], "bo"), True) for i in range(n_q)]
    improved = any(t.y > best_before for t in new)
    state.n_fail = 0 if improved else state.n_fail + 1
    state.tr = update_schedule(state.tr, improved)
    state.dataset = subset + new
    state.steps += 1
    return state


def exploration_metric(source) -> list[int]:
    """Cumulative count of distinct sequences after each oracle call.

    ``source`` is a ``RunState`` (its oracle log is replayed) or an iterable of sequences.
    """
    if isinstance(source, RunState):
        source = [rec[1] for rec in source.oracle.log]
    seen = set()
    out = []
    for seq in source:
        seen.add(unpadded(seq))
        out.append(len(seen))
    return out


@dataclass
class RunResult:
    state: RunState
    config: RunConfig
    wall_clock: float

    @property
    def history(self) -> list:
        return self.state.history

    def summary(self) -> dict:
        s = self.state
        return {
            "task": self.config.task,
            "seed": self.config.seed,
            "align_mode": self.config.align_mode,
            "anchor_policy": self.config.anchor_policy,
            "best_score": s.best_score,
            "best_x": list(unpadded(s.best_x)) if s.best_x is not None else [],
            "oracle_calls": s.oracle.calls,
            "bo_steps": s.steps,
            "vae_retrains": s.retrains,
            "unique_sequences": len(s.seen),
            "config": self.config.to_dict(),
        }


def history_csv(history) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for call, y, best, uniq, length, n_fail, phase in history:
        writer.writerow([call, repr(float(y)), repr(float(best)), uniq, repr(float(length)), n_fail, phase])
    return buf.getvalue()


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def run(config: RunConfig, task: Task | None = None, vae: VaeParams | None = None) -> RunResult:
    """Run the loop until the oracle budget is spent; writes result files when paths are set."""
    from .io import write_outputs

    start = time.perf_counter()
    task = task or get_task(config.task)
    vae = vae.copy() if vae is not None else pretrained_vae(config, task)
    streams = _streams(config.seed)
    oracle = MeteredOracle(task.score, config.budget, task.task_id, memoize=config.memoize)
    state = build_initial_dataset(task, config, vae, oracle, streams["init"])
    stalled = 0
    while state.oracle.remaining > 0 and stalled < 50:
        calls = state.oracle.calls
        state = bo_step(state, config, streams["bo"])
        # memoized repeats cost nothing, so a run could otherwise spin forever
        stalled = stalled + 1 if state.oracle.calls == calls else 0
    result = RunResult(state, config, time.perf_counter() - start)
    log.info("run finished", extra={"best": state.best_score, "calls": state.oracle.calls, "seed": config.seed})
    if config.history_path or config.summary_path:
        write_outputs(result)
    return result


def unaligned_count(vae: VaeParams, dataset: list) -> int:
    if not dataset:
        return 0
    decoded = decode_argmax(vae, np.stack([t.z for t in dataset]))
    return sum(normalized_levenshtein(t.x, d) > 0 for t, d in zip(dataset, decoded))
