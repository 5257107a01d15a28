"""Objective functions, the oracle meter, and the discrete task registry."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from .errors import BudgetError, InputError
from .inversion import normalized_levenshtein
from .vae import PAD, pad_sequence, unpadded

ACKLEY_BOUND = 32.768
EXPRESSION_FLOOR = -100.0


def ackley(x) -> float:
    """Ackley function on [-32.768, 32.768]^d (minimum 0 at the origin)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InputError("ackley needs at least one coordinate")
    if np.any(np.abs(x) > ACKLEY_BOUND) or not np.all(np.isfinite(x)):
        raise InputError("ackley input outside [-32.768, 32.768]")
    a = -20.0 * math.exp(-0.2 * math.sqrt(float(np.mean(x * x))))
    b = -math.exp(float(np.mean(np.cos(2.0 * math.pi * x))))
    return a + b + 20.0 + math.e


class MeteredOracle:
    """Counts and logs every objective evaluation against a fixed budget."""

    def __init__(self, fn: Callable, budget: int, task_id: str = "", memoize: bool = False):
        self.fn = fn
        self.budget = int(budget)
        self.task_id = task_id
        self.memoize = memoize
        self.calls = 0
        self.log: list[tuple] = []
        self._cache: dict = {}
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return self.budget - self.calls

    def require(self, n: int) -> None:
        if n > self.remaining:
            raise BudgetError(f"{n} oracle calls requested but only {self.remaining} of {self.budget} remain")

    def __call__(self, x, phase: str = "bo") -> float:
        key = tuple(np.asarray(x).ravel().tolist())
        with self._lock:
            if self.memoize and key in self._cache:
                return self._cache[key]
            if self.calls >= self.budget:
                raise BudgetError(f"oracle budget of {self.budget} calls exhausted")
            y = float(self.fn(x))
            self.calls += 1
            self.log.append((self.calls, key, y, phase))
            if self.memoize:
                self._cache[key] = y
            return y


# --- discrete tasks ----------------------------------------------------------

# expression alphabet: pad, digits 0-9, + - *, variable x
DIGIT_BASE = 1
PLUS, MINUS, TIMES, VAR = 11, 12, 13, 14
_SYMBOLS = {PLUS: "+", MINUS: "-", TIMES: "*", VAR: "x"}
EXPRESSION_GRID = np.linspace(-2.0, 2.0, 32)
TARGET_EXPRESSION = "x*x-2*x+1"


def expression_tokens(text: str) -> tuple:
    lookup = {v: k for k, v in _SYMBOLS.items()}
    return tuple(DIGIT_BASE + int(c) if c.isdigit() else lookup[c] for c in text)


def expression_text(tokens) -> str:
    out = []
    for t in unpadded(tokens):
        out.append(str(t - DIGIT_BASE) if DIGIT_BASE <= t < DIGIT_BASE + 10 else _SYMBOLS.get(t, "?"))
    return "".join(out)


def evaluate_expression(tokens, grid=EXPRESSION_GRID):
    """Evaluate strictly left to right (no precedence); ``None`` if malformed."""
    toks = unpadded(tokens)
    operands, ops = [], []
    i = 0
    expect_operand = True
    while i < len(toks):
        t = toks[i]
        if expect_operand:
            if t == VAR:
                operands.append(np.asarray(grid, dtype=float))
                i += 1
            elif DIGIT_BASE <= t < DIGIT_BASE + 10:
                j = i
                while j < len(toks) and DIGIT_BASE <= toks[j] < DIGIT_BASE + 10:
                    j += 1
                value = float(int("".join(str(d - DIGIT_BASE) for d in toks[i:j])))
                operands.append(np.full(len(grid), value))
                i = j
            else:
                return None
            expect_operand = False
        else:
            if t not in (PLUS, MINUS, TIMES):
                return None
            ops.append(t)
            i += 1
            expect_operand = True
    if expect_operand:
        return None
    acc = operands[0]
    for op, rhs in zip(ops, operands[1:]):
        acc = acc + rhs if op == PLUS else acc - rhs if op == MINUS else acc * rhs
    return acc


def micro_expression_task(x, target=TARGET_EXPRESSION) -> float:
    """-log(1 + MSE) against the target expression on a fixed grid; floor if unparseable."""
    if isinstance(target, str):
        target = expression_tokens(target)
    pred = evaluate_expression(x)
    if pred is None:
        return EXPRESSION_FLOOR
    mse = float(np.mean((pred - evaluate_expression(target)) ** 2))
    return -math.log1p(mse)


def target_string_task(x, target) -> float:
    return 1.0 - normalized_levenshtein(x, target)


@dataclass(frozen=True)
class Task:
    task_id: str
    score: Callable
    corpus: np.ndarray
    vocab: int = 16
    max_len: int = 16
    target: tuple = field(default=())


# motif alphabet for the string task; the target reuses motifs in a new order
STRING_MOTIFS = (
    (3, 7, 2), (5, 5, 9, 1), (12, 4), (8, 14, 6), (11, 2, 13),
    (15, 1, 1, 7), (6, 10), (9, 3, 12), (4, 4, 8), (13, 15),
    (2, 11, 5), (10, 6, 14, 3),
)
STRING_TARGET = (9, 3, 12, 3, 7, 2, 13, 15, 15, 1, 1, 7, 6, 10, 12, 4)


def motif_sequence(rng: np.random.Generator, max_len: int = 16) -> tuple:
    seq: list = []
    while True:
        motif = STRING_MOTIFS[rng.integers(len(STRING_MOTIFS))]
        if len(seq) + len(motif) > max_len:
            break
        seq.extend(motif)
        if len(seq) >= 8 and rng.random() < 0.3:
            break
    return tuple(seq)


def random_expression(rng: np.random.Generator, max_len: int = 16) -> tuple:
    def operand():
        if rng.random() < 0.5:
            return (VAR,)
        return tuple(DIGIT_BASE + int(d) for d in rng.integers(0, 10, size=rng.integers(1, 3)))

    seq = list(operand())
    while rng.random() < 0.8:
        nxt = [int(rng.choice([PLUS, MINUS, TIMES]))] + list(operand())
        if len(seq) + len(nxt) > max_len:
            break
        seq.extend(nxt)
    return tuple(seq)


def generate_corpus(kind: str, n: int, seed: int, max_len: int = 16) -> list[tuple]:
    """Distinct sequences drawn from the task's generator (used to build shipped corpora)."""
    rng = np.random.default_rng(seed)
    gen = motif_sequence if kind == "target_string" else random_expression
    seen: dict = {}
    while len(seen) < n:
        seq = gen(rng, max_len)
        if seq and seq not in seen:
            seen[seq] = None
    return list(seen)


def load_corpus(name: str, max_len: int = 16) -> np.ndarray:
    text = resources.files("latentbo.data").joinpath(f"{name}.txt").read_text()
    rows = [pad_sequence([int(t) for t in line.split()], max_len) for line in text.splitlines() if line.strip()]
    return np.stack(rows)


def write_corpus(seqs, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for s in seqs:
            fh.write(" ".join(str(t) for t in s if t != PAD) + "\n")


def get_task(task_id: str) -> Task:
    if task_id == "target_string":
        target = STRING_TARGET
        return Task(task_id, lambda x: target_string_task(x, target), load_corpus(task_id), target=target)
    if task_id == "micro_expression":
        target = expression_tokens(TARGET_EXPRESSION)
        return Task(task_id, micro_expression_task, load_corpus(task_id), target=target)
    raise InputError(f"unknown task {task_id!r}; expected one of {TASK_IDS}")


TASK_IDS = ("target_string", "micro_expression")
