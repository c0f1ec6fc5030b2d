"""Synthetic monotonic transduction task: each input symbol expands to 1-2 output symbols."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .numkit import DomainError, SeededRng


@dataclass(frozen=True)
class TaskSpec:
    vocab_size: int
    expansion_table: tuple  # expansion_table[s] is a tuple of 1 or 2 output symbols
    seed: int

    @property
    def eos(self) -> int:
        return self.vocab_size

    @property
    def sos(self) -> int:
        return self.vocab_size + 1

    @property
    def n_outputs(self) -> int:
        """Size of the output softmax: every symbol plus end-of-sequence."""
        return self.vocab_size + 1

    def expand(self, tokens) -> list:
        out = []
        for s in tokens:
            out.extend(self.expansion_table[int(s)])
        return out

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "seed": self.seed,
            "expansion_table": [list(e) for e in self.expansion_table],
        }

    @classmethod
    def from_dict(cls, d) -> "TaskSpec":
        return cls(int(d["vocab_size"]), tuple(tuple(int(x) for x in e) for e in d["expansion_table"]),
                   int(d["seed"]))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def generate_task(seed: int, vocab_size: int = 20) -> TaskSpec:
    if vocab_size < 2:
        raise DomainError("vocab_size must be >= 2")
    gen = SeededRng(seed, stream_id=0xA11).generator
    table = []
    for _ in range(vocab_size):
        n = int(gen.integers(1, 3))
        table.append(tuple(int(x) for x in gen.integers(0, vocab_size, n)))
    return TaskSpec(vocab_size, tuple(table), seed)


def sample_pair(task: TaskSpec, rng: SeededRng, len_range=(5, 20)):
    """Random input of length in ``len_range`` (inclusive) and its target ending in EOS."""
    lo, hi = len_range
    if not 1 <= lo <= hi <= 64:
        raise DomainError("len_range must satisfy 1 <= lo <= hi <= 64")
    gen = rng.generator
    T = int(gen.integers(lo, hi + 1))
    x = [int(s) for s in gen.integers(0, task.vocab_size, T)]
    return x, task.expand(x) + [task.eos]


def sample_pairs(task: TaskSpec, rng: SeededRng, n: int, len_range=(5, 20)):
    xs, ys = [], []
    for _ in range(n):
        x, y = sample_pair(task, rng, len_range)
        xs.append(x)
        ys.append(y)
    return xs, ys
