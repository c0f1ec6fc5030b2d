"""Wall-clock comparison of softmax attention against the hard monotonic scan.

Only the attention mechanism is timed: given a memory and a sequence of
decoder states (entries uniform in [-1, 1]) each path produces all ``U``
context vectors. Both paths call the same energy kernel.

Hard-path selection pattern (``saturation``):

* ``uniform``: step ``i`` (1-based) selects entry ``ceil(i * T / U)``, so
  selections advance ``T / U`` entries per step on average and the scan
  reaches the end of memory exactly at the last step.
* ``immediate``: every step selects the entry it starts on.

The pattern is imposed by adding ``+/-SATURATION`` to the computed energy
before the sigmoid; the energy itself is still evaluated at every
inspected entry.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .numkit import SeededRng, sigmoid

SATURATION = 50.0
CSV_FIELDS = ("T", "U", "softmax_s", "hard_s", "speedup", "hard_energy_evals")


@dataclass
class BenchConfig:
    T_values: list = field(default_factory=lambda: [50, 100, 200, 400])
    U_values: list = field(default_factory=lambda: [50, 100, 200, 400, 1000])
    d_h: int = 256
    d_s: int = 256
    d_a: int = 256
    trials: int = 20
    warmup: int = 2
    seed: int = 0
    saturation: str = "uniform"
    tau: float = 0.5

    def __post_init__(self):
        if self.trials < 10:
            raise ValueError("trials must be >= 10")
        if min(self.d_h, self.d_s, self.d_a, *self.T_values, *self.U_values) < 1:
            raise ValueError("all dimensions and lengths must be >= 1")
        if self.saturation not in ("uniform", "immediate"):
            raise ValueError("saturation must be 'uniform' or 'immediate'")


@dataclass
class BenchCell:
    T: int
    U: int
    softmax_s: float  # mean seconds per trial
    hard_s: float
    softmax_median_s: float
    hard_median_s: float
    median_speedup: float  # median over trials of the paired time ratio
    hard_energy_evals: int
    softmax_energy_evals: int

    @property
    def speedup(self) -> float:
        return self.softmax_s / self.hard_s

    def row(self) -> dict:
        return {"T": self.T, "U": self.U, "softmax_s": self.softmax_s, "hard_s": self.hard_s,
                "speedup": self.speedup, "hard_energy_evals": self.hard_energy_evals}


class Problem:
    """Random weights, memory and decoder states for one benchmark trial."""

    def __init__(self, T, U, d_h, d_s, d_a, rng: SeededRng):
        gen = rng.generator
        self.H = gen.uniform(-1, 1, (T, d_h))
        self.S = gen.uniform(-1, 1, (U, d_s))
        self.W = gen.uniform(-1, 1, (d_a, d_s)) / math.sqrt(d_s)
        self.V = gen.uniform(-1, 1, (d_a, d_h)) / math.sqrt(d_h)
        self.b = gen.uniform(-1, 1, d_a)
        self.v = gen.uniform(-1, 1, d_a) / math.sqrt(d_a)


def energy_kernel(query, keys, v):
    """Additive energy of one query against one key row or a block of rows."""
    return np.tanh(query + keys) @ v


def selection_offsets(T, U, saturation):
    """``(U, T)`` additive energy offsets realising the hard-path selection pattern."""
    if saturation == "immediate":
        return np.full((U, T), SATURATION)
    target = np.minimum(T, np.ceil(np.arange(1, U + 1) * T / U)).astype(int)
    cols = np.arange(1, T + 1)
    return np.where(cols[None, :] >= target[:, None], SATURATION, -SATURATION)


def softmax_contexts(prob: Problem):
    keys = prob.H @ prob.V.T + prob.b
    out = np.empty((prob.S.shape[0], prob.H.shape[1]))
    for i, s in enumerate(prob.S):
        e = energy_kernel(prob.W @ s, keys, prob.v)
        a = np.exp(e - e.max())
        out[i] = (a / a.sum()) @ prob.H
    return out


def hard_contexts(prob: Problem, offsets, tau=0.5):
    """Online hard monotonic contexts; returns ``(contexts, energy_evals)``."""
    keys = prob.H @ prob.V.T + prob.b
    T = prob.H.shape[0]
    out = np.zeros((prob.S.shape[0], prob.H.shape[1]))
    t = 0
    evals = 0
    for i, s in enumerate(prob.S):
        query = prob.W @ s
        for j in range(t, T):
            e = energy_kernel(query, keys[j], prob.v) + offsets[i, j]
            evals += 1
            if sigmoid(e) > tau:
                out[i] = prob.H[j]
                t = j
                break
    return out, evals


def _time_trials(fn, trials, warmup):
    for _ in range(warmup):
        fn()
    times = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(trials):
            start = time.perf_counter()
            fn()
            times.append(time.perf_counter() - start)
    finally:
        if gc_was_enabled:
            gc.enable()
    return times


def _paired_trials(fn_a, fn_b, trials, warmup):
    """Interleaved timings of two functions, alternating which one runs first.

    Pairing keeps slow drifts in machine speed from landing on one side.
    """
    for _ in range(warmup):
        fn_a()
        fn_b()
    times_a, times_b = [], []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k in range(trials):
            order = ((fn_a, times_a), (fn_b, times_b))
            for fn, sink in (order if k % 2 == 0 else order[::-1]):
                start = time.perf_counter()
                fn()
                sink.append(time.perf_counter() - start)
    finally:
        if gc_was_enabled:
            gc.enable()
    return times_a, times_b


def bench_softmax(T, U, dims, trials, rng: SeededRng, warmup=2):
    """Mean and median seconds to produce ``U`` softmax contexts over ``T`` entries."""
    d_h, d_s, d_a = dims
    prob = Problem(T, U, d_h, d_s, d_a, rng)
    times = _time_trials(lambda: softmax_contexts(prob), trials, warmup)
    return statistics.fmean(times), statistics.median(times)


def bench_hard(T, U, dims, trials, rng: SeededRng, saturation="uniform", warmup=2, tau=0.5):
    """Mean and median seconds plus the exact energy-evaluation count of the hard path."""
    d_h, d_s, d_a = dims
    prob = Problem(T, U, d_h, d_s, d_a, rng)
    offsets = selection_offsets(T, U, saturation)
    counts = []

    def run():
        counts.append(hard_contexts(prob, offsets, tau)[1])
    times = _time_trials(run, trials, warmup)
    evals = counts[-1]
    if any(c > T + U for c in counts):
        raise AssertionError(f"hard path exceeded T + U energy evaluations at T={T}, U={U}")
    return statistics.fmean(times), statistics.median(times), evals


def bench_cell(T, U, cfg: BenchConfig, stream_id) -> BenchCell:
    """Time both paths on one shared problem instance with paired, interleaved trials."""
    prob = Problem(T, U, cfg.d_h, cfg.d_s, cfg.d_a, SeededRng(cfg.seed, stream_id))
    offsets = selection_offsets(T, U, cfg.saturation)
    counts = []

    def hard():
        counts.append(hard_contexts(prob, offsets, cfg.tau)[1])
    sm, hd = _paired_trials(lambda: softmax_contexts(prob), hard, cfg.trials, cfg.warmup)
    if any(c > T + U for c in counts):
        raise AssertionError(f"hard path exceeded T + U energy evaluations at T={T}, U={U}")
    ratios = [a / b for a, b in zip(sm, hd)]
    return BenchCell(T, U, statistics.fmean(sm), statistics.fmean(hd), statistics.median(sm),
                     statistics.median(hd), statistics.median(ratios), counts[-1], T * U)


def speedup_grid(cfg: BenchConfig, progress=None) -> list:
    """One :class:`BenchCell` per ``(T, U)`` pair, run sequentially."""
    cells = []
    for a, T in enumerate(cfg.T_values):
        for b, U in enumerate(cfg.U_values):
            cell = bench_cell(T, U, cfg, stream_id=1000 * a + b)
            cells.append(cell)
            if progress is not None:
                progress(cell)
    return cells


def metadata(cfg: BenchConfig) -> dict:
    return {
        "config": asdict(cfg),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "p_scheme": f"{cfg.saturation} (energy offsets +/-{SATURATION:g} before the sigmoid)",
        "clock": "time.perf_counter",
    }


def grid_to_csv(cells, meta) -> str:
    buf = io.StringIO()
    buf.write("# speedbench " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for cell in cells:
        writer.writerow(cell.row())
    return buf.getvalue()


def grid_to_json(cells, meta) -> str:
    rows = [{**c.row(), "softmax_median_s": c.softmax_median_s, "hard_median_s": c.hard_median_s,
             "median_speedup": c.median_speedup, "softmax_energy_evals": c.softmax_energy_evals}
            for c in cells]
    return json.dumps({"metadata": meta, "cells": rows}, indent=1, sort_keys=True)


def append_results(path, text) -> None:
    """Append one run's block; earlier runs in the file are left untouched."""
    with Path(path).open("a") as fh:
        fh.write(text)


def read_grid_csv(path) -> list:
    """Rows of the last run block in a results file."""
    blocks, current = [], None
    for line in Path(path).read_text().splitlines():
        if line.startswith("# speedbench"):
            current = []
            blocks.append(current)
        elif current is not None and line:
            current.append(line)
    if not blocks:
        return []
    return [dict(r) for r in csv.DictReader(blocks[-1])]
