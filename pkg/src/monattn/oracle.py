"""Ground truth for the monotonic attention marginals.

Nothing in this module calls into the expectation recurrence: the exact
answer comes from summing probabilities of explicit selection paths, the
approximate one from simulating the hard process.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .numkit import DomainError, SeededRng

MAX_EXACT_T = 8
MAX_EXACT_U = 6
SEMANTICS = ("absorbing", "rescanning")


@dataclass
class AlphaEstimate:
    alpha: np.ndarray  # (U, T)
    stderr: np.ndarray  # (U, T); zero for exact results
    n_samples: int = 0

    @property
    def residual(self) -> np.ndarray:
        return np.array([residual_mass(row) for row in self.alpha])


def as_prob_matrix(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or 0 in p.shape:
        raise DomainError(f"p must be a non-empty (U, T) matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise DomainError("p entries must lie in [0, 1]")
    return p


def residual_mass(alpha_row) -> float:
    """Probability of falling off the end of memory: ``1 - sum(alpha)`` in [0, 1]."""
    return float(np.clip(1.0 - np.sum(alpha_row), 0.0, 1.0))


def enumerate_alpha_exact(p) -> AlphaEstimate:
    """Exact ``P(c_i = h_j)`` by summing over every monotonic selection path.

    A path picks ``t_1 <= t_2 <= ...`` (starting the first scan at entry 1),
    and a step that selects nothing ends the path: every later context is
    zero (absorbing fall-off).
    """
    p = as_prob_matrix(p)
    U, T = p.shape
    if T > MAX_EXACT_T or U > MAX_EXACT_U:
        raise DomainError(f"exact enumeration limited to T <= {MAX_EXACT_T}, U <= {MAX_EXACT_U}")
    alpha = np.zeros((U, T))

    def walk(i, start, prob):
        if i == U or prob == 0.0:
            return
        skip = 1.0  # probability that entries start..j-1 were all passed over
        for j in range(start, T):
            take = prob * skip * p[i, j]
            alpha[i, j] += take
            walk(i + 1, j, take)
            skip *= 1.0 - p[i, j]

    walk(0, 0, 1.0)
    return AlphaEstimate(alpha, np.zeros_like(alpha), 0)


def _simulate(p, n, rng: SeededRng, semantics):
    U, T = p.shape
    counts = np.zeros((U, T), dtype=np.int64)
    fired = rng.generator.random((n, U, T)) < p
    cols = np.arange(T)
    t = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for i in range(U):
        hits = fired[:, i, :] & (cols >= t[:, None])
        found = hits.any(axis=1)
        j = hits.argmax(axis=1)
        if semantics == "absorbing":
            found &= alive
            alive = found
        counts[i] = np.bincount(j[found], minlength=T)
        t = np.where(found, j, t)
    return counts


def monte_carlo_alpha(p, n: int, rng: SeededRng, semantics="absorbing", shards: int = 1,
                      n_jobs: int = 1) -> AlphaEstimate:
    """Empirical ``P(c_i = h_j)`` from ``n`` runs of the sampled hard process.

    ``absorbing`` zeroes every context after the first fall-off;
    ``rescanning`` keeps going from the last pick, as the decoding loop
    does. Shard ``k`` draws from stream ``rng.stream_id + k``, so the result
    depends on ``(seed, shards)`` but not on ``n_jobs``.
    """
    p = as_prob_matrix(p)
    if n < 1:
        raise DomainError("n must be >= 1")
    if semantics not in SEMANTICS:
        raise DomainError(f"semantics must be one of {SEMANTICS}")
    shards = max(1, min(shards, n))
    sizes = [n // shards + (k < n % shards) for k in range(shards)]
    streams = [rng.spawn(rng.stream_id + k) for k in range(shards)]
    jobs = list(zip(sizes, streams))
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            parts = list(pool.map(lambda job: _simulate(p, job[0], job[1], semantics), jobs))
    else:
        parts = [_simulate(p, size, stream, semantics) for size, stream in jobs]
    alpha = sum(parts) / n
    return AlphaEstimate(alpha, np.sqrt(alpha * (1.0 - alpha) / n), n)
