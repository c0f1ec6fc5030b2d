"""Energy functions, softmax attention, and monotonic attention.

Memory is a ``(T, d_h)`` float64 array; attention rows are length-``T``
vectors. Memory indices in every public interface (``MonotonicState.t_prev``,
the ``selected`` index of a hard step) are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from .numkit import (
    DomainError,
    SeededRng,
    as_vector,
    cumsum,
    draw_bernoulli,
    draw_gaussian,
    exclusive_cumprod_stable,
    sigmoid,
    softmax,
)

DENOM_MODES = ("clamped", "unit")


@dataclass(frozen=True)
class MonotonicEnergyParams:
    """Weight-normalised additive energy ``g * v.tanh(W s + V h + b) / |v| + r``."""

    W: np.ndarray  # (d_a, d_s)
    V: np.ndarray  # (d_a, d_h)
    b: np.ndarray  # (d_a,)
    v: np.ndarray  # (d_a,)
    g: float
    r: float

    def __post_init__(self):
        for name in ("W", "V", "b", "v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "r", float(self.r))
        d_a = self.v.shape[0]
        if self.W.shape[0] != d_a or self.V.shape[0] != d_a or self.b.shape != (d_a,):
            raise DomainError("W, V, b and v disagree on the attention dimension")
        if not np.linalg.norm(self.v) > 0:
            raise DomainError("v must have non-zero norm")

    @classmethod
    def initialize(cls, d_s, d_h, d_a, rng: SeededRng, scale=0.1, r=-2.0, g=None):
        gen = rng.generator
        return cls(
            W=gen.uniform(-scale, scale, (d_a, d_s)),
            V=gen.uniform(-scale, scale, (d_a, d_h)),
            b=gen.uniform(-scale, scale, d_a),
            v=gen.uniform(-scale, scale, d_a),
            g=1.0 / np.sqrt(d_a) if g is None else g,
            r=r,
        )


@dataclass(frozen=True)
class DotEnergyParams:
    """Bilinear energy ``g * s.W h + r``."""

    W: np.ndarray  # (d_s, d_h)
    g: float
    r: float

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=np.float64))
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "r", float(self.r))
        if self.W.ndim != 2 or not np.all(np.isfinite(self.W)):
            raise DomainError("W must be a finite matrix")

    @classmethod
    def initialize(cls, d_s, d_h, d_a, rng: SeededRng, scale=0.1, r=-2.0, g=None):
        # d_a only sets the default g so both energy kinds share one signature
        return cls(
            W=rng.generator.uniform(-scale, scale, (d_s, d_h)),
            g=1.0 / np.sqrt(d_a) if g is None else g,
            r=r,
        )


EnergyParams = Union[MonotonicEnergyParams, DotEnergyParams]


@dataclass(frozen=True)
class MonotonicConfig:
    noise_std: float = 1.0
    tau: float = 0.5
    eps: float = 1e-10
    denom_mode: str = "clamped"
    seed: int = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise DomainError("noise_std must be >= 0")
        if not 0.0 < self.tau < 1.0:
            raise DomainError("tau must lie in (0, 1)")
        if not 0.0 < self.eps < 1.0:
            raise DomainError("eps must lie in (0, 1)")
        if self.denom_mode not in DENOM_MODES:
            raise DomainError(f"denom_mode must be one of {DENOM_MODES}")

    def replace(self, **changes) -> "MonotonicConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class MonotonicState:
    t_prev: int = 1


class HardStep(NamedTuple):
    context: np.ndarray
    state: MonotonicState
    selected: Optional[int]  # 1-based, None on fall-off
    n_energy: int


def as_memory(memory) -> np.ndarray:
    h = np.asarray(memory, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 1:
        raise DomainError(f"memory must be a non-empty (T, d_h) array, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise DomainError("memory contains non-finite entries")
    return h


def delta_row(T: int) -> np.ndarray:
    """Initial attention row: all mass on the first memory entry."""
    a = np.zeros(T)
    a[0] = 1.0
    return a


# ---------------------------------------------------------------- energies


def energy_bahdanau(W, V, b, v, s_prev, h_j) -> float:
    W, V, b, v = (np.asarray(x, dtype=np.float64) for x in (W, V, b, v))
    s_prev, h_j = np.asarray(s_prev, dtype=np.float64), np.asarray(h_j, dtype=np.float64)
    try:
        return float(v @ np.tanh(W @ s_prev + V @ h_j + b))
    except ValueError as exc:
        raise DomainError(f"dimension mismatch in additive energy: {exc}") from None


def energies(params: EnergyParams, s_prev, memory) -> np.ndarray:
    """Energies of every memory row (rows of ``memory``) against ``s_prev``."""
    s_prev = np.asarray(s_prev, dtype=np.float64)
    h = np.asarray(memory, dtype=np.float64)
    try:
        if isinstance(params, MonotonicEnergyParams):
            v_hat = params.v / np.linalg.norm(params.v)
            hidden = np.tanh(params.W @ s_prev + h @ params.V.T + params.b)
            return params.g * (hidden @ v_hat) + params.r
        if isinstance(params, DotEnergyParams):
            return params.g * (h @ (s_prev @ params.W)) + params.r
    except ValueError as exc:
        raise DomainError(f"dimension mismatch in energy: {exc}") from None
    raise TypeError(f"unsupported energy parameters {type(params).__name__}")


def energy_modified(params: MonotonicEnergyParams, s_prev, h_j) -> float:
    if not isinstance(params, MonotonicEnergyParams):
        raise TypeError("energy_modified expects MonotonicEnergyParams")
    return float(energies(params, s_prev, np.atleast_2d(h_j))[0])


def energy_dot(params: DotEnergyParams, s_prev, h_j) -> float:
    if not isinstance(params, DotEnergyParams):
        raise TypeError("energy_dot expects DotEnergyParams")
    return float(energies(params, s_prev, np.atleast_2d(h_j))[0])


# ------------------------------------------------------- softmax attention


def softmax_attention(e, memory):
    """Returns ``(alpha, context)`` for ordinary softmax attention."""
    h = as_memory(memory)
    e = as_vector(e, "energies")
    if e.shape[0] != h.shape[0]:
        raise DomainError(f"{e.shape[0]} energies for a memory of length {h.shape[0]}")
    alpha = softmax(e)
    return alpha, alpha @ h


# ----------------------------------------------------- monotonic attention


def _check_rows(p, alpha_prev):
    p = np.asarray(p, dtype=np.float64)
    alpha_prev = np.asarray(alpha_prev, dtype=np.float64)
    if p.shape != alpha_prev.shape or p.ndim < 1:
        raise DomainError(f"p {p.shape} and alpha_prev {alpha_prev.shape} must match")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(alpha_prev))):
        raise DomainError("non-finite attention input")
    if np.any((p < 0.0) | (p > 1.0)):
        raise DomainError("selection probabilities must lie in [0, 1]")
    return p, alpha_prev


def recurrence_forward(p: np.ndarray, alpha_prev: np.ndarray):
    """Unchecked q-form recurrence over the last axis; returns ``(alpha, q)``."""
    q = np.empty_like(p)
    q[..., 0] = alpha_prev[..., 0]
    for j in range(1, p.shape[-1]):
        q[..., j] = (1.0 - p[..., j - 1]) * q[..., j - 1] + alpha_prev[..., j]
    return p * q, q


def monotonic_alpha_recurrence(p_row, alpha_prev) -> np.ndarray:
    """Expected attention row via ``q_j = (1 - p_{j-1}) q_{j-1} + alpha_prev_j``.

    Works on any leading batch shape; ``p`` is never divided by.
    """
    p, alpha_prev = _check_rows(p_row, alpha_prev)
    return recurrence_forward(p, alpha_prev)[0]


def monotonic_alpha_scan(p_row, alpha_prev, cfg: MonotonicConfig = MonotonicConfig()) -> np.ndarray:
    """Closed-form cumprod/cumsum solution of the recurrence for one row.

    The exclusive product of ``1 - p`` is taken in log-space. As a divisor it
    is floored at ``cfg.eps`` (``clamped``) or replaced by 1 (``unit``).
    """
    p, alpha_prev = _check_rows(p_row, alpha_prev)
    if p.ndim != 1:
        raise DomainError("monotonic_alpha_scan works on a single row")
    D = exclusive_cumprod_stable(1.0 - p, cfg.eps, mode="log")
    denom = np.maximum(D, cfg.eps) if cfg.denom_mode == "clamped" else 1.0
    return p * (D * cumsum(alpha_prev / denom))


def monotonic_context(alpha, memory) -> np.ndarray:
    """``sum_j alpha_j h_j``; leftover mass implicitly attends to a zero vector."""
    h = as_memory(memory)
    alpha = as_vector(alpha, "alpha")
    if alpha.shape[0] != h.shape[0]:
        raise DomainError(f"alpha of length {alpha.shape[0]} for memory of length {h.shape[0]}")
    return alpha @ h


def soft_monotonic_step(
    params: EnergyParams,
    s_prev,
    memory,
    alpha_prev,
    cfg: MonotonicConfig = MonotonicConfig(),
    rng: Optional[SeededRng] = None,
    training: bool = False,
    method: str = "recurrence",
):
    """One step of training-in-expectation; returns ``(alpha, context)``.

    Pre-sigmoid Gaussian noise (``cfg.noise_std``) is drawn fresh per memory
    entry only when ``training`` is set, which then requires ``rng``.
    """
    h = as_memory(memory)
    e = energies(params, s_prev, h)
    if training and cfg.noise_std > 0:
        if rng is None:
            raise DomainError("training-mode noise needs an rng")
        e = e + draw_gaussian(rng, e.shape[0], cfg.noise_std)
    p = sigmoid(e)
    if method == "recurrence":
        alpha = monotonic_alpha_recurrence(p, alpha_prev)
    elif method == "scan":
        alpha = monotonic_alpha_scan(p, alpha_prev, cfg)
    else:
        raise DomainError(f"unknown method {method!r}")
    return alpha, alpha @ h


def hard_monotonic_step(
    params: EnergyParams,
    s_prev,
    memory,
    state: MonotonicState = MonotonicState(),
    cfg: MonotonicConfig = MonotonicConfig(),
    sample: bool = False,
    rng: Optional[SeededRng] = None,
) -> HardStep:
    """Scan memory left to right from ``state.t_prev`` and stop at the first pick.

    Energies are evaluated one entry at a time, so entries before
    ``t_prev`` are never touched and entries after the pick are never
    scored. Picks use ``p > cfg.tau`` unless ``sample`` is set, in which
    case each entry is a Bernoulli draw from ``rng``. On fall-off the
    context is zero and ``t_prev`` is carried forward unchanged.
    """
    h = np.asarray(memory, dtype=np.float64)
    T = h.shape[0]
    t_prev = state.t_prev
    if not 1 <= t_prev <= T:
        raise DomainError(f"t_prev={t_prev} outside 1..{T}")
    if sample and rng is None:
        raise DomainError("sampling mode needs an rng")
    n = 0
    for j in range(t_prev, T + 1):
        e = energies(params, s_prev, h[j - 1 : j])[0]
        n += 1
        p = sigmoid(e)
        chosen = draw_bernoulli(rng, p) if sample else p > cfg.tau
        if chosen:
            return HardStep(h[j - 1].copy(), MonotonicState(j), j, n)
    return HardStep(np.zeros(h.shape[1]), state, None, n)
