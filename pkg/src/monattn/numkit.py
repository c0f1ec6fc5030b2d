"""Numerically hardened primitives shared by the rest of the package.

Everything here works on 1-D float64 arrays. RNG state is always passed in
explicitly through :class:`SeededRng`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

TINY = 1e-300


class DomainError(ValueError):
    """An input violates the mathematical domain of an operation."""


def as_vector(values, name="values") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DomainError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite entries")
    return v


class SeededRng:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's Philox generator, whose 128-bit key is built from the
    seed (low word) and the stream id (high word), so distinct stream ids
    give independent streams and the same pair always replays the same
    draws.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        if not (0 <= seed < 2**64 and 0 <= stream_id < 2**64):
            raise DomainError("seed and stream_id must be 64-bit unsigned integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = self.seed | (self.stream_id << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed, stream_id)

    def get_state(self) -> dict:
        state = self.generator.bit_generator.state
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "counter": [int(c) for c in state["state"]["counter"]],
            "buffer": [int(b) for b in state["buffer"]],
            "buffer_pos": int(state["buffer_pos"]),
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> "SeededRng":
        rng = cls(state["seed"], state["stream_id"])
        full = rng.generator.bit_generator.state
        full["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        full["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        full["buffer_pos"] = state["buffer_pos"]
        full["has_uint32"] = state["has_uint32"]
        full["uinteger"] = state["uinteger"]
        rng.generator.bit_generator.state = full
        return rng

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream_id={self.stream_id})"


def softmax(e) -> np.ndarray:
    """Max-shifted softmax of a non-empty vector."""
    e = as_vector(e, "e")
    if e.size == 0:
        raise DomainError("softmax of an empty vector is undefined")
    z = np.exp(e - e.max())
    return z / z.sum()


def sigmoid(x):
    """Logistic sigmoid on scalars or arrays, via ``scipy.special.expit``.

    ``expit`` picks the overflow-free branch per element, so very negative
    inputs give small positive values (``sigmoid(-40) ~ 4.2e-18``) until
    they underflow near -745.
    """
    out = expit(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """``log(sigmoid(x))`` without cancellation."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def cumsum(v) -> np.ndarray:
    """Inclusive running sum."""
    return np.cumsum(np.asarray(v, dtype=np.float64))


def exclusive_cumprod_stable(v, eps: float = 1e-10, mode: str = "log") -> np.ndarray:
    """Exclusive running product ``[1, v0, v0*v1, ...]``.

    ``mode="log"`` sums logs (a zero factor gives ``-inf`` and so an exact
    zero); ``mode="exact"`` multiplies directly. ``eps`` is validated
    here but not applied: clamping is the caller's job, since only the
    denominator use of the product is clamped.
    """
    v = as_vector(v, "v")
    if not 0.0 < eps < 1.0:
        raise DomainError("eps must lie in (0, 1)")
    if np.any((v < 0.0) | (v > 1.0)):
        raise DomainError("exclusive_cumprod_stable needs entries in [0, 1]")
    if mode not in ("log", "exact"):
        raise DomainError(f"unknown cumprod mode {mode!r}")
    out = np.ones(v.size, dtype=np.float64)
    if v.size <= 1:
        return out
    if mode == "exact":
        out[1:] = np.cumprod(v[:-1])
    else:
        with np.errstate(divide="ignore"):
            out[1:] = np.exp(np.cumsum(np.log(v[:-1])))
    return out


def draw_gaussian(rng: SeededRng, n: int, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise DomainError("std must be non-negative")
    if std == 0:
        return np.zeros(n)
    return std * rng.generator.standard_normal(n)


def draw_bernoulli(rng: SeededRng, p: float) -> int:
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"Bernoulli probability {p} outside [0, 1]")
    # u in [0, 1), so p=0 never fires and p=1 always does
    return int(rng.generator.random() < p)
