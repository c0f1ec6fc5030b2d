"""Monotonic attention: hard online decoding, soft training in expectation,
exact and Monte-Carlo oracles, gradient checks, a toy seq2seq model and a
timing benchmark."""

from .attention import (
    DotEnergyParams,
    HardStep,
    MonotonicConfig,
    MonotonicEnergyParams,
    MonotonicState,
    energy_bahdanau,
    energy_dot,
    energy_modified,
    hard_monotonic_step,
    monotonic_alpha_recurrence,
    monotonic_alpha_scan,
    monotonic_context,
    soft_monotonic_step,
    softmax_attention,
)
from .estimator import MonotonicSeq2Seq
from .numkit import DomainError, SeededRng
from .oracle import AlphaEstimate, enumerate_alpha_exact, monte_carlo_alpha, residual_mass
from .task import TaskSpec, generate_task, sample_pair

__version__ = "0.1.0"

__all__ = [
    "AlphaEstimate", "DomainError", "DotEnergyParams", "HardStep", "MonotonicConfig",
    "MonotonicEnergyParams", "MonotonicSeq2Seq", "MonotonicState", "SeededRng", "TaskSpec",
    "energy_bahdanau", "energy_dot", "energy_modified", "enumerate_alpha_exact",
    "generate_task", "hard_monotonic_step", "monotonic_alpha_recurrence",
    "monotonic_alpha_scan", "monotonic_context", "monte_carlo_alpha", "residual_mass",
    "sample_pair", "soft_monotonic_step", "softmax_attention",
]
