"""scikit-learn style estimator around the monotonic-attention seq2seq model."""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import model as m
from ._validation import check_sequences
from .attention import MonotonicConfig
from .numkit import SeededRng

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class Adam:
    """Adam over a dict of arrays, updating them in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def state_dict(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state_dict(self, state):
        self.t = int(state["t"])
        self.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}


def clip_by_global_norm(grads, max_norm):
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def token_accuracy(predicted, target):
    """Matches counted position-wise over the target (EOS included), and target length."""
    hits = sum(1 for a, b in zip(predicted, target) if a == b)
    return hits, len(target)


class MonotonicSeq2Seq(BaseEstimator):
    """GRU encoder-decoder trained in expectation, decoded with hard monotonic attention.

    ``X`` is a list of input token sequences over ``0..n_inputs-1`` and ``y``
    a list of output token sequences over ``0..n_outputs-1`` (without
    end-of-sequence; it is appended internally with id ``n_outputs``).
    Alphabet sizes default to the largest token seen in ``fit``.

    Parameters mirror the training configuration: optimiser settings,
    network sizes, and the monotonic attention settings (``noise_std``,
    ``tau``, ``eps``, ``denom_mode``).
    """

    def __init__(self, energy="modified", n_inputs=None, n_outputs=None, embed_dim=32,
                 hidden_dim=64, decoder_dim=64, attention_dim=64, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, adam_eps=1e-8, clip_norm=2.0, batch_size=16,
                 max_steps=20000, noise_std=1.0, tau=0.5, eps=1e-10, denom_mode="clamped",
                 r_init=-2.0, init_scale=0.1, random_state=0):
        self.energy = energy
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.decoder_dim = decoder_dim
        self.attention_dim = attention_dim
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.max_steps = max_steps
        self.noise_std = noise_std
        self.tau = tau
        self.eps = eps
        self.denom_mode = denom_mode
        self.r_init = r_init
        self.init_scale = init_scale
        self.random_state = random_state

    # -- setup -------------------------------------------------------

    @property
    def monotonic_config(self) -> MonotonicConfig:
        return MonotonicConfig(self.noise_std, self.tau, self.eps, self.denom_mode, self.random_state)

    def _initialize(self, n_inputs, n_outputs):
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        self.dims_ = m.ModelDims(n_inputs, n_outputs + 1, self.embed_dim, self.hidden_dim,
                                 self.decoder_dim, self.attention_dim, self.energy)
        self.params_ = m.init_params(self.dims_, SeededRng(self.random_state, 1),
                                     self.init_scale, self.r_init)
        self.optimizer_ = Adam(self.params_, self.learning_rate, self.beta1, self.beta2, self.adam_eps)
        self.noise_rng_ = SeededRng(self.random_state, 2)
        self.batch_rng_ = SeededRng(self.random_state, 3)
        self.n_steps_ = 0
        self.loss_curve_ = []

    def _targets(self, y):
        eos = self.dims_.eos
        return [list(t) + [eos] for t in y]

    # -- training ----------------------------------------------------

    def train_step(self, xs, ys_eos):
        """One Adam update on a batch whose targets already end in EOS."""
        B = len(xs)
        noise = None
        if self.noise_std > 0:
            shape = (B, max(len(t) for t in ys_eos), max(len(x) for x in xs))
            noise = self.noise_std * self.noise_rng_.generator.standard_normal(shape)
        loss, record = m.forward(self.params_, self.dims_, xs, ys_eos, noise)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became {loss} at step {self.n_steps_}")
        grads = m.backward(self.params_, self.dims_, record)
        clip_by_global_norm(grads, self.clip_norm)
        self.optimizer_.step(grads)
        self.n_steps_ += 1
        self.loss_curve_.append(float(loss))
        return float(loss)

    def fit(self, X, y):
        X = check_sequences(X, self.n_inputs, "X")
        y = check_sequences(y, self.n_outputs, "y", allow_empty=True)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} sequences but y has {len(y)}")
        n_in = self.n_inputs or int(max(max(s) for s in X)) + 1
        n_out = self.n_outputs or int(max((max(s) for s in y if len(s)), default=0)) + 1
        self._initialize(n_in, n_out)
        ys = self._targets(y)
        gen = self.batch_rng_.generator
        for _ in range(self.max_steps):
            idx = gen.integers(0, len(X), min(self.batch_size, len(X)))
            self.train_step([X[k] for k in idx], [ys[k] for k in idx])
        return self

    # -- inference ---------------------------------------------------

    def encode(self, x):
        check_is_fitted(self, "params_")
        return m.encode(self.params_, x, self.dims_)

    def decode(self, x, mode="hard", max_len=None):
        """Full :class:`~monattn.model.DecodeResult` for one input sequence."""
        check_is_fitted(self, "params_")
        H = self.encode(x)
        max_len = max_len or 2 * len(x) + 2
        cfg = self.monotonic_config
        if mode == "hard":
            return m.decode_greedy_hard(self.params_, self.dims_, H, max_len, cfg)
        if mode == "soft":
            return m.decode_greedy_soft(self.params_, self.dims_, H, max_len, cfg)
        raise ValueError(f"mode must be 'hard' or 'soft', got {mode!r}")

    def predict(self, X, mode="hard", max_len=None):
        X = check_sequences(X, self.dims_.n_inputs if hasattr(self, "dims_") else None, "X")
        return [self.decode(x, mode, max_len).tokens for x in X]

    def score(self, X, y, mode="hard"):
        """Token accuracy of greedy decodes (EOS counted as a token)."""
        hits = total = 0
        for pred, target in zip(self.predict(X, mode), y):
            eos = self.dims_.eos
            h, n = token_accuracy(list(pred) + [eos], list(target) + [eos])
            hits += h
            total += n
        return hits / total
