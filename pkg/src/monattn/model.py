"""GRU encoder-decoder with monotonic attention, written against plain numpy.

Parameters live in a flat ``dict[str, ndarray]``. Scalars ``att_g`` and
``att_r`` are stored as shape-(1,) arrays so every parameter can be updated
and serialised the same way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import layers
from .attention import (
    DotEnergyParams,
    MonotonicConfig,
    MonotonicEnergyParams,
    MonotonicState,
    hard_monotonic_step,
)
from .numkit import DomainError, SeededRng

ENERGY_KINDS = ("modified", "dot")


@dataclass(frozen=True)
class ModelDims:
    n_inputs: int  # input alphabet size
    n_outputs: int  # output softmax size, EOS included
    embed_dim: int = 32
    hidden_dim: int = 64  # encoder, d_h
    decoder_dim: int = 64  # d_s
    attention_dim: int = 64  # d_a
    energy: str = "modified"

    @property
    def sos(self) -> int:
        return self.n_outputs

    @property
    def eos(self) -> int:
        return self.n_outputs - 1


def param_shapes(dims: ModelDims) -> dict:
    d_e, d_h, d_s, d_a = dims.embed_dim, dims.hidden_dim, dims.decoder_dim, dims.attention_dim
    shapes = {
        "emb_in": (dims.n_inputs, d_e),
        "enc_Wx": (d_e, 3 * d_h),
        "enc_Uh": (d_h, 3 * d_h),
        "enc_b": (3 * d_h,),
        "emb_out": (dims.n_outputs + 1, d_e),  # + SOS
        "dec_Wx": (d_e + d_h, 3 * d_s),
        "dec_Uh": (d_s, 3 * d_s),
        "dec_b": (3 * d_s,),
    }
    if dims.energy == "modified":
        shapes.update(att_W=(d_a, d_s), att_V=(d_a, d_h), att_b=(d_a,), att_v=(d_a,))
    elif dims.energy == "dot":
        shapes.update(att_W=(d_s, d_h))
    else:
        raise DomainError(f"energy must be one of {ENERGY_KINDS}")
    shapes.update(att_g=(1,), att_r=(1,), out_W=(d_s + d_h, dims.n_outputs), out_b=(dims.n_outputs,))
    return shapes


def init_params(dims: ModelDims, rng: SeededRng, scale=0.1, r_init=-2.0) -> dict:
    gen = rng.generator
    P = {name: gen.uniform(-scale, scale, shape) for name, shape in param_shapes(dims).items()}
    P["att_g"] = np.array([1.0 / np.sqrt(dims.attention_dim)])
    P["att_r"] = np.array([float(r_init)])
    return P


def energy_params(P, dims: ModelDims):
    """The attention slice of ``P`` as an energy-parameter object."""
    g, r = P["att_g"][0], P["att_r"][0]
    if dims.energy == "modified":
        return MonotonicEnergyParams(P["att_W"], P["att_V"], P["att_b"], P["att_v"], g, r)
    return DotEnergyParams(P["att_W"], g, r)


def _pad(seqs, fill):
    lengths = np.array([len(s) for s in seqs])
    out = np.full((len(seqs), lengths.max()), fill, dtype=np.int64)
    for k, s in enumerate(seqs):
        out[k, : len(s)] = s
    return out, lengths


def _check_tokens(seq, n, what):
    seq = np.asarray(seq, dtype=np.int64)
    if seq.ndim != 1 or seq.size == 0:
        raise DomainError(f"{what} must be a non-empty 1-D token sequence")
    if seq.min() < 0 or seq.max() >= n:
        raise DomainError(f"{what} contains a token outside [0, {n})")
    return seq


# ------------------------------------------------------------ encoder


def encode_batch(P, X):
    """Run the encoder over padded inputs ``(B, T)``; returns memory and caches."""
    B, T = X.shape
    d_h = P["enc_Uh"].shape[0]
    h = np.zeros((B, d_h))
    H = np.empty((B, T, d_h))
    caches = []
    for t in range(T):
        h, cache = layers.gru_forward(P["emb_in"][X[:, t]], h, P, "enc_")
        H[:, t] = h
        caches.append(cache)
    return H, caches


def encode(P, tokens, dims: Optional[ModelDims] = None) -> np.ndarray:
    """Memory ``(T, d_h)`` for one input sequence, computed left to right."""
    n = P["emb_in"].shape[0] if dims is None else dims.n_inputs
    x = _check_tokens(tokens, n, "input")
    return encode_batch(P, x[None, :])[0][0]


# ----------------------------------------------- teacher-forced training


@dataclass
class ForwardRecord:
    """Everything the backward pass needs from one teacher-forced forward pass."""

    X: np.ndarray
    Y: np.ndarray
    y_mask: np.ndarray
    mem_mask: np.ndarray
    H: np.ndarray
    proj: np.ndarray
    enc: list
    steps: list
    n_tokens: float
    alphas: np.ndarray


def forward(P, dims: ModelDims, xs, ys, noise=None):
    """Teacher-forced soft monotonic decoding of a batch.

    ``ys`` must end in EOS. ``noise`` (``(B, U, T)``) is added to the
    energies before the sigmoid; ``None`` means no noise. Returns the mean
    per-token cross-entropy and a :class:`ForwardRecord`.
    """
    X, x_len = _pad(xs, 0)
    Y, y_len = _pad(ys, dims.eos)
    B, T = X.shape
    U = Y.shape[1]
    mem_mask = (np.arange(T)[None, :] < x_len[:, None]).astype(np.float64)
    y_mask = (np.arange(U)[None, :] < y_len[:, None]).astype(np.float64)
    y_prev = np.concatenate([np.full((B, 1), dims.sos), Y[:, :-1]], axis=1)

    H, enc = encode_batch(P, X)
    proj = layers.memory_projection(dims.energy, P, H)
    s = np.zeros((B, dims.decoder_dim))
    alpha = np.zeros((B, T))
    alpha[:, 0] = 1.0
    alphas = np.empty((B, U, T))
    steps = []
    total = 0.0
    for i in range(U):
        e, ecache = layers.energy_forward(dims.energy, P, s, proj)
        if noise is not None:
            e = e + noise[:, i, :T]
        alpha, mcache = layers.monotonic_forward(e, alpha, mem_mask)
        c = np.einsum("bt,btd->bd", alpha, H)
        x_dec = np.concatenate([P["emb_out"][y_prev[:, i]], c], axis=1)
        s, gcache = layers.gru_forward(x_dec, s, P, "dec_")
        nll, _, ocache = layers.output_forward(s, c, P, Y[:, i], y_mask[:, i])
        total += nll
        alphas[:, i] = alpha
        steps.append((ecache, mcache, alpha, gcache, ocache, y_prev[:, i]))
    n_tokens = y_mask.sum()
    record = ForwardRecord(X, Y, y_mask, mem_mask, H, proj, enc, steps, n_tokens, alphas)
    return total / n_tokens, record


def backward(P, dims: ModelDims, record: ForwardRecord) -> dict:
    """Gradient of the mean per-token loss with respect to every parameter."""
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    H = record.H
    B = H.shape[0]
    d_s, d_e = dims.decoder_dim, dims.embed_dim
    dH = np.zeros_like(H)
    dproj = np.zeros_like(record.proj)
    ds_next = np.zeros((B, d_s))
    dalpha_next = np.zeros(H.shape[:2])
    dloss = 1.0 / record.n_tokens
    for ecache, mcache, alpha, gcache, ocache, y_prev in reversed(record.steps):
        dsc = layers.output_backward(dloss, ocache, P, grads)
        ds = dsc[:, :d_s] + ds_next
        dc = dsc[:, d_s:]
        dx_dec, ds_prev = layers.gru_backward(ds, gcache, P, "dec_", grads)
        np.add.at(grads["emb_out"], y_prev, dx_dec[:, :d_e])
        dc = dc + dx_dec[:, d_e:]
        dalpha = dalpha_next + np.einsum("bd,btd->bt", dc, H)
        dH += alpha[:, :, None] * dc[:, None, :]
        de, dalpha_next = layers.monotonic_backward(dalpha, mcache)
        ds_next = ds_prev + layers.energy_backward(de, ecache, P, grads, dproj)
    dH += layers.memory_projection_backward(dims.energy, P, H, dproj, grads)
    dh = np.zeros((B, H.shape[2]))
    for t in range(H.shape[1] - 1, -1, -1):
        dx, dh = layers.gru_backward(dH[:, t] + dh, record.enc[t], P, "enc_", grads)
        np.add.at(grads["emb_in"], record.X[:, t], dx)
    return grads


def decode_train(P, dims: ModelDims, memory_tokens, target, cfg: MonotonicConfig, rng: SeededRng):
    """Teacher-forced loss and ``(U, T)`` attention rows for one pair, with training noise."""
    x = _check_tokens(memory_tokens, dims.n_inputs, "input")
    y = _check_tokens(target, dims.n_outputs, "target")
    if y[-1] != dims.eos:
        raise DomainError("target must end with EndOfSequence")
    noise = None
    if cfg.noise_std > 0:
        noise = cfg.noise_std * rng.generator.standard_normal((1, y.size, x.size))
    loss, record = forward(P, dims, [x], [y], noise)
    return loss, record.alphas[0]


# ------------------------------------------------------------- decoding


@dataclass
class DecodeResult:
    tokens: list  # emitted symbols, EOS excluded
    ended: bool  # EOS was produced before max_len
    selected: list  # hard mode: 1-based index per step, None for zero context
    alphas: Optional[np.ndarray]  # soft mode: (steps, T)
    n_energy: int


def _step_output(P, dims, s, c, y_prev):
    x_dec = np.concatenate([P["emb_out"][[y_prev]], c[None, :]], axis=1)
    s, _ = layers.gru_forward(x_dec, s, P, "dec_")
    logits = np.concatenate([s[0], c]) @ P["out_W"] + P["out_b"]
    return s, int(np.argmax(logits))


def decode_greedy_hard(P, dims: ModelDims, memory, max_len, cfg: MonotonicConfig = MonotonicConfig()):
    """Greedy decode with the online hard monotonic process.

    Once a step falls off the end of memory, every later context is zero
    and no more energies are computed; this keeps the energy count within
    ``T + steps``.
    """
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    params = energy_params(P, dims)
    H = np.asarray(memory, dtype=np.float64)
    T = H.shape[0]
    s = np.zeros((1, dims.decoder_dim))
    state = MonotonicState(1)
    y_prev = dims.sos
    fell_off = False
    tokens, selected = [], []
    n_energy = 0
    ended = False
    for _ in range(max_len):
        if fell_off:
            c, pick = np.zeros(H.shape[1]), None
        else:
            step = hard_monotonic_step(params, s[0], H, state, cfg)
            c, state, pick = step.context, step.state, step.selected
            n_energy += step.n_energy
            fell_off = pick is None
        selected.append(pick)
        s, y = _step_output(P, dims, s, c, y_prev)
        if y == dims.eos:
            ended = True
            break
        tokens.append(y)
        y_prev = y
    if n_energy > T + len(selected):
        raise AssertionError(f"hard decode used {n_energy} energies for T={T}, U={len(selected)}")
    return DecodeResult(tokens, ended, selected, None, n_energy)


def decode_greedy_soft(P, dims: ModelDims, memory, max_len, cfg: MonotonicConfig = MonotonicConfig()):
    """Greedy decode using the noise-free expected context at every step (offline)."""
    if max_len < 1:
        raise DomainError("max_len must be >= 1")
    H = np.asarray(memory, dtype=np.float64)[None]
    T = H.shape[1]
    proj = layers.memory_projection(dims.energy, P, H)
    s = np.zeros((1, dims.decoder_dim))
    alpha = np.zeros((1, T))
    alpha[0, 0] = 1.0
    y_prev = dims.sos
    tokens, rows = [], []
    ended = False
    for _ in range(max_len):
        e, _ = layers.energy_forward(dims.energy, P, s, proj)
        alpha, _ = layers.monotonic_forward(e, alpha)
        rows.append(alpha[0])
        c = alpha[0] @ H[0]
        s, y = _step_output(P, dims, s, c, y_prev)
        if y == dims.eos:
            ended = True
            break
        tokens.append(y)
        y_prev = y
    return DecodeResult(tokens, ended, [], np.array(rows), T * len(rows))
