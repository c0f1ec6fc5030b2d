"""Reverse-mode gradients for the attention path, checked against central differences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import layers
from . import model as m
from .attention import (
    DotEnergyParams,
    MonotonicConfig,
    MonotonicEnergyParams,
    _check_rows,
    as_memory,
    recurrence_forward,
    softmax_attention,
)
from .numkit import DomainError, SeededRng, sigmoid


@dataclass
class GradReport:
    max_rel_error: dict = field(default_factory=dict)
    max_abs_error: dict = field(default_factory=dict)
    rel_tol: float = 1e-5
    passed: bool = True

    def merge(self, other: "GradReport") -> "GradReport":
        for k, v in other.max_rel_error.items():
            self.max_rel_error[k] = max(self.max_rel_error.get(k, 0.0), v)
            self.max_abs_error[k] = max(self.max_abs_error.get(k, 0.0), other.max_abs_error[k])
        self.passed = self.passed and other.passed
        return self

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def finite_difference(f: Callable, x, h: float = 1e-6) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad


def check_gradients(analytic, numeric, rel_tol=1e-5, abs_tol=1e-8, name="x") -> GradReport:
    """Entrywise ``|a - n| / max(|a|, |n|, abs_tol)``; passes iff every entry is within ``rel_tol``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise DomainError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    diff = np.abs(a - n)
    rel = diff / np.maximum(np.maximum(np.abs(a), np.abs(n)), abs_tol)
    worst = float(rel.max(initial=0.0))
    return GradReport({name: worst}, {name: float(diff.max(initial=0.0))}, rel_tol, worst <= rel_tol)


# --------------------------------------------------- analytic gradients


def backward_monotonic_alpha(p_row, alpha_prev, upstream_dalpha):
    """``(d_p, d_alpha_prev)`` of the q-form recurrence, any leading batch shape."""
    p, alpha_prev = _check_rows(p_row, alpha_prev)
    upstream = np.asarray(upstream_dalpha, dtype=np.float64)
    if upstream.shape != p.shape:
        raise DomainError(f"upstream gradient shape {upstream.shape} != {p.shape}")
    _, q = recurrence_forward(p, alpha_prev)
    return layers.recurrence_backward(p, q, upstream)


def backward_monotonic_scan(p_row, alpha_prev, upstream_dalpha, cfg: MonotonicConfig = MonotonicConfig()):
    """``(d_p, d_alpha_prev)`` of the closed-form scan; zero through an active clamp."""
    p, alpha_prev = _check_rows(p_row, alpha_prev)
    upstream = np.asarray(upstream_dalpha, dtype=np.float64)
    if upstream.shape != p.shape or p.ndim != 1:
        raise DomainError("scan gradients need matching 1-D rows")
    return layers.scan_backward(p, alpha_prev, upstream, cfg.eps, cfg.denom_mode)


def backward_softmax_attention(e, memory, upstream_dcontext):
    """``(d_e, d_memory)`` of ``context = softmax(e) @ memory``."""
    h = as_memory(memory)
    alpha, _ = softmax_attention(e, h)
    dc = np.asarray(upstream_dcontext, dtype=np.float64)
    dalpha = h @ dc
    de = alpha * (dalpha - alpha @ dalpha)
    return de, np.outer(alpha, dc)


def _energy_dict(params):
    if isinstance(params, MonotonicEnergyParams):
        return "modified", {"att_W": params.W, "att_V": params.V, "att_b": params.b,
                            "att_v": params.v, "att_g": np.array([params.g]),
                            "att_r": np.array([params.r])}
    if isinstance(params, DotEnergyParams):
        return "dot", {"att_W": params.W, "att_g": np.array([params.g]), "att_r": np.array([params.r])}
    raise TypeError(f"unsupported energy parameters {type(params).__name__}")


_PUBLIC = {"att_W": "W", "att_V": "V", "att_b": "b", "att_v": "v", "att_g": "g", "att_r": "r"}


@dataclass
class StepRecord:
    """Forward trace of one soft monotonic step; noise is stored as an input."""

    kind: str
    P: dict
    s_prev: np.ndarray
    memory: np.ndarray
    alpha_prev: np.ndarray
    noise: np.ndarray
    proj: np.ndarray
    e: np.ndarray
    ecache: tuple
    mcache: tuple
    alpha: np.ndarray
    context: np.ndarray


def forward_step(params, s_prev, memory, alpha_prev, noise=None) -> StepRecord:
    """Energy -> (+ noise) -> sigmoid -> recurrence -> context, keeping every intermediate."""
    kind, P = _energy_dict(params)
    h = as_memory(memory)
    s = np.asarray(s_prev, dtype=np.float64)[None, :]
    a_prev = np.asarray(alpha_prev, dtype=np.float64)
    noise = np.zeros(h.shape[0]) if noise is None else np.asarray(noise, dtype=np.float64)
    proj = layers.memory_projection(kind, P, h[None])
    e, ecache = layers.energy_forward(kind, P, s, proj)
    e = e + noise
    alpha, mcache = layers.monotonic_forward(e, a_prev[None, :])
    context = alpha[0] @ h
    return StepRecord(kind, P, s[0], h, a_prev, noise, proj, e[0], ecache, mcache, alpha[0], context)


def backward_step(record: StepRecord, upstream_dcontext, upstream_dalpha=None) -> dict:
    P = record.P
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    dc = np.asarray(upstream_dcontext, dtype=np.float64)
    dalpha = record.memory @ dc
    if upstream_dalpha is not None:
        dalpha = dalpha + np.asarray(upstream_dalpha, dtype=np.float64)
    de, dalpha_prev = layers.monotonic_backward(dalpha[None, :], record.mcache)
    dproj = np.zeros_like(record.proj)
    ds = layers.energy_backward(de, record.ecache, P, grads, dproj)
    dH = layers.memory_projection_backward(record.kind, P, record.memory[None], dproj, grads)
    out = {_PUBLIC[k]: (v[0] if k in ("att_g", "att_r") else v) for k, v in grads.items()}
    out["s_prev"] = ds[0]
    out["memory"] = dH[0] + np.outer(record.alpha, dc)
    out["alpha_prev"] = dalpha_prev[0]
    return out


def backward_full_step(params, s_prev, memory, alpha_prev, upstream_dcontext, noise=None,
                       upstream_dalpha=None) -> dict:
    """Gradients of one soft monotonic step for every parameter and input.

    Keys: the energy parameter names (``W, V, b, v, g, r`` or ``W, g, r``),
    plus ``s_prev``, ``memory`` and ``alpha_prev``. ``noise`` is treated as
    a constant input.
    """
    record = forward_step(params, s_prev, memory, alpha_prev, noise)
    return backward_step(record, upstream_dcontext, upstream_dalpha)


# ------------------------------------------------------------ the suite


def _compare(analytic: dict, numeric: dict, rel_tol, abs_tol, prefix="") -> GradReport:
    report = GradReport(rel_tol=rel_tol)
    for k in numeric:
        report.merge(check_gradients(analytic[k], numeric[k], rel_tol, abs_tol, prefix + k))
    return report


def _fd_over(f, values: dict, h):
    """Central differences of ``f(values)`` with respect to each named array."""
    out = {}
    for k in values:
        def fk(x, k=k):
            return f({**values, k: x})
        out[k] = finite_difference(fk, values[k], h)
    return out


def _case_monotonic_alpha(gen, h, rel_tol, abs_tol):
    T = int(gen.integers(1, 9))
    p = gen.uniform(0.01, 0.99, T)
    a = gen.dirichlet(np.ones(T)) * gen.uniform(0.2, 1.0)
    w = gen.standard_normal(T)

    def f(v):
        return float(w @ recurrence_forward(v["p"], v["a"])[0])
    dp, da = backward_monotonic_alpha(p, a, w)
    return _compare({"p": dp, "a": da}, _fd_over(f, {"p": p, "a": a}, h), rel_tol, abs_tol)


def _case_monotonic_scan(gen, h, rel_tol, abs_tol):
    from .attention import monotonic_alpha_scan
    T = int(gen.integers(1, 9))
    p = gen.uniform(0.01, 0.99, T)
    a = gen.dirichlet(np.ones(T)) * gen.uniform(0.2, 1.0)
    w = gen.standard_normal(T)
    cfg = MonotonicConfig()

    def f(v):
        return float(w @ monotonic_alpha_scan(v["p"], v["a"], cfg))
    dp, da = backward_monotonic_scan(p, a, w, cfg)
    return _compare({"p": dp, "a": da}, _fd_over(f, {"p": p, "a": a}, h), rel_tol, abs_tol)


def _case_softmax_attention(gen, h, rel_tol, abs_tol):
    T, d = int(gen.integers(1, 7)), int(gen.integers(1, 5))
    e, H, w = gen.standard_normal(T), gen.standard_normal((T, d)), gen.standard_normal(d)

    def f(v):
        return float(w @ softmax_attention(v["e"], v["H"])[1])
    de, dH = backward_softmax_attention(e, H, w)
    return _compare({"e": de, "H": dH}, _fd_over(f, {"e": e, "H": H}, h), rel_tol, abs_tol)


def _case_sigmoid(gen, h, rel_tol, abs_tol):
    x = gen.uniform(-6, 6, int(gen.integers(1, 8)))
    w = gen.standard_normal(x.size)
    s = sigmoid(x)
    numeric = finite_difference(lambda v: float(w @ sigmoid(v)), x, h)
    return check_gradients(w * s * (1 - s), numeric, rel_tol, abs_tol, "x")


def _random_energy(gen, kind, d_s, d_h, d_a):
    if kind == "modified":
        return MonotonicEnergyParams(gen.uniform(-1, 1, (d_a, d_s)), gen.uniform(-1, 1, (d_a, d_h)),
                                     gen.uniform(-1, 1, d_a), gen.uniform(-1, 1, d_a),
                                     gen.uniform(0.5, 2.0), gen.uniform(-2, 1))
    return DotEnergyParams(gen.uniform(-1, 1, (d_s, d_h)), gen.uniform(0.5, 2.0), gen.uniform(-2, 1))


def _case_full_step(kind):
    def case(gen, h, rel_tol, abs_tol):
        d_s, d_h, d_a = (int(x) for x in gen.integers(1, 5, 3))
        T = int(gen.integers(1, 7))
        params = _random_energy(gen, kind, d_s, d_h, d_a)
        s = gen.uniform(-1, 1, d_s)
        H = gen.uniform(-1, 1, (T, d_h))
        a = gen.dirichlet(np.ones(T)) * gen.uniform(0.2, 1.0)
        noise = gen.standard_normal(T)
        wc, wa = gen.standard_normal(d_h), gen.standard_normal(T)
        names = ["W", "V", "b", "v"] if kind == "modified" else ["W"]
        values = {n: getattr(params, n) for n in names}
        values.update(g=np.array([params.g]), r=np.array([params.r]), s_prev=s, memory=H, alpha_prev=a)

        def f(v):
            if kind == "modified":
                pr = MonotonicEnergyParams(v["W"], v["V"], v["b"], v["v"], v["g"][0], v["r"][0])
            else:
                pr = DotEnergyParams(v["W"], v["g"][0], v["r"][0])
            rec = forward_step(pr, v["s_prev"], v["memory"], v["alpha_prev"], noise)
            return float(wc @ rec.context + wa @ rec.alpha)
        analytic = backward_full_step(params, s, H, a, wc, noise, upstream_dalpha=wa)
        analytic["g"] = np.array([analytic["g"]])
        analytic["r"] = np.array([analytic["r"]])
        return _compare(analytic, _fd_over(f, values, h), rel_tol, abs_tol)
    return case


def _case_gru(gen, h, rel_tol, abs_tol):
    B, d_in, d = int(gen.integers(1, 4)), int(gen.integers(1, 5)), int(gen.integers(1, 5))
    P = {"g_Wx": gen.uniform(-1, 1, (d_in, 3 * d)), "g_Uh": gen.uniform(-1, 1, (d, 3 * d)),
         "g_b": gen.uniform(-1, 1, 3 * d)}
    x, h0 = gen.uniform(-1, 1, (B, d_in)), gen.uniform(-1, 1, (B, d))
    w = gen.standard_normal((B, d))

    def f(v):
        out, _ = layers.gru_forward(v["x"], v["h"], {k: v[k] for k in P}, "g_")
        return float(np.sum(w * out))
    _, cache = layers.gru_forward(x, h0, P, "g_")
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    dx, dh = layers.gru_backward(w, cache, P, "g_", grads)
    grads.update(x=dx, h=dh)
    return _compare(grads, _fd_over(f, {**P, "x": x, "h": h0}, h), rel_tol, abs_tol)


def _case_output(gen, h, rel_tol, abs_tol):
    B, d_s, d_h, V = (int(x) for x in gen.integers(1, 5, 4))
    P = {"out_W": gen.uniform(-1, 1, (d_s + d_h, V + 1)), "out_b": gen.uniform(-1, 1, V + 1)}
    s, c = gen.uniform(-1, 1, (B, d_s)), gen.uniform(-1, 1, (B, d_h))
    targets = gen.integers(0, V + 1, B)
    mask = (gen.random(B) < 0.8).astype(float)

    def f(v):
        return layers.output_forward(v["s"], v["c"], v, targets, mask)[0]
    _, _, cache = layers.output_forward(s, c, P, targets, mask)
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    dsc = layers.output_backward(1.0, cache, P, grads)
    grads.update(s=dsc[:, :d_s], c=dsc[:, d_s:])
    return _compare(grads, _fd_over(f, {**P, "s": s, "c": c}, h), rel_tol, abs_tol)


def _case_seq2seq(kind):
    def case(gen, h, rel_tol, abs_tol):
        n_in, n_out = int(gen.integers(2, 5)), int(gen.integers(2, 5))
        dims = m.ModelDims(n_in, n_out + 1, embed_dim=2, hidden_dim=3, decoder_dim=3,
                           attention_dim=2, energy=kind)
        P = m.init_params(dims, SeededRng(int(gen.integers(2**32))), scale=0.8)
        B = int(gen.integers(1, 3))
        xs = [list(gen.integers(0, n_in, gen.integers(1, 4))) for _ in range(B)]
        ys = [list(gen.integers(0, n_out, gen.integers(0, 4))) + [dims.eos] for _ in range(B)]
        noise = gen.standard_normal((B, max(map(len, ys)), max(map(len, xs))))
        _, record = m.forward(P, dims, xs, ys, noise)
        analytic = m.backward(P, dims, record)

        def f(v):
            return m.forward(v, dims, xs, ys, noise)[0]
        return _compare(analytic, _fd_over(f, P, h), rel_tol, abs_tol)
    return case


OPS = {
    "monotonic_alpha": _case_monotonic_alpha,
    "monotonic_scan": _case_monotonic_scan,
    "softmax_attention": _case_softmax_attention,
    "sigmoid": _case_sigmoid,
    "full_step_modified": _case_full_step("modified"),
    "full_step_dot": _case_full_step("dot"),
    "gru_cell": _case_gru,
    "output_layer": _case_output,
    "seq2seq_modified": _case_seq2seq("modified"),
    "seq2seq_dot": _case_seq2seq("dot"),
}


def run_suite(ops=None, n_instances=50, h=1e-6, rel_tol=1e-5, abs_tol=1e-4, seed=0) -> dict:
    """Check every op in ``ops`` (default: all) on ``n_instances`` random cases.

    ``abs_tol`` floors the relative-error denominator. Central differences
    at ``h = 1e-6`` carry round-off near ``ulp(f) / h``, roughly 1e-10 for
    the O(1) objectives used here, so gradients much smaller than
    ``abs_tol`` are effectively compared in absolute terms.
    """
    names = list(OPS) if ops is None else list(ops)
    unknown = set(names) - set(OPS)
    if unknown:
        raise DomainError(f"unknown ops: {sorted(unknown)}")
    results = {}
    for name in names:
        gen = SeededRng(seed, 100 + list(OPS).index(name)).generator
        report = GradReport(rel_tol=rel_tol)
        for _ in range(n_instances):
            report.merge(OPS[name](gen, h, rel_tol, abs_tol))
        results[name] = report
    return results
