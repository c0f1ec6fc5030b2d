"""Batched forward/backward kernels shared by training and gradient checks.

Each ``*_forward`` returns its output plus a cache; the matching
``*_backward`` consumes the cache and an upstream gradient. Leading axis is
the batch everywhere.
"""

from __future__ import annotations

import numpy as np

from .attention import recurrence_forward
from .numkit import TINY, sigmoid


# ------------------------------------------------------------------ GRU


def gru_forward(x, h, P, prefix):
    """``h' = (1 - z) * n + z * h`` with reset gate applied to ``h @ U_n``."""
    Wx, Uh, b = P[prefix + "Wx"], P[prefix + "Uh"], P[prefix + "b"]
    d = h.shape[1]
    gx = x @ Wx + b
    gh = h @ Uh[:, : 2 * d]
    z = sigmoid(gx[:, :d] + gh[:, :d])
    r = sigmoid(gx[:, d : 2 * d] + gh[:, d:])
    hn = h @ Uh[:, 2 * d :]
    n = np.tanh(gx[:, 2 * d :] + r * hn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, z, r, n, hn)


def gru_backward(dh_new, cache, P, prefix, grads):
    x, h, z, r, n, hn = cache
    Uh = P[prefix + "Uh"]
    d = h.shape[1]
    dz = dh_new * (h - n) * z * (1.0 - z)
    dn_pre = dh_new * (1.0 - z) * (1.0 - n * n)
    dr = dn_pre * hn * r * (1.0 - r)
    dgx = np.concatenate([dz, dr, dn_pre], axis=1)
    dgh = np.concatenate([dz, dr], axis=1)
    dhn = dn_pre * r
    grads[prefix + "Wx"] += x.T @ dgx
    grads[prefix + "b"] += dgx.sum(axis=0)
    grads[prefix + "Uh"][:, : 2 * d] += h.T @ dgh
    grads[prefix + "Uh"][:, 2 * d :] += h.T @ dhn
    dx = dgx @ P[prefix + "Wx"].T
    dh = dh_new * z + dgh @ Uh[:, : 2 * d].T + dhn @ Uh[:, 2 * d :].T
    return dx, dh


# ------------------------------------------------------------- energies


def memory_projection(kind, P, H):
    """Per-sequence part of the energy that does not depend on the decoder state."""
    if kind == "modified":
        return H @ P["att_V"].T + P["att_b"]
    return H


def energy_forward(kind, P, s, proj):
    """Energies ``(B, T)`` for decoder states ``s`` against a projected memory."""
    g, r = P["att_g"][0], P["att_r"][0]
    if kind == "modified":
        v = P["att_v"]
        norm = np.sqrt(v @ v)
        v_hat = v / norm
        t = np.tanh(proj + (s @ P["att_W"].T)[:, None, :])
        score = t @ v_hat
        return g * score + r, (kind, s, t, v_hat, norm, score)
    sW = s @ P["att_W"]
    score = np.einsum("btd,bd->bt", proj, sW)
    return g * score + r, (kind, s, proj, sW, score)


def energy_backward(de, cache, P, grads, dproj):
    """Accumulates parameter grads and ``dproj``; returns ``ds``."""
    kind = cache[0]
    g = P["att_g"][0]
    grads["att_r"][0] += de.sum()
    if kind == "modified":
        _, s, t, v_hat, norm, score = cache
        grads["att_g"][0] += np.sum(de * score)
        dv_hat = g * np.einsum("bt,bta->a", de, t)
        grads["att_v"] += (dv_hat - v_hat * (v_hat @ dv_hat)) / norm
        du = (g * de)[:, :, None] * v_hat * (1.0 - t * t)
        dproj += du
        du_s = du.sum(axis=1)
        grads["att_W"] += du_s.T @ s
        return du_s @ P["att_W"]
    _, s, proj, sW, score = cache
    grads["att_g"][0] += np.sum(de * score)
    gde = g * de
    dsW = np.einsum("bt,btd->bd", gde, proj)
    dproj += gde[:, :, None] * sW[:, None, :]
    grads["att_W"] += s.T @ dsW
    return dsW @ P["att_W"].T


def memory_projection_backward(kind, P, H, dproj, grads):
    """Turns the accumulated ``dproj`` into parameter grads and ``dH``."""
    if kind == "modified":
        grads["att_V"] += np.einsum("bta,btd->ad", dproj, H)
        grads["att_b"] += dproj.sum(axis=(0, 1))
        return dproj @ P["att_V"]
    return dproj


# ------------------------------------------------------------ recurrence


def monotonic_forward(e, alpha_prev, mask=None):
    """``p = sigmoid(e)`` (zeroed where ``mask`` is 0) then the q-form recurrence."""
    p = sigmoid(e)
    if mask is not None:
        p = p * mask
    alpha, q = recurrence_forward(p, alpha_prev)
    return alpha, (p, q, mask)


def recurrence_backward(p, q, dalpha):
    """Reverse pass of the q-form recurrence given its stored ``q``."""
    dp = np.empty_like(p)
    dalpha_prev = np.empty_like(p)
    dq_next = np.zeros(p.shape[:-1])
    for j in range(p.shape[-1] - 1, -1, -1):
        dq = dalpha[..., j] * p[..., j] + (1.0 - p[..., j]) * dq_next
        dp[..., j] = dalpha[..., j] * q[..., j] - q[..., j] * dq_next
        dalpha_prev[..., j] = dq
        dq_next = dq
    return dp, dalpha_prev


def monotonic_backward(dalpha, cache):
    p, q, mask = cache
    dp, dalpha_prev = recurrence_backward(p, q, dalpha)
    # mask is 0/1, and p = sigmoid(e) * mask, so dp/de = p * (1 - p) holds
    # unchanged where the mask is 1 and is 0 where it is 0
    return dp * p * (1.0 - p), dalpha_prev


def scan_backward(p, alpha_prev, dalpha, eps=1e-10, denom_mode="clamped"):
    """Reverse pass of the cumprod/cumsum closed form for one row.

    Gradients through the ``eps`` floor are zero where it is active.
    """
    x = 1.0 - p
    logx = np.log(np.maximum(x, TINY))
    D = np.ones_like(p)
    D[1:] = np.exp(np.cumsum(logx[:-1]))
    if denom_mode == "clamped":
        Dc = np.maximum(D, eps)
        active = D > eps
    else:
        Dc = np.ones_like(D)
        active = np.zeros(D.shape, dtype=bool)
    S = np.cumsum(alpha_prev / Dc)
    dp = dalpha * D * S
    dD = dalpha * p * S
    R = np.cumsum((dalpha * p * D)[::-1])[::-1]
    dalpha_prev = R / Dc
    dD = dD - np.where(active, R * alpha_prev / (Dc * Dc), 0.0)
    dlogD = dD * D
    # log D_k sums log x_i over i < k
    dlogx = np.zeros_like(p)
    dlogx[:-1] = np.cumsum(dlogD[::-1])[::-1][1:]
    dx = np.where(x > TINY, dlogx / np.maximum(x, TINY), 0.0)
    return dp - dx, dalpha_prev


# ---------------------------------------------------------------- output


def output_forward(s, c, P, targets, mask):
    """Affine map of ``[s, c]`` and masked softmax cross-entropy.

    Returns ``(loss_sum, logits, cache)``; ``loss_sum`` is the summed
    (not averaged) negative log-likelihood over unmasked rows.
    """
    sc = np.concatenate([s, c], axis=1)
    logits = sc @ P["out_W"] + P["out_b"]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logZ
    rows = np.arange(s.shape[0])
    nll = -logp[rows, targets] * mask
    return nll.sum(), logits, (sc, logp, targets, mask)


def output_backward(dloss, cache, P, grads):
    sc, logp, targets, mask = cache
    dlogits = np.exp(logp)
    dlogits[np.arange(sc.shape[0]), targets] -= 1.0
    dlogits *= (dloss * mask)[:, None]
    grads["out_W"] += sc.T @ dlogits
    grads["out_b"] += dlogits.sum(axis=0)
    return dlogits @ P["out_W"].T  # caller splits into ds and dc
