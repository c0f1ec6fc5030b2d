"""Input checks for token-sequence data."""

import numpy as np


def check_sequences(X, n_tokens=None, name="X", allow_empty=False):
    """Validate a list of integer token sequences; returns a list of int lists.

    Raises ``ValueError`` on non-integer tokens, negative ids, ids at or
    above ``n_tokens`` (when given), or empty sequences unless
    ``allow_empty``.
    """
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = list(X)
    try:
        seqs = [np.asarray(s) for s in X]
    except TypeError:
        raise ValueError(f"{name} must be a list of token sequences") from None
    if not seqs:
        raise ValueError(f"{name} is empty")
    out = []
    for k, s in enumerate(seqs):
        if s.ndim != 1:
            raise ValueError(f"{name}[{k}] is not a 1-D sequence")
        if s.size == 0:
            if not allow_empty:
                raise ValueError(f"{name}[{k}] is empty")
            out.append([])
            continue
        if not np.issubdtype(s.dtype, np.integer):
            if not np.all(np.mod(s, 1) == 0):
                raise ValueError(f"{name}[{k}] contains non-integer tokens")
        s = s.astype(np.int64)
        if s.min() < 0 or (n_tokens is not None and s.max() >= n_tokens):
            raise ValueError(f"{name}[{k}] has a token outside [0, {n_tokens})")
        out.append(s.tolist())
    return out
