"""Delay vectors x(t) = <X(t), ..., X(t+d-1)> and horizon-d targets y(t) = Y(t+d)."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument

DEFAULT_DIM = 3


def check_dim(L: int, d: int) -> None:
    """Predictor requirement: L-d vectors leave d+1 neighbours besides the query."""
    if not (isinstance(d, (int, np.integer)) and 1 <= d <= L - d - 2):
        raise InvalidArgument(
            f"embedding dimension d={d} invalid for series length {L}; need 1 <= d <= L-d-2 (--embed-dim)"
        )


def check_embed(L: int, d: int) -> None:
    """Looser check for building vectors alone: at least two of them."""
    if not (isinstance(d, (int, np.integer)) and 1 <= d <= L - 2):
        raise InvalidArgument(f"embedding dimension d={d} invalid for series length {L}; need 1 <= d <= L-2 (--embed-dim)")


def embed(s, d: int = DEFAULT_DIM) -> np.ndarray:
    """Return the (L-d, d) array of delay vectors, in temporal order.

    The last d samples never start a vector because each vector needs a
    target d steps ahead.
    """
    s = np.asarray(s, dtype=float)
    L = s.shape[-1]
    check_embed(L, d)
    idx = np.arange(L - d)[:, None] + np.arange(d)[None, :]
    return s[idx]


def targets(s, d: int = DEFAULT_DIM) -> np.ndarray:
    """y(t) = s[t+d] for t = 0..L-d-1; works row-wise on 2-D input."""
    s = np.asarray(s, dtype=float)
    check_embed(s.shape[-1], d)
    return np.ascontiguousarray(s[..., d:])
