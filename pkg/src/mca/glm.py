"""General local model: exponentially weighted d+1 nearest-neighbour cross-prediction.

The neighbour search depends only on the predictor series, so it is done
once per series (``build_glm_state``); predicting any target afterwards is a
gather and a weighted sum (``glm_predict``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import instrument
from .embedding import embed
from .ensemble import pearson_rows
from .errors import InvalidArgument


def glm_weights(dists) -> np.ndarray:
    """Weights exp(-dist_n / dist_1), normalised; rows of a 2-D array independently.

    When the nearest distance is exactly zero the ratio is undefined; the
    limit puts uniform weight on the zero-distance neighbours.
    """
    dists = np.asarray(dists, dtype=float)
    one = dists.ndim == 1
    dd = np.atleast_2d(dists)
    d0 = dd[:, :1]
    zero = d0[:, 0] == 0.0
    w = np.empty_like(dd)
    nz = ~zero
    if nz.any():
        with np.errstate(over="ignore"):
            e = np.exp(-dd[nz] / d0[nz])
        w[nz] = e / e.sum(axis=1, keepdims=True)
    if zero.any():
        z = (dd[zero] == 0.0).astype(float)
        w[zero] = z / z.sum(axis=1, keepdims=True)
    return w[0] if one else w


@dataclass(frozen=True)
class GlmState:
    neighbors: np.ndarray  # (n, d+1) time indices, nearest first
    weights: np.ndarray  # (n, d+1)
    library: np.ndarray
    d: int
    theiler: int = 0

    @property
    def n_points(self) -> int:
        return self.neighbors.shape[0]


def build_glm_state(x_embed: np.ndarray, library=None, theiler: int = 0) -> GlmState:
    """Find the d+1 nearest library vectors of every embedding vector.

    ``library`` defaults to all indices. Candidates with |t - t_n| <= theiler
    are excluded (theiler=0 excludes only the query itself). Ties go to the
    smaller time index.
    """
    x = np.asarray(x_embed, dtype=float)
    n, d = x.shape
    k = d + 1
    lib = np.arange(n) if library is None else np.unique(np.asarray(library, dtype=int))
    if lib.size and (lib[0] < 0 or lib[-1] >= n):
        raise InvalidArgument("library indices outside the embedding")
    if lib.size < d + 2:
        raise InvalidArgument(f"library of {lib.size} vectors too small; need >= d+2 = {d + 2}")
    if theiler < 0:
        raise InvalidArgument("theiler window must be >= 0")
    instrument.count("glm.state")
    instrument.count("glm.distance_rows", n)

    xl = x[lib]
    dist = np.zeros((n, lib.size))
    for j in range(d):
        diff = x[:, j, None] - xl[None, :, j]
        dist += diff * diff
    np.sqrt(dist, out=dist)
    excl = np.abs(np.arange(n)[:, None] - lib[None, :]) <= theiler
    dist[excl] = np.inf
    order = _k_nearest(dist, k)
    nd = np.take_along_axis(dist, order, axis=1)
    if not np.isfinite(nd).all():
        raise InvalidArgument(
            f"library of {lib.size} vectors leaves fewer than d+1={k} candidates after exclusion"
        )
    return GlmState(neighbors=lib[order], weights=glm_weights(nd), library=lib, d=d, theiler=theiler)


def _k_nearest(dist: np.ndarray, k: int) -> np.ndarray:
    """Column indices of the k smallest entries per row, by (distance, index).

    Same result as a stable full argsort; rows with a tie straddling the
    k-th place fall back to exactly that.
    """
    if k >= dist.shape[1]:
        return np.argsort(dist, axis=1, kind="stable")[:, :k]
    part = np.sort(np.argpartition(dist, k - 1, axis=1)[:, :k], axis=1)
    kth = np.take_along_axis(dist, part, axis=1).max(axis=1)
    sub = np.take_along_axis(dist, part, axis=1)
    order = np.take_along_axis(part, np.argsort(sub, axis=1, kind="stable"), axis=1)
    tied = (dist <= kth[:, None]).sum(axis=1) > k
    if tied.any():
        order[tied] = np.argsort(dist[tied], axis=1, kind="stable")[:, :k]
    return order


def glm_state_for_series(s, d: int, library=None, theiler: int = 0) -> GlmState:
    return build_glm_state(embed(s, d), library=library, theiler=theiler)


def glm_estimates(state: GlmState, y) -> np.ndarray:
    """y_hat(t) = sum_n w_n y(t_n); ``y`` may be (n,) or (M, n)."""
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != state.n_points:
        raise InvalidArgument(f"target length {y.shape[-1]} != embedding count {state.n_points}")
    return np.ascontiguousarray((y[..., state.neighbors] * state.weights).sum(axis=-1))


def glm_skills(state: GlmState, Y) -> np.ndarray:
    """Pearson skill for each target row of ``Y`` (M, n); undefined -> 0."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    instrument.count("predict", Y.shape[0])
    r = pearson_rows(glm_estimates(state, Y), Y)
    return np.nan_to_num(r, nan=0.0)


def glm_predict(state: GlmState, y_targets) -> tuple[np.ndarray, float]:
    y = np.asarray(y_targets, dtype=float)
    yhat = glm_estimates(state, y)
    return yhat, float(glm_skills(state, y[None, :])[0])
