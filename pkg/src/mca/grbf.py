"""Generalized radial basis function network predictor.

Hidden layer: normalised Gaussian activations around fuzzy C-means
prototypes of the training vectors. Output layer: linear least squares.
Everything that depends only on the predictor series (split, clustering,
activations, pseudo-inverse) lives in :class:`GrbfState`; fitting a target
is then two matrix-vector products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import instrument
from .embedding import embed
from .ensemble import pearson_rows
from .errors import InvalidArgument
from .seeding import rng_for, subset_indices

GRBF_MAX_K = 20


@dataclass(frozen=True)
class FcmResult:
    prototypes: np.ndarray
    memberships: np.ndarray
    iterations: int
    final_shift: float
    objective: tuple  # objective after each iteration


def _sqdist(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    diff = p[:, None, :] - w[None, :, :]
    return (diff * diff).sum(axis=-1)


def fcm_memberships(points: np.ndarray, centroids: np.ndarray, m: float = 2.0) -> np.ndarray:
    """u_ik = 1 / sum_j (|p_i - w_k| / |p_i - w_j|)^(2/(m-1)).

    A point sitting exactly on one or more centroids gets its membership
    split evenly across those centroids and 0 elsewhere.
    """
    d2 = _sqdist(points, centroids)
    u = np.empty_like(d2)
    hit = d2 == 0.0
    on = hit.any(axis=1)
    if on.any():
        h = hit[on].astype(float)
        u[on] = h / h.sum(axis=1, keepdims=True)
    off = ~on
    if off.any():
        # (d_k/d_j)^(2/(m-1)) with squared distances -> exponent 1/(m-1);
        # normalise by the row minimum to keep powers finite
        r = d2[off] / d2[off].min(axis=1, keepdims=True)
        inv = r ** (-1.0 / (m - 1.0))
        u[off] = inv / inv.sum(axis=1, keepdims=True)
    return u


def fcm_objective(points, centroids, u, m: float = 2.0) -> float:
    return float(((u ** m) * _sqdist(points, centroids)).sum())


def fuzzy_cmeans(points, K: int, m: float = 2.0, tol: float = 1e-6, max_iter: int = 300,
                 seed: Union[int, np.random.Generator] = 0) -> FcmResult:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    n = p.shape[0]
    if not 1 <= K <= n:
        raise InvalidArgument(f"need 1 <= K <= n; got K={K}, n={n}")
    if not m > 1:
        raise InvalidArgument("fuzzifier m must be > 1")
    if not tol > 0:
        raise InvalidArgument("tol must be > 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    instrument.count("fcm")

    # seed centroids from distinct points where possible
    uniq = np.unique(p, axis=0)
    pool = uniq if uniq.shape[0] >= K else p
    w = pool[np.sort(rng.choice(pool.shape[0], K, replace=False))].copy()

    history = []
    shift = math.inf
    it = 0
    while it < max_iter:
        it += 1
        u = fcm_memberships(p, w, m)
        um = u ** m
        w_new = (um.T @ p) / um.sum(axis=0)[:, None]
        shift = float(np.sqrt(((w_new - w) ** 2).sum(axis=1)).max())
        w = w_new
        history.append(fcm_objective(p, w, u, m))
        if shift <= tol:
            break
    return FcmResult(w, fcm_memberships(p, w, m), it, shift, tuple(history))


def grbf_activations(points, prototypes, rho: float) -> np.ndarray:
    """Row-normalised Gaussian activations exp(-|x - w_k|^2 / 2 rho^2)."""
    if not rho > 0:
        raise InvalidArgument("rho must be > 0")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.atleast_2d(np.asarray(prototypes, dtype=float))
    z = -_sqdist(x, w) / (2.0 * rho * rho)
    # shifting by the row max is exact algebra and removes underflow
    z -= z.max(axis=1, keepdims=True)
    a = np.exp(z)
    a /= a.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(a).all(axis=1)
    if bad.any():
        a[bad] = 1.0 / w.shape[0]
    return a


def nearest_prototype_rho(prototypes: np.ndarray) -> float:
    """Mean distance from each prototype to its nearest other prototype."""
    w = np.atleast_2d(prototypes)
    if w.shape[0] < 2:
        return 1.0
    d = np.sqrt(_sqdist(w, w))
    np.fill_diagonal(d, np.inf)
    rho = float(d.min(axis=1).mean())
    return rho if rho > 0 else 1.0


def default_k(n_train: int) -> int:
    return max(2, min(GRBF_MAX_K, math.ceil(math.sqrt(n_train))))


@dataclass(frozen=True)
class GrbfState:
    prototypes: np.ndarray
    rho: float
    train_indices: np.ndarray
    test_indices: np.ndarray
    A_train: np.ndarray
    A_test: np.ndarray
    pinv: np.ndarray  # (K, |Tr|) least-squares solver for A_train
    fcm_iterations: int

    @property
    def K(self) -> int:
        return self.prototypes.shape[0]

    @property
    def n_points(self) -> int:
        return self.train_indices.size + self.test_indices.size


def lstsq_solver(A: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """Pseudo-inverse via SVD; equivalent to the minimum-norm least-squares solve."""
    instrument.count("grbf.factorize")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def split_sizes(n: int, train_fraction: float) -> tuple[int, int]:
    n_tr = int(round(train_fraction * n))
    return n_tr, n - n_tr


def build_grbf_state(x_embed, train_fraction: float = 0.6, K: Optional[int] = None,
                     rho: Optional[float] = None, seed: int = 0, *, train_indices=None,
                     series_index: int = 0, repetition: int = 0, m: float = 2.0,
                     tol: float = 1e-6, max_iter: int = 300) -> GrbfState:
    """Split, cluster and factorise for one predictor series.

    The train/test split is a seeded uniform sample (shared by every series
    for a given seed, fraction and repetition) unless ``train_indices`` is
    given; test = the complement. ``rho=None`` applies the nearest-prototype
    rule.
    """
    x = np.asarray(x_embed, dtype=float)
    n = x.shape[0]
    if train_indices is None:
        if not 0 < train_fraction < 1:
            raise InvalidArgument(f"train_fraction must be in (0,1), got {train_fraction}")
        tr = subset_indices(n, train_fraction, seed, repetition)
    else:
        tr = np.unique(np.asarray(train_indices, dtype=int))
    te = np.setdiff1d(np.arange(n), tr)
    k = default_k(tr.size) if K is None else int(K)
    if k < 2:
        raise InvalidArgument("GRBF needs K >= 2 prototypes")
    if tr.size < k + 1 or te.size < 3:
        raise InvalidArgument(
            f"split too small: |Tr|={tr.size}, |Te|={te.size}; need |Tr| >= K+1={k + 1} and |Te| >= 3"
        )
    instrument.count("grbf.state")
    fcm = fuzzy_cmeans(x[tr], k, m=m, tol=tol, max_iter=max_iter,
                       seed=rng_for(seed, "fcm", series_index, repetition, train_fraction))
    r = nearest_prototype_rho(fcm.prototypes) if rho is None else float(rho)
    A_tr = grbf_activations(x[tr], fcm.prototypes, r)
    A_te = grbf_activations(x[te], fcm.prototypes, r)
    return GrbfState(fcm.prototypes, r, tr, te, A_tr, A_te, lstsq_solver(A_tr), fcm.iterations)


def grbf_state_for_series(s, d: int, **kw) -> GrbfState:
    return build_grbf_state(embed(s, d), **kw)


def grbf_output_weights(state: GrbfState, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return state.pinv @ y[state.train_indices]


def grbf_skills(state: GrbfState, Y) -> np.ndarray:
    """Test-set Pearson skill for each target row of ``Y`` (M, n); undefined -> 0.

    Targets are handled one at a time with matrix-vector products so each
    skill is bit-identical however the targets are batched.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != state.n_points:
        raise InvalidArgument(f"target length {Y.shape[1]} != embedding count {state.n_points}")
    instrument.count("predict", Y.shape[0])
    est = np.empty((Y.shape[0], state.test_indices.size))
    for j in range(Y.shape[0]):
        y = np.ascontiguousarray(Y[j])
        est[j] = state.A_test @ (state.pinv @ y[state.train_indices])
    r = pearson_rows(est, np.ascontiguousarray(Y[:, state.test_indices]))
    return np.nan_to_num(r, nan=0.0)


def grbf_fit_predict(state: GrbfState, y_targets) -> tuple[np.ndarray, float]:
    y = np.asarray(y_targets, dtype=float)
    if y.shape[-1] != state.n_points:
        raise InvalidArgument(f"target length {y.shape[-1]} != embedding count {state.n_points}")
    yhat = state.A_test @ grbf_output_weights(state, y)
    return yhat, float(grbf_skills(state, y[None, :])[0])
