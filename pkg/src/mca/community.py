"""Graph sparsification, modularity and Louvain community detection.

Conventions
-----------
The graph is a dense nonnegative weight matrix ``W``; ``k_i`` is the row sum
and ``2m`` the total weight. A community's ``sigma_in`` sums W over ordered
pairs inside it (each undirected link counted from both ends) and
``k_i_in`` sums the weights of links between node i and the community in
both directions. With those readings the move-gain expression is exactly
Q(after) - Q(before).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class Graph:
    W: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise InvalidArgument("graph weights must be a square matrix")
        if not np.isfinite(W).all() or (W < 0).any():
            raise InvalidArgument("graph weights must be finite and nonnegative")
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def m(self) -> float:
        return 0.5 * float(self.W.sum())

    @property
    def degrees(self) -> np.ndarray:
        return self.W.sum(axis=1)


@dataclass
class Partition:
    assignment: np.ndarray
    levels: list = field(default_factory=list)
    Q: float = 0.0
    level_Q: list = field(default_factory=list)

    @property
    def n_communities(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    def members(self, c: int) -> set:
        return set(np.flatnonzero(self.assignment == c).tolist())


def default_knn_k(n: int) -> int:
    return max(1, int(round(0.2 * n)))


def top_k_mask(A: np.ndarray, k: int) -> np.ndarray:
    """Boolean (N, N): True where j is among row i's k largest off-diagonal entries.

    Equal values rank the smaller column index first.
    """
    n = A.shape[0]
    key = -np.asarray(A, dtype=float).copy()
    np.fill_diagonal(key, np.inf)
    order = np.argsort(key, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def sparsify_mutual_knn(A, k: Optional[int] = None, symmetrize: bool = True) -> Graph:
    """Keep (i, j) only if each is in the other's top-k; clamp negatives to 0.

    ``symmetrize`` averages the surviving directed weights, (W + W^T) / 2.
    """
    A = np.asarray(getattr(A, "values", A), dtype=float)
    n = A.shape[0]
    if k is None:
        k = default_knn_k(n)
    if not 1 <= k < n:
        raise InvalidArgument(f"knn k must satisfy 1 <= k < N={n}, got {k} (--knn-k)")
    top = top_k_mask(A, k)
    W = np.where(top & top.T, np.maximum(A, 0.0), 0.0)
    np.fill_diagonal(W, 0.0)
    if symmetrize:
        W = 0.5 * (W + W.T)
    return Graph(W)


def _labels(p) -> np.ndarray:
    return np.asarray(getattr(p, "assignment", p), dtype=int)


def modularity(g: Graph, p) -> float:
    """Q = (1/2m) sum_ij [W_ij - k_i k_j / 2m] delta(c_i, c_j)."""
    labels = _labels(p)
    two_m = float(g.W.sum())
    if two_m <= 0:
        raise InvalidArgument("modularity undefined for a graph with no weight")
    _, lab = np.unique(labels, return_inverse=True)
    S = np.zeros((g.n, lab.max() + 1))
    S[np.arange(g.n), lab] = 1.0
    intra = float(np.trace(S.T @ g.W @ S))
    tot = S.T @ g.degrees
    return (intra - float(tot @ tot) / two_m) / two_m


def delta_q(sigma_in, sigma_tot, k_i, k_i_in, m):
    """Gain from moving an isolated node i into community C (array-friendly)."""
    two_m = 2.0 * m
    after = (sigma_in + k_i_in) / two_m - ((sigma_tot + k_i) / two_m) ** 2
    before = sigma_in / two_m - (sigma_tot / two_m) ** 2 - (k_i / two_m) ** 2
    return after - before


def community_stats(g: Graph, labels, c: int, exclude: Optional[int] = None):
    """(sigma_in, sigma_tot) of community ``c``, optionally ignoring one node."""
    labels = _labels(labels)
    mem = labels == c
    if exclude is not None:
        mem = mem.copy()
        mem[exclude] = False
    idx = np.flatnonzero(mem)
    return float(g.W[np.ix_(idx, idx)].sum()), float(g.degrees[idx].sum())


def link_weight(g: Graph, i: int, members: Iterable[int]) -> float:
    """k_i_in: weight of links i -> C plus C -> i, i itself excluded."""
    idx = np.array([j for j in members if j != i], dtype=int)
    if idx.size == 0:
        return 0.0
    return float(g.W[i, idx].sum() + g.W[idx, i].sum())


def _one_level(W: np.ndarray, rng: np.random.Generator, eps: float = 1e-12, max_sweeps: int = 1000):
    n = W.shape[0]
    k = W.sum(axis=1)
    m = 0.5 * float(W.sum())
    loops = np.diag(W).copy()
    sym = W + W.T
    np.fill_diagonal(sym, 0.0)
    nbrs = [np.flatnonzero(sym[i]) for i in range(n)]
    nbw = [sym[i, nbrs[i]] for i in range(n)]
    labels = np.arange(n)
    s_in = loops.copy()
    s_tot = k.copy()
    moved_any = False
    for _ in range(max_sweeps):
        moved = False
        for i in rng.permutation(n):
            c_old = labels[i]
            nb, w = nbrs[i], nbw[i]
            nl = labels[nb]
            links = {}
            for c, x in zip(nl.tolist(), w.tolist()):
                links[c] = links.get(c, 0.0) + x
            # take i out of its community
            s_in[c_old] -= links.get(c_old, 0.0) + loops[i]
            s_tot[c_old] -= k[i]
            cand = np.array(sorted(set(links) | {c_old}))
            kin = np.array([links.get(c, 0.0) for c in cand.tolist()])
            gains = delta_q(s_in[cand], s_tot[cand], k[i], kin, m)
            g_old = gains[np.searchsorted(cand, c_old)]
            best = gains.max()
            c_new = c_old
            if best > g_old + eps:
                c_new = int(cand[np.flatnonzero(gains == best)[0]])
            s_in[c_new] += links.get(c_new, 0.0) + loops[i]
            s_tot[c_new] += k[i]
            labels[i] = c_new
            if c_new != c_old:
                moved = True
                moved_any = True
        if not moved:
            break
    _, labels = np.unique(labels, return_inverse=True)
    return labels, moved_any


def _aggregate(W: np.ndarray, labels: np.ndarray) -> np.ndarray:
    S = np.zeros((W.shape[0], labels.max() + 1))
    S[np.arange(W.shape[0]), labels] = 1.0
    return S.T @ W @ S


def canonical_labels(labels) -> np.ndarray:
    """Relabel so community ids appear in order of their lowest node index."""
    labels = np.asarray(labels)
    mapping: dict = {}
    out = np.empty(labels.size, dtype=int)
    for i, c in enumerate(labels.tolist()):
        out[i] = mapping.setdefault(c, len(mapping))
    return out


def louvain(g: Graph, seed: int = 0, tol: float = 1e-9) -> Partition:
    """Two-phase Louvain: local moves, then aggregation, until Q gains < tol.

    Node visiting order is a seeded permutation per sweep. ``levels`` holds
    the assignment of the original nodes after each aggregation pass.
    """
    if g.m <= 0:
        raise InvalidArgument("louvain needs a graph with positive total weight")
    rng = np.random.default_rng(seed)
    assign = np.arange(g.n)
    q_prev = modularity(g, assign)
    levels, level_q = [], []
    W = g.W
    while True:
        labels, moved = _one_level(W, rng)
        if not moved:
            break
        assign = canonical_labels(labels[assign])
        q = modularity(g, assign)
        levels.append(assign.copy())
        level_q.append(q)
        if q - q_prev < tol:
            break
        q_prev = q
        W = _aggregate(g.W, assign)
    if levels:
        return Partition(levels[-1], levels, level_q[-1], level_q)
    return Partition(assign, [], q_prev, [])


def dice(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 0.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def merge_to_maximize_dice(p, truth) -> tuple[set, float, list]:
    """Greedy union of clusters against a ground-truth index set.

    Starts from the best single cluster and keeps adding whichever cluster
    raises Dice the most; stops when nothing raises it. Returns the merged
    member set, its Dice and the trace [(step, cluster_id, dice_after), ...].
    """
    labels = _labels(p)
    truth = set(getattr(truth, "indices", truth))
    if not truth:
        raise InvalidArgument("ground truth mask is empty")
    clusters = {int(c): set(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels)}
    ids = sorted(clusters)
    scores = [dice(clusters[c], truth) for c in ids]
    first = ids[int(np.argmax(scores))]
    merged = set(clusters[first])
    best = dice(merged, truth)
    trace = [(0, first, best)]
    remaining = [c for c in ids if c != first]
    while remaining:
        gains = [dice(merged | clusters[c], truth) for c in remaining]
        j = int(np.argmax(gains))
        if gains[j] <= best:
            break
        c = remaining.pop(j)
        merged |= clusters[c]
        best = gains[j]
        trace.append((len(trace), c, best))
    return merged, best, trace


def cluster_affinity(A, k: Optional[int] = None, seed: int = 0, symmetrize: bool = True) -> tuple[Graph, Partition]:
    g = sparsify_mutual_knn(A, k, symmetrize=symmetrize)
    return g, louvain(g, seed=seed)


def per_region_dice(p, regions: Sequence) -> dict:
    return {reg.name: merge_to_maximize_dice(p, reg)[1] for reg in regions}
