"""Convergent cross-mapping over library/training fractions.

For each fraction f and repetition r a seeded subset of round(f * (L - d))
delay vectors is drawn (shared by all series of that unit). GLM uses it as
the neighbour library, GRBF as the training set. Skills follow the affinity
convention: ``skills[f, r, a, b]`` is node a predicting node b.

Directions are reported as raw "source->target" skill. In the usual CCM
reading, a converging source->target skill is evidence that the *target*
drives the source; the package does not rewrite labels to that effect.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .affinity import PredictorConfig, block_average, check_disjoint, constant_rows, cross_skill_matrix
from .embedding import check_dim
from .ensemble import Ensemble, RegionMask
from .errors import DegenerateSeriesError, InvalidArgument
from .grbf import default_k
from .seeding import rng_for

DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


@dataclass(frozen=True)
class CcmConfig:
    fractions: tuple = DEFAULT_FRACTIONS
    repetitions: int = 20
    predictor: PredictorConfig = PredictorConfig()
    test: str = "ranksum"
    alpha: float = 0.05
    n_permutations: int = 10_000
    # a direction counts as causal only if its median skill rises by more than this
    convergence_min: float = 0.1

    def validate(self, L: int) -> None:
        fr = tuple(float(f) for f in self.fractions)
        if not fr:
            raise InvalidArgument("need at least one fraction")
        if any(not 0 < f <= 1 for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
            raise InvalidArgument(f"fractions must be strictly increasing within (0, 1]: {fr}")
        if self.repetitions < 1:
            raise InvalidArgument("repetitions must be >= 1")
        if self.test not in ("ranksum", "permutation"):
            raise InvalidArgument(f"--ccm-test must be ranksum or permutation, got {self.test!r}")
        p = self.predictor
        check_dim(L, p.d)
        n = L - p.d
        for f in fr:
            size = int(round(f * n))
            if p.kind == "glm":
                if size < p.d + 2:
                    raise InvalidArgument(f"fraction {f} gives a library of {size} < d+2 = {p.d + 2}")
            else:
                k = default_k(size) if p.grbf_k is None else p.grbf_k
                if size < k + 1 or n - size < 3:
                    raise InvalidArgument(f"fraction {f} gives |Tr|={size}, |Te|={n - size}; too small for K={k}")


@dataclass
class CcmResult:
    fractions: tuple
    nodes: tuple  # global series index per matrix position
    regions: list
    skills: np.ndarray  # (F, R, M, M)
    config: CcmConfig = field(default_factory=CcmConfig)

    @property
    def averaged_affinity(self) -> np.ndarray:
        """(F, M, M) mean skill over repetitions."""
        return self.skills.mean(axis=1)

    @property
    def median(self):
        return np.median(self.skills, axis=1)

    @property
    def p25(self):
        return np.percentile(self.skills, 25, axis=1)

    @property
    def p75(self):
        return np.percentile(self.skills, 75, axis=1)

    def pos(self, node: int) -> int:
        try:
            return self.nodes.index(int(node))
        except ValueError:
            raise InvalidArgument(f"series {node} is not part of this CCM run") from None

    def region_of(self, node: int) -> str:
        for reg in self.regions:
            if node in reg.indices:
                return reg.name
        raise InvalidArgument(f"series {node} not in any region")

    def averaged_full(self, fraction_index: int, n: int) -> np.ndarray:
        """Averaged skill matrix for one fraction, placed into an (n, n) frame."""
        out = np.zeros((n, n))
        idx = np.asarray(self.nodes)
        out[np.ix_(idx, idx)] = self.averaged_affinity[fraction_index]
        return out


def ccm_run(e: Ensemble, regions: Sequence[RegionMask], cfg: CcmConfig = CcmConfig(), threads: int = 1) -> CcmResult:
    check_disjoint(regions, e.n_series)
    cfg.validate(e.length)
    nodes = tuple(i for reg in regions for i in reg.indices)
    x = e.series
    bad = [nodes[i] for i in constant_rows(x[list(nodes)])]
    if bad:
        raise DegenerateSeriesError(bad)
    F, R, M = len(cfg.fractions), cfg.repetitions, len(nodes)
    skills = np.empty((F, R, M, M))
    for fi, f in enumerate(cfg.fractions):
        for r in range(R):
            skills[fi, r] = cross_skill_matrix(x, nodes, cfg.predictor, fraction=float(f),
                                               repetition=r, threads=threads)
    return CcmResult(tuple(float(f) for f in cfg.fractions), nodes, list(regions), skills, cfg)


# --------------------------------------------------------------------------
# direction statistics

def rank_sum_test(a, b, method: str = "ranksum", n_permutations: int = 10_000,
                  rng: Optional[np.random.Generator] = None) -> tuple[float, bool]:
    """Two-sided two-sample location test; returns (p, testable).

    ``ranksum``: Wilcoxon rank-sum, exact distribution for untied samples of
    size <= 20, a permutation distribution of the rank sum when ties are
    present, normal approximation otherwise. ``permutation``: permutation
    test on the difference of means.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pooled = np.r_[a, b]
    if np.ptp(pooled) == 0:
        return 1.0, False
    rng = np.random.default_rng(0) if rng is None else rng
    small = max(a.size, b.size) <= 20
    if method == "permutation":
        res = stats.permutation_test((a, b), lambda x, y, axis: np.mean(x, axis=axis) - np.mean(y, axis=axis), vectorized=True,
                                     n_resamples=n_permutations, alternative="two-sided", rng=rng)
        return float(min(1.0, res.pvalue)), True
    ties = np.unique(pooled).size < pooled.size
    if small and not ties:
        return float(stats.mannwhitneyu(a, b, alternative="two-sided", method="exact").pvalue), True
    if small:
        ranks = stats.rankdata(pooled)
        ra, rb = ranks[: a.size], ranks[a.size:]
        centre = a.size * (pooled.size + 1) / 2.0
        res = stats.permutation_test((ra, rb), lambda x, y, axis: np.abs(np.sum(x, axis=axis) - centre), vectorized=True,
                                     n_resamples=n_permutations, alternative="greater", rng=rng)
        return float(min(1.0, res.pvalue)), True
    return float(stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic").pvalue), True


@dataclass
class DirectionTest:
    source: int
    target: int
    fractions: tuple
    pvalues: np.ndarray
    significant: np.ndarray
    testable: np.ndarray
    median_forward: np.ndarray  # source -> target
    median_backward: np.ndarray


def _compare(samples_ab: np.ndarray, samples_ba: np.ndarray, cfg: CcmConfig, key: tuple) -> tuple:
    F = samples_ab.shape[0]
    if samples_ab.shape[1] < 2:
        raise InvalidArgument("direction comparison needs >= 2 repetitions per fraction")
    p = np.ones(F)
    ok = np.zeros(F, dtype=bool)
    for f in range(F):
        rng = rng_for(cfg.predictor.seed, "direction-test", f, *key)
        p[f], ok[f] = rank_sum_test(samples_ab[f], samples_ba[f], cfg.test, cfg.n_permutations, rng)
    return p, ok & (p < cfg.alpha), ok


def compare_directions(res: CcmResult, pair: tuple) -> DirectionTest:
    a, b = (int(v) for v in pair)
    ia, ib = res.pos(a), res.pos(b)
    ab = res.skills[:, :, ia, ib]
    ba = res.skills[:, :, ib, ia]
    p, sig, ok = _compare(ab, ba, res.config, ("node", min(a, b), max(a, b)))
    return DirectionTest(a, b, res.fractions, p, sig, ok, np.median(ab, axis=1), np.median(ba, axis=1))


def is_convergent(medians: np.ndarray, threshold: float) -> bool:
    """Median skill at the largest fraction exceeds the smallest by > threshold."""
    return bool(medians[-1] - medians[0] > threshold)


# --------------------------------------------------------------------------
# influence

@dataclass(frozen=True)
class InfluenceMap:
    nodes: tuple
    regions: tuple
    scores: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.nodes, self.scores.tolist()))


def influence_scores(A, region1: RegionMask, region2: RegionMask, nodes: Optional[Sequence[int]] = None) -> InfluenceMap:
    """I_i = sum_j A[i, j] - sum_j A[j, i], j over the *other* region.

    ``A`` is indexed by global series index, or by position in ``nodes``
    when that is given (as for CCM averaged matrices).
    """
    A = np.asarray(getattr(A, "values", A), dtype=float)
    check_disjoint([region1, region2])
    pos = (lambda i: i) if nodes is None else {int(v): k for k, v in enumerate(nodes)}.__getitem__
    try:
        i1 = np.array([pos(i) for i in region1.indices], dtype=int)
        i2 = np.array([pos(i) for i in region2.indices], dtype=int)
    except KeyError as exc:
        raise InvalidArgument(f"series {exc.args[0]} not covered by the affinity matrix") from None
    s1 = A[np.ix_(i1, i2)].sum(axis=1) - A[np.ix_(i2, i1)].sum(axis=0)
    s2 = A[np.ix_(i2, i1)].sum(axis=1) - A[np.ix_(i1, i2)].sum(axis=0)
    return InfluenceMap(
        tuple(region1.indices) + tuple(region2.indices),
        (region1.name,) * len(region1) + (region2.name,) * len(region2),
        np.r_[s1, s2],
    )


# --------------------------------------------------------------------------
# region level

@dataclass
class GlobalCausality:
    names: tuple
    fractions: tuple
    curves: np.ndarray  # (F, R, Rg, Rg) block means per repetition
    pvalues: np.ndarray  # (F, Rg, Rg), symmetric, NaN on the diagonal
    significant: np.ndarray
    edges: list

    @property
    def median(self):
        return np.median(self.curves, axis=1)

    @property
    def p25(self):
        return np.percentile(self.curves, 25, axis=1)

    @property
    def p75(self):
        return np.percentile(self.curves, 75, axis=1)


def global_causality(res: CcmResult, regions: Optional[Sequence[RegionMask]] = None) -> GlobalCausality:
    """Block-average every repetition, then the same summaries and tests per region pair.

    Edge rule: a direction is reported when the pair differs significantly
    at >= half of the fractions >= 0.5 (all fractions if none are), the
    significant fractions agree on which direction is higher, and that
    direction's median converges by more than ``convergence_min``. Otherwise
    the edge is "symmetric".
    """
    regions = list(res.regions if regions is None else regions)
    if len(regions) < 2:
        raise InvalidArgument("global causality needs >= 2 regions")
    local = [RegionMask(r.name, tuple(res.pos(i) for i in r.indices)) for r in regions]
    F, R = res.skills.shape[:2]
    G = len(regions)
    curves = np.empty((F, R, G, G))
    for f in range(F):
        for r in range(R):
            curves[f, r] = block_average(res.skills[f, r], local).values
    cfg = res.config
    pvals = np.full((F, G, G), np.nan)
    sig = np.zeros((F, G, G), dtype=bool)
    fr = np.asarray(res.fractions)
    high = np.flatnonzero(fr >= 0.5)
    if high.size == 0:
        high = np.arange(F)
    med = np.median(curves, axis=1)
    edges = []
    for a in range(G):
        for b in range(a + 1, G):
            if R >= 2:
                p, s, _ = _compare(curves[:, :, a, b], curves[:, :, b, a], cfg, ("region", a, b))
            else:
                p, s = np.ones(F), np.zeros(F, dtype=bool)
            pvals[:, a, b] = pvals[:, b, a] = p
            sig[:, a, b] = sig[:, b, a] = s
            hs = [f for f in high if s[f]]
            forward = [f for f in hs if med[f, a, b] > med[f, b, a]]
            label = "symmetric"
            if 2 * len(hs) >= high.size and hs:
                if len(forward) == len(hs):
                    src, dst = a, b
                elif not forward:
                    src, dst = b, a
                else:
                    src = None
                if src is not None and is_convergent(med[:, src, dst], cfg.convergence_min):
                    label = f"{regions[src].name}->{regions[dst].name}"
            edges.append({
                "pair": f"{regions[a].name}|{regions[b].name}",
                "direction": label,
                "p_at_max_fraction": float(p[-1]),
                "significant_high_fractions": len(hs),
                "high_fractions": int(high.size),
                "gain_forward": float(med[-1, a, b] - med[0, a, b]),
                "gain_backward": float(med[-1, b, a] - med[0, b, a]),
            })
    return GlobalCausality(tuple(r.name for r in regions), res.fractions, curves, pvals, sig, edges)
