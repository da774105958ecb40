"""Pairwise cross-prediction affinity matrix.

Stage 1 builds one predictor state per series (neighbour search or
clustering + factorisation), N expensive constructions in total. Stage 2
scores every ordered pair through the cheap predict path. ``A[i, j]`` is the
Pearson skill of series i predicting series j; the diagonal is 0 and pairs
with an undefined correlation score 0.
"""

from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import instrument
from .embedding import DEFAULT_DIM, check_dim, embed, targets
from .ensemble import Ensemble, RegionMask, write_matrix_csv, _read_matrix_csv
from .errors import DegenerateSeriesError, FormatError, InvalidArgument
from .glm import build_glm_state, glm_skills
from .grbf import build_grbf_state, grbf_skills, split_sizes, default_k
from .seeding import subset_indices

MAGIC = b"MCA1"


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "glm"
    d: int = DEFAULT_DIM
    theiler: int = 0
    train_fraction: float = 0.6
    grbf_k: Optional[int] = None
    grbf_rho: Optional[float] = None
    fcm_m: float = 2.0
    fcm_tol: float = 1e-6
    fcm_max_iter: int = 300
    seed: int = 0

    def validate(self, L: int) -> None:
        if self.kind not in ("glm", "grbf"):
            raise InvalidArgument(f"predictor kind must be glm or grbf, got {self.kind!r}")
        check_dim(L, self.d)
        if self.theiler < 0:
            raise InvalidArgument("theiler window must be >= 0")
        if self.kind == "grbf":
            if not 0 < self.train_fraction < 1:
                raise InvalidArgument("train_fraction must be in (0, 1)")
            n_tr, n_te = split_sizes(L - self.d, self.train_fraction)
            k = default_k(n_tr) if self.grbf_k is None else self.grbf_k
            if k < 2 or n_tr < k + 1 or n_te < 3:
                raise InvalidArgument(f"GRBF split |Tr|={n_tr}, |Te|={n_te} too small for K={k}")
            if self.grbf_rho is not None and not self.grbf_rho > 0:
                raise InvalidArgument("grbf_rho must be > 0")
            if not self.fcm_m > 1:
                raise InvalidArgument("fcm_m must be > 1")


@dataclass
class AffinityMatrix:
    values: np.ndarray
    kind: str = "glm"
    params: dict = field(default_factory=dict)
    stage_counts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def constant_rows(x: np.ndarray) -> list[int]:
    scale = np.abs(x).max(axis=1)
    spread = np.ptp(x, axis=1)
    return np.flatnonzero(spread <= 1e-12 * np.where(scale > 0, scale, 1.0)).tolist()


def build_state(series: np.ndarray, cfg: PredictorConfig, series_index: int,
                fraction: Optional[float] = None, repetition: int = 0):
    """Expensive stage for one series.

    ``fraction`` is the neighbour-library share (GLM, default 1) or the
    training share (GRBF, default ``cfg.train_fraction``).
    """
    x = embed(series, cfg.d)
    n = x.shape[0]
    if cfg.kind == "glm":
        f = 1.0 if fraction is None else fraction
        lib = subset_indices(n, f, cfg.seed, repetition)
        return build_glm_state(x, lib, theiler=cfg.theiler)
    f = cfg.train_fraction if fraction is None else fraction
    return build_grbf_state(
        x, train_fraction=f, K=cfg.grbf_k, rho=cfg.grbf_rho, seed=cfg.seed,
        train_indices=subset_indices(n, f, cfg.seed, repetition),
        series_index=series_index, repetition=repetition,
        m=cfg.fcm_m, tol=cfg.fcm_tol, max_iter=cfg.fcm_max_iter,
    )


def state_skills(state, cfg: PredictorConfig, T: np.ndarray) -> np.ndarray:
    """Cheap stage: skills of one state against every row of the target matrix."""
    if cfg.kind == "glm":
        return glm_skills(state, T)
    return grbf_skills(state, T)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def cross_skill_matrix(x: np.ndarray, nodes: Sequence[int], cfg: PredictorConfig,
                       fraction: Optional[float] = None, repetition: int = 0,
                       threads: int = 1, timings: Optional[dict] = None) -> np.ndarray:
    """Skill matrix over ``nodes`` (global series indices), diagonal 0.

    Row r is computed from the state of series nodes[r] alone, so any subset
    or threading reproduces the same entries bit-for-bit.
    """
    nodes = list(nodes)
    T = targets(x[nodes], cfg.d)
    t0 = time.perf_counter()
    states = _pmap(lambda i: build_state(x[i], cfg, i, fraction, repetition), nodes, threads)
    t1 = time.perf_counter()
    M = len(nodes)

    def row(r):
        others = [c for c in range(M) if c != r]
        out = np.zeros(M)
        out[others] = state_skills(states[r], cfg, T[others])
        return out

    rows = _pmap(row, range(M), threads)
    t2 = time.perf_counter()
    if timings is not None:
        timings["stage1_s"] = t1 - t0
        timings["stage2_s"] = t2 - t1
    return np.vstack(rows) if rows else np.zeros((0, 0))


def compute_affinity(e: Ensemble, cfg: PredictorConfig = PredictorConfig(), threads: int = 1) -> AffinityMatrix:
    x = e.series
    if x.shape[0] < 2:
        raise InvalidArgument("affinity needs at least 2 series")
    cfg.validate(x.shape[1])
    bad = constant_rows(x)
    if bad:
        raise DegenerateSeriesError(bad)
    before = instrument.snapshot()
    timings: dict = {}
    A = cross_skill_matrix(x, range(x.shape[0]), cfg, threads=threads, timings=timings)
    after = instrument.snapshot()
    tag = "glm.state" if cfg.kind == "glm" else "grbf.state"
    counts = {
        "expensive": after.get(tag, 0) - before.get(tag, 0),
        "cheap": after.get("predict", 0) - before.get("predict", 0),
    }
    return AffinityMatrix(A, cfg.kind, asdict(cfg), counts, timings)


# --------------------------------------------------------------------------
# persistence

def save_affinity_csv(path, A) -> None:
    write_matrix_csv(path, getattr(A, "values", A))


def load_affinity_csv(path) -> np.ndarray:
    x = _read_matrix_csv(path)
    if x.shape[0] != x.shape[1]:
        raise FormatError(f"{path}: affinity matrix must be square, got {x.shape}")
    return x


def save_affinity_bin(path, A) -> None:
    v = np.ascontiguousarray(getattr(A, "values", A), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", v.shape[0]))
        fh.write(v.tobytes(order="C"))


def load_affinity_bin(path) -> np.ndarray:
    raw = open(path, "rb").read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    (n,) = struct.unpack("<I", raw[4:8])
    body = raw[8:]
    if len(body) != 8 * n * n:
        raise FormatError(f"{path}: expected {n * n} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).astype(float)


def load_affinity(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return load_affinity_bin(path) if head == MAGIC else load_affinity_csv(path)


# --------------------------------------------------------------------------
# region blocks

@dataclass(frozen=True)
class RegionMatrix:
    values: np.ndarray
    names: tuple


def check_disjoint(regions: Sequence[RegionMask], n: Optional[int] = None) -> None:
    seen: dict[int, str] = {}
    for reg in regions:
        if len(reg) == 0:
            raise InvalidArgument(f"region {reg.name!r} is empty")
        if n is not None:
            reg.check(n)
        for i in reg.indices:
            if i in seen:
                raise InvalidArgument(f"series {i} is in both {seen[i]!r} and {reg.name!r}")
            seen[i] = reg.name


def block_average(A, regions: Sequence[RegionMask]) -> RegionMatrix:
    """Mean of A[i, j] over i in region r, j in region s, i != j.

    A singleton region's own block has no off-diagonal pair and is set to 0.
    """
    A = np.asarray(getattr(A, "values", A), dtype=float)
    check_disjoint(regions, A.shape[0])
    R = len(regions)
    out = np.zeros((R, R))
    for r, ra in enumerate(regions):
        ia = np.asarray(ra.indices)
        for s, rb in enumerate(regions):
            ib = np.asarray(rb.indices)
            block = A[np.ix_(ia, ib)]
            if r == s:
                cnt = ia.size * (ia.size - 1)
                out[r, s] = (block.sum() - np.trace(block)) / cnt if cnt else 0.0
            else:
                out[r, s] = block.mean()
    return RegionMatrix(out, tuple(reg.name for reg in regions))
