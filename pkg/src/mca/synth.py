"""Synthetic ensembles with planted structure, stimulus waveform and task masks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import BAND_HI, BAND_LO, DEFAULT_DT, Ensemble, RegionMask, bandpass, pearson_rows, znormalize
from .errors import InvalidArgument, McaError

log = logging.getLogger(__name__)

KINDS = ("coupled_logistic", "community_blocks", "noise")


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "community_blocks"
    L: int = 512
    dt: float = DEFAULT_DT
    seed: int = 0
    # community_blocks
    n_communities: int = 3
    community_size: int = 30
    sigma: float = 0.5
    # coupled_logistic
    rx: float = 3.8
    ry: float = 3.5
    beta_xy: float = 0.0
    beta_yx: float = 0.3
    burn_in: int = 300
    # noise
    n_series: int = 10

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown synth kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.L < 64:
            raise InvalidArgument("synthetic series need L >= 64")
        if not self.dt > 0:
            raise InvalidArgument("dt must be > 0")
        for v in (self.rx, self.ry, self.beta_xy, self.beta_yx, self.sigma):
            if not math.isfinite(v):
                raise InvalidArgument("synth parameters must be finite")


@dataclass
class Synthetic:
    ensemble: Ensemble
    regions: list
    truth: dict = field(default_factory=dict)


def _square_grid(n: int) -> np.ndarray:
    w = math.ceil(math.sqrt(n))
    return np.array([(i // w, i % w) for i in range(n)])


def band_limited_noise(L: int, dt: float, rng: np.random.Generator,
                       f_lo: float = BAND_LO, f_hi: float = BAND_HI) -> np.ndarray:
    """Unit-variance white noise passed through the ideal band mask."""
    return znormalize(bandpass(rng.standard_normal(L), f_lo, f_hi, dt))


def gen_community_ensemble(spec: SynthSpec) -> Synthetic:
    """Members of community c are latent_c + sigma * white noise; latents independent."""
    spec.validate()
    if spec.n_communities < 2 or spec.community_size < 3:
        raise InvalidArgument("need >= 2 communities of >= 3 series each")
    rng = np.random.default_rng(spec.seed)
    latents = np.vstack([band_limited_noise(spec.L, spec.dt, rng) for _ in range(spec.n_communities)])
    rows, regions = [], []
    for c in range(spec.n_communities):
        start = c * spec.community_size
        regions.append(RegionMask(f"C{c}", tuple(range(start, start + spec.community_size))))
        noise = rng.standard_normal((spec.community_size, spec.L))
        rows.append(latents[c] + spec.sigma * noise)
    x = np.vstack(rows)
    e = Ensemble(x, dt=spec.dt, grid=_square_grid(x.shape[0]))
    return Synthetic(e, regions, {"latents": latents})


def _logistic_run(L, rx, ry, bxy, byx, burn, x0, y0):
    x, y = x0, y0
    out = np.empty((2, L))
    for t in range(burn + L):
        x, y = x * (rx - rx * x - bxy * y), y * (ry - ry * y - byx * x)
        if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
            return None
        if t >= burn:
            out[:, t - burn] = (x, y)
    return out


def gen_coupled_logistic(spec: SynthSpec) -> Synthetic:
    """Two-species coupled logistic maps; ``beta_yx`` is X's effect on Y."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    x0, y0 = rng.uniform(0.2, 0.8, size=2)
    out = None
    for attempt in range(10):
        out = _logistic_run(spec.L, spec.rx, spec.ry, spec.beta_xy, spec.beta_yx, spec.burn_in, x0, y0)
        if out is not None:
            break
        x0, y0 = np.clip(np.array([x0, y0]) + rng.uniform(-0.05, 0.05, size=2), 0.01, 0.99)
        log.debug("logistic trajectory left (0,1); retry %d", attempt + 1)
    if out is None:
        raise McaError("coupled logistic trajectory diverged in 10 attempts")
    drives = []
    if spec.beta_yx != 0:
        drives.append("X->Y")
    if spec.beta_xy != 0:
        drives.append("Y->X")
    regions = [RegionMask("X", (0,)), RegionMask("Y", (1,))]
    return Synthetic(Ensemble(out, dt=spec.dt), regions, {"drives": drives})


def gen_noise(spec: SynthSpec) -> Synthetic:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal((spec.n_series, spec.L))
    return Synthetic(Ensemble(x, dt=spec.dt), [RegionMask("noise", tuple(range(spec.n_series)))])


def generate(spec: SynthSpec) -> Synthetic:
    spec.validate()
    return {
        "coupled_logistic": gen_coupled_logistic,
        "community_blocks": gen_community_ensemble,
        "noise": gen_noise,
    }[spec.kind](spec)


def stimulus_wave(period_s: float = 20.8, cycles: int = 6, dt: float = DEFAULT_DT) -> np.ndarray:
    """Rest (0) then task (1) blocks of round(period_s / dt) samples each, per cycle."""
    if not period_s > dt:
        raise InvalidArgument("block period must exceed the sampling period")
    half = int(round(period_s / dt))
    return np.tile(np.r_[np.zeros(half), np.ones(half)], int(cycles))


def align_stimulus(stim, L: int) -> np.ndarray:
    stim = np.asarray(stim, dtype=float)
    if stim.size < L:
        raise InvalidArgument(f"stimulus has {stim.size} samples, series have {L}")
    return stim[:L]


def ground_truth_mask(e: Ensemble, stim, threshold: float = 0.55, name: str = "truth") -> RegionMask:
    """Series whose Pearson correlation with the stimulus is >= threshold."""
    s = align_stimulus(stim, e.length)
    r = pearson_rows(e.series, np.broadcast_to(s, e.series.shape))
    skipped = np.flatnonzero(np.isnan(r))
    if skipped.size:
        log.warning("skipping %d constant series in ground-truth mask: %s", skipped.size, skipped.tolist())
    keep = np.flatnonzero(np.nan_to_num(r, nan=-np.inf) >= threshold)
    return RegionMask(name, tuple(keep.tolist()))


def gen_stimulus_ensemble(n_series: int = 100, n_active: int = 30, snr: float = 2.0, L: int = 488,
                          dt: float = DEFAULT_DT, seed: int = 0) -> Synthetic:
    """Active series = stimulus + noise at power SNR ``snr``; the rest pure noise."""
    rng = np.random.default_rng(seed)
    cycles = math.ceil(L / (2 * round(20.8 / dt)))
    stim = align_stimulus(stimulus_wave(20.8, max(cycles, 6), dt), L)
    noise_sd = math.sqrt(stim.var() / snr)
    active = np.sort(rng.choice(n_series, n_active, replace=False))
    x = rng.standard_normal((n_series, L)) * noise_sd
    x[active] += stim
    return Synthetic(Ensemble(x, dt=dt), [RegionMask("task", tuple(active.tolist()))], {"stimulus": stim})
