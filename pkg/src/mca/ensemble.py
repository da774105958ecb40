"""Time-series ensemble container, file I/O and the preprocessing chain.

Preprocessing order is fixed: drop_initial -> detrend -> bandpass -> znormalize.
All operations are pure; none mutate their inputs.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSeriesError, FormatError, InvalidArgument

log = logging.getLogger(__name__)

DEFAULT_DT = 0.5
BAND_LO = 0.0083
BAND_HI = 0.08


@dataclass(frozen=True)
class Ensemble:
    """N series x L samples, plus sampling period and optional pixel grid.

    ``grid`` is an (N, 2) integer array of (row, col) coordinates on a
    ``grid_shape`` = (rows, cols) lattice.
    """

    series: np.ndarray
    dt: float = DEFAULT_DT
    grid: Optional[np.ndarray] = None
    grid_shape: Optional[tuple[int, int]] = None
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        x = np.asarray(self.series, dtype=float)
        if x.ndim != 2:
            raise InvalidArgument(f"series must be 2-D (N, L), got shape {x.shape}")
        if x.shape[1] < 1:
            raise InvalidArgument("series length L must be >= 1")
        if not self.dt > 0:
            raise InvalidArgument(f"dt must be > 0, got {self.dt}")
        object.__setattr__(self, "series", x)
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=int)
            if g.shape != (x.shape[0], 2):
                raise InvalidArgument(f"grid must have shape ({x.shape[0]}, 2), got {g.shape}")
            if self.grid_shape is None:
                shape = (int(g[:, 0].max()) + 1, int(g[:, 1].max()) + 1)
            else:
                shape = (int(self.grid_shape[0]), int(self.grid_shape[1]))
            if (g < 0).any() or (g[:, 0] >= shape[0]).any() or (g[:, 1] >= shape[1]).any():
                raise InvalidArgument(f"grid coordinates outside {shape[0]}x{shape[1]} lattice")
            if len({(int(r), int(c)) for r, c in g}) != len(g):
                raise InvalidArgument("grid coordinates must be unique per series")
            object.__setattr__(self, "grid", g)
            object.__setattr__(self, "grid_shape", shape)
        if self.labels is not None:
            if len(self.labels) != x.shape[0]:
                raise InvalidArgument("labels must have one entry per series")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_series(self) -> int:
        return self.series.shape[0]

    @property
    def length(self) -> int:
        return self.series.shape[1]

    def with_series(self, series: np.ndarray) -> "Ensemble":
        return replace(self, series=series)


@dataclass(frozen=True)
class RegionMask:
    name: str
    indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise InvalidArgument(f"region {self.name!r} has duplicate indices")
        if any(i < 0 for i in idx):
            raise InvalidArgument(f"region {self.name!r} has negative indices")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def check(self, n: int) -> None:
        if any(i >= n for i in self.indices):
            raise InvalidArgument(f"region {self.name!r} references series >= N={n}")


# --------------------------------------------------------------------------
# I/O

def _read_matrix_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}: ragged row {r} has {len(row)} columns, expected {width}")
            vals = []
            for c, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise FormatError(f"{path}: non-numeric cell {cell!r} at row {r}, col {c}") from None
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: empty file")
    return np.array(rows, dtype=float)


def read_sidecar(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}: line {n + 1} is not key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def load_ensemble(path, meta=None) -> Ensemble:
    """Read a headerless CSV (row = series) and optional key=value sidecar.

    Sidecar keys: ``dt``, ``grid_w``, ``grid_h`` and ``coords`` (path,
    relative to the sidecar, of a ``series_index,row,col`` CSV).
    """
    x = _read_matrix_csv(path)
    dt = DEFAULT_DT
    grid = grid_shape = None
    if meta is not None:
        kv = read_sidecar(meta)
        try:
            dt = float(kv.get("dt", DEFAULT_DT))
        except ValueError:
            raise FormatError(f"{meta}: dt is not a number") from None
        if "coords" in kv:
            cpath = Path(meta).parent / kv["coords"]
            grid = load_coords(cpath, x.shape[0])
            if "grid_w" in kv and "grid_h" in kv:
                grid_shape = (int(kv["grid_h"]), int(kv["grid_w"]))
    return Ensemble(x, dt=dt, grid=grid, grid_shape=grid_shape)


def load_coords(path, n: int) -> np.ndarray:
    grid = np.full((n, 2), -1, dtype=int)
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                i, rr, cc = (int(v) for v in row)
            except ValueError:
                raise FormatError(f"{path}: bad coordinate row {r}: {row}") from None
            if not 0 <= i < n:
                raise FormatError(f"{path}: series index {i} out of range")
            grid[i] = (rr, cc)
    if (grid < 0).any():
        raise FormatError(f"{path}: missing coordinates for some series")
    return grid


def _fmt(v: float) -> str:
    return repr(float(v))


def write_matrix_csv(path, x: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        for row in np.atleast_2d(x):
            fh.write(",".join(_fmt(v) for v in row))
            fh.write("\n")


def save_ensemble(e: Ensemble, path, meta=None) -> None:
    write_matrix_csv(path, e.series)
    if meta is None:
        return
    meta = Path(meta)
    lines = [f"dt={_fmt(e.dt)}"]
    if e.grid is not None:
        cname = meta.with_suffix(".coords.csv").name
        lines += [f"grid_w={e.grid_shape[1]}", f"grid_h={e.grid_shape[0]}", f"coords={cname}"]
        with open(meta.parent / cname, "w") as fh:
            for i, (r, c) in enumerate(e.grid):
                fh.write(f"{i},{r},{c}\n")
    meta.write_text("\n".join(lines) + "\n")


def load_regions(path) -> list[RegionMask]:
    """Region mask CSV: ``series_index,region_name``; order of first appearance kept."""
    members: dict[str, list[int]] = {}
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: row {r} must be series_index,region_name")
            try:
                i = int(row[0])
            except ValueError:
                raise FormatError(f"{path}: non-integer index at row {r}") from None
            members.setdefault(row[1].strip(), []).append(i)
    return [RegionMask(k, tuple(v)) for k, v in members.items()]


def save_regions(path, regions: Sequence[RegionMask]) -> None:
    with open(path, "w") as fh:
        for reg in regions:
            for i in reg.indices:
                fh.write(f"{i},{reg.name}\n")


# --------------------------------------------------------------------------
# preprocessing

def drop_initial(e: Ensemble, n: int) -> Ensemble:
    if not 0 <= n < e.length:
        raise InvalidArgument(f"cannot drop {n} samples from series of length {e.length}")
    if n == 0:
        return e
    return e.with_series(e.series[:, n:].copy())


def detrend(s) -> np.ndarray:
    """Remove the least-squares line over t = 0..L-1 (works row-wise on 2-D input)."""
    s = np.asarray(s, dtype=float)
    L = s.shape[-1]
    if L < 2:
        raise InvalidArgument("detrend needs at least 2 samples")
    t = np.arange(L, dtype=float)
    t -= t.mean()
    mean = s.mean(axis=-1, keepdims=True)
    slope = (s - mean) @ t / (t @ t)
    return s - mean - slope[..., None] * t


def band_mask(L: int, dt: float, f_lo: float, f_hi: float) -> np.ndarray:
    f = np.fft.rfftfreq(L, dt)
    return (f >= f_lo) & (f <= f_hi) & ~((f == 0) & (f_lo > 0))


def bandpass(s, f_lo: float = BAND_LO, f_hi: float = BAND_HI, dt: float = DEFAULT_DT) -> np.ndarray:
    """Ideal Fourier-mask band-pass; bins with |f| outside [f_lo, f_hi] are zeroed."""
    s = np.asarray(s, dtype=float)
    nyq = 1.0 / (2.0 * dt)
    if not (0 <= f_lo < f_hi):
        raise InvalidArgument(f"need 0 <= f_lo < f_hi, got [{f_lo}, {f_hi}]")
    if f_hi > nyq:
        raise InvalidArgument(f"f_hi={f_hi} Hz exceeds Nyquist {nyq} Hz")
    L = s.shape[-1]
    spec = np.fft.rfft(s, axis=-1)
    spec[..., ~band_mask(L, dt, f_lo, f_hi)] = 0.0
    return np.fft.irfft(spec, n=L, axis=-1)


def out_of_band_fraction(s, f_lo: float, f_hi: float, dt: float) -> np.ndarray:
    """Share of (two-sided) spectral power outside the band, per series."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    L = s.shape[-1]
    p = np.abs(np.fft.fft(s, axis=-1)) ** 2
    f = np.abs(np.fft.fftfreq(L, dt))
    inside = (f >= f_lo) & (f <= f_hi) & ~((f == 0) & (f_lo > 0))
    total = p.sum(axis=-1)
    return p[:, ~inside].sum(axis=-1) / np.where(total > 0, total, 1.0)


def znormalize(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    mu = s.mean(axis=-1, keepdims=True)
    c = s - mu
    sd = np.sqrt((c * c).mean(axis=-1, keepdims=True))
    scale = np.abs(s).max(axis=-1, keepdims=True)
    bad = (sd <= 1e-12 * np.where(scale > 0, scale, 1.0)).reshape(-1)
    if bad.any():
        raise DegenerateSeriesError(np.flatnonzero(bad).tolist())
    out = c / sd
    # one refinement pass pushes mean/std to the last ulp
    out -= out.mean(axis=-1, keepdims=True)
    out /= np.sqrt((out * out).mean(axis=-1, keepdims=True))
    return out


@dataclass(frozen=True)
class PreprocessConfig:
    drop: int = 24
    f_lo: float = BAND_LO
    f_hi: float = BAND_HI
    do_detrend: bool = True
    do_bandpass: bool = True


def preprocess(e: Ensemble, cfg: PreprocessConfig = PreprocessConfig()) -> Ensemble:
    e = drop_initial(e, cfg.drop)
    x = e.series
    if cfg.do_detrend:
        x = detrend(x)
    if cfg.do_bandpass:
        x = bandpass(x, cfg.f_lo, cfg.f_hi, e.dt)
    return e.with_series(znormalize(x))


def smooth_spatial(e: Ensemble, sigma: float) -> Ensemble:
    """Gaussian smoothing over the pixel grid, truncated at 3 sigma.

    Weights are renormalised over the pixels actually present, so irregular
    masks do not bleed zeros in from missing neighbours.
    """
    if e.grid is None:
        raise InvalidArgument("spatial smoothing requires grid coordinates")
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be > 0, got {sigma}")
    g = e.grid.astype(float)
    d2 = ((g[:, None, :] - g[None, :, :]) ** 2).sum(-1)
    radius2 = (3.0 * sigma) ** 2
    w = np.where(d2 <= radius2, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
    w /= w.sum(axis=1, keepdims=True)
    return e.with_series(w @ e.series)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise InvalidArgument("pearson needs two 1-D series of equal length >= 2")
    r = pearson_rows(a[None, :], b[None, :])[0]
    if math.isnan(r):
        raise DegenerateSeriesError([], "pearson undefined for a constant series")
    return float(r)


def pearson_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Pearson r of two (M, n) arrays; NaN where a row is constant.

    Each row's value depends only on that row, so results are identical
    whether a row is evaluated alone or in a batch (inputs are made
    C-contiguous so every row reduces along the same memory path).
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    ac = a - a.mean(axis=-1, keepdims=True)
    bc = b - b.mean(axis=-1, keepdims=True)
    saa = (ac * ac).sum(axis=-1)
    sbb = (bc * bc).sum(axis=-1)
    sab = (ac * bc).sum(axis=-1)
    # centred energy at rounding level counts as constant
    ea = np.sqrt(saa) <= 1e-12 * np.sqrt(a.shape[-1]) * np.abs(a).max(axis=-1)
    eb = np.sqrt(sbb) <= 1e-12 * np.sqrt(b.shape[-1]) * np.abs(b).max(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = sab / np.sqrt(saa * sbb)
    r = np.clip(r, -1.0, 1.0)
    r[ea | eb] = np.nan
    return r
