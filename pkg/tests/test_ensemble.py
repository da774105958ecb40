import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mca.ensemble import (BAND_HI, BAND_LO, Ensemble, PreprocessConfig, RegionMask, band_mask, bandpass,
                          detrend, drop_initial, load_ensemble, load_regions, out_of_band_fraction,
                          pearson, pearson_rows, preprocess, save_ensemble, save_regions, smooth_spatial,
                          znormalize)
from mca.errors import DegenerateSeriesError, FormatError, InvalidArgument

from oracles import pearson_scalar

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _write(p, text):
    p.write_text(text)
    return p


# --- data model / IO ------------------------------------------------------

def test_load_3x5(tmp_path):
    p = _write(tmp_path / "e.csv", "\n".join(",".join(str(i * 5 + j) for j in range(5)) for i in range(3)))
    e = load_ensemble(p)
    assert (e.n_series, e.length) == (3, 5)
    assert e.dt == 0.5 and e.grid is None


def test_ragged_row_named(tmp_path):
    p = _write(tmp_path / "e.csv", "1,2,3\n4,5\n6,7,8\n")
    with pytest.raises(FormatError, match="row 1"):
        load_ensemble(p)


def test_non_numeric_position(tmp_path):
    p = _write(tmp_path / "e.csv", "1,2,3\n4,x,6\n")
    with pytest.raises(FormatError, match="row 1, col 1"):
        load_ensemble(p)


def test_sidecar_dt_and_grid(tmp_path):
    _write(tmp_path / "e.csv", "1,2,3\n4,5,7\n")
    _write(tmp_path / "c.csv", "0,0,1\n1,1,0\n")
    m = _write(tmp_path / "e.meta", "# comment\ndt=0.5\ngrid_w=2\ngrid_h=2\ncoords=c.csv\n")
    e = load_ensemble(tmp_path / "e.csv", m)
    assert e.dt == 0.5
    assert e.grid.tolist() == [[0, 1], [1, 0]]
    assert e.grid_shape == (2, 2)


def test_save_load_roundtrip(tmp_path, rng):
    x = rng.standard_normal((4, 17))
    e = Ensemble(x, dt=0.25, grid=[(0, 0), (0, 1), (1, 0), (1, 1)])
    save_ensemble(e, tmp_path / "e.csv", tmp_path / "e.meta")
    e2 = load_ensemble(tmp_path / "e.csv", tmp_path / "e.meta")
    assert np.array_equal(e2.series, x)
    assert e2.dt == 0.25 and np.array_equal(e2.grid, e.grid)


def test_regions_roundtrip(tmp_path):
    regs = [RegionMask("LMC", (0, 2)), RegionMask("SMA", (1,))]
    save_regions(tmp_path / "r.csv", regs)
    assert load_regions(tmp_path / "r.csv") == regs


@pytest.mark.parametrize("kw", [dict(series=np.zeros((2, 0))), dict(series=np.zeros((2, 4)), dt=0.0),
                                dict(series=np.zeros((2, 4)), grid=[(0, 0), (0, 0)]),
                                dict(series=np.zeros((2, 4)), grid=[(0, 0), (0, 5)], grid_shape=(2, 2))])
def test_ensemble_invariants(kw):
    with pytest.raises(InvalidArgument):
        Ensemble(**kw)


def test_region_mask_checks():
    with pytest.raises(InvalidArgument):
        RegionMask("a", (1, 1))
    with pytest.raises(InvalidArgument):
        RegionMask("a", (0, 3)).check(3)


# --- preprocessing --------------------------------------------------------

def test_drop_initial():
    e = Ensemble(np.zeros((2, 512)))
    assert drop_initial(e, 24).length == 488
    assert drop_initial(e, 0) is e
    assert drop_initial(Ensemble(np.array([[1.0, 2.0, 3.0]])), 2).series.tolist() == [[3.0]]
    with pytest.raises(InvalidArgument):
        drop_initial(e, 512)


def test_detrend_examples():
    assert np.allclose(detrend([1, 2, 3, 4]), 0, atol=1e-15)
    assert np.allclose(detrend([5, 5, 5]), 0, atol=1e-15)
    # normal equations on [1, t]
    s = np.array([0.0, 1, 0, 1])
    t = np.arange(4.0)
    X = np.c_[np.ones(4), t]
    coef = np.linalg.solve(X.T @ X, X.T @ s)
    assert np.allclose(detrend(s), s - X @ coef, atol=1e-14)


decimals = st.integers(-10 ** 6, 10 ** 6).map(lambda v: v / 1000.0)


@given(arrays(float, st.integers(2, 64), elements=decimals))
def test_detrend_orthogonal(s):
    r = detrend(s)
    t = np.arange(s.size, dtype=float)
    scale = np.linalg.norm(s) + 1e-300
    assert abs(r.sum()) <= 1e-9 * scale * math.sqrt(s.size)
    assert abs(r @ t) <= 1e-9 * scale * np.linalg.norm(t)
    assert np.allclose(detrend(r), r, atol=1e-9 * (1 + np.abs(s).max()))


@pytest.mark.xfail(strict=True, reason="0.04 Hz is not a DFT bin at L=488, dt=0.5; ~0.4% of the tone's "
                                       "power leaks out of band and the ideal mask removes it (r ~ 0.9958)")
def test_bandpass_offbin_tone_passes():
    t = np.arange(488) * 0.5
    inband = np.sin(2 * np.pi * 0.04 * t)
    assert pearson(bandpass(inband), inband) >= 0.999


@pytest.mark.xfail(strict=True, reason="0.2 Hz is 48.8 bins at L=488; its leakage into the band survives "
                                       "(RMS ratio ~ 2.8e-2)")
def test_bandpass_offbin_tone_suppressed():
    t = np.arange(488) * 0.5
    out = np.sin(2 * np.pi * 0.2 * t)
    rms = lambda v: np.sqrt(np.mean(v ** 2))
    assert rms(bandpass(out)) <= 1e-6 * rms(out)


def _bin_tone(k, L=488, dt=0.5):
    t = np.arange(L) * dt
    return np.sin(2 * np.pi * k / (L * dt) * t)


def test_bandpass_examples():
    # nearest bins to 0.04 Hz and 0.2 Hz: 10 and 49 cycles over the record
    inband = _bin_tone(10)
    assert pearson(bandpass(inband), inband) >= 0.999
    out = _bin_tone(49)
    rms = lambda v: np.sqrt(np.mean(v ** 2))
    assert rms(bandpass(out)) <= 1e-6 * rms(out)
    assert np.allclose(bandpass(np.full(488, 3.0), f_lo=0.0083), 0.0, atol=1e-12)
    with pytest.raises(InvalidArgument):
        bandpass(inband, 0.0, 1.5, 0.5)


@given(arrays(float, st.integers(16, 300), elements=finite))
def test_bandpass_out_of_band_power(s):
    y = bandpass(s, BAND_LO, BAND_HI, 0.5)
    if np.abs(y).max() == 0:
        return
    assert out_of_band_fraction(y, BAND_LO, BAND_HI, 0.5)[0] <= 1e-10
    assert np.allclose(bandpass(y, BAND_LO, BAND_HI, 0.5), y, atol=1e-12 * (1 + np.abs(y).max()))


def test_band_mask_bins():
    m = band_mask(488, 0.5, BAND_LO, BAND_HI)
    f = np.fft.rfftfreq(488, 0.5)
    assert not m[0]
    assert m[(f >= BAND_LO) & (f <= BAND_HI)].all() and not m[f > BAND_HI].any()


def test_znormalize_examples():
    z = znormalize([1.0, 2.0, 3.0])
    assert np.allclose(z, [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    assert np.allclose(znormalize(z), z, atol=1e-12)
    with pytest.raises(DegenerateSeriesError):
        znormalize([7.0, 7.0, 7.0])


@given(arrays(float, st.integers(3, 200), elements=finite))
def test_znormalize_moments(s):
    if np.ptp(s) <= 1e-6 * (1 + np.abs(s).max()):
        return
    z = znormalize(s)
    assert abs(z.mean()) <= 1e-12
    assert abs(z.std() - 1.0) <= 1e-12


def test_preprocess_standard_chain(rng):
    e = Ensemble(rng.standard_normal((6, 512)).cumsum(axis=1))
    p = preprocess(e)
    assert p.length == 488
    x = p.series
    assert np.abs(x.mean(axis=1)).max() <= 1e-12
    assert np.abs(x.std(axis=1) - 1).max() <= 1e-12
    assert out_of_band_fraction(x, BAND_LO, BAND_HI, 0.5).max() <= 1e-10


def test_preprocess_stages_idempotent(rng):
    # each stage on its own is idempotent
    x = rng.standard_normal((4, 488)).cumsum(axis=1)
    d = detrend(x)
    assert np.abs(detrend(d) - d).max() <= 1e-9
    b = bandpass(x)
    assert np.abs(bandpass(b) - b).max() <= 1e-12
    z = znormalize(b)
    assert np.abs(znormalize(z) - z).max() <= 1e-12


@pytest.mark.xfail(strict=True, reason="detrend of a band-limited series subtracts a ramp whose in-band "
                                       "part the mask keeps; the composed chain is not idempotent")
def test_preprocess_twice_changes_little(rng):
    e = Ensemble(rng.standard_normal((4, 512)).cumsum(axis=1))
    once = preprocess(e)
    twice = preprocess(once, PreprocessConfig(drop=0))
    assert np.abs(twice.series - once.series).max() <= 1e-6


def test_smooth_spatial_examples():
    grid = [(r, c) for r in range(3) for c in range(3)]
    x = np.zeros((9, 2))
    x[4] = 1.0
    e = Ensemble(x, grid=grid)
    assert np.allclose(smooth_spatial(e, 1e-6).series, x, atol=1e-9)
    const = Ensemble(np.full((9, 3), 2.5), grid=grid)
    assert np.allclose(smooth_spatial(const, 1.3).series, 2.5, atol=1e-12)
    # centre keeps its normalised self-weight; all 8 neighbours lie within 3 sigma
    w = [math.exp(-((r - 1) ** 2 + (c - 1) ** 2) / 2.0) for r, c in grid]
    assert smooth_spatial(e, 1.0).series[4, 0] == pytest.approx(1.0 / sum(w), abs=1e-12)
    with pytest.raises(InvalidArgument):
        smooth_spatial(Ensemble(x), 1.0)


def test_smooth_spatial_irregular_mask():
    # missing pixels do not pull values towards zero
    e = Ensemble(np.full((3, 2), 4.0), grid=[(0, 0), (0, 1), (2, 2)])
    assert np.allclose(smooth_spatial(e, 2.0).series, 4.0)


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3, 4], [1, 2, 4, 3]) == pytest.approx(0.8, abs=1e-12)
    with pytest.raises(DegenerateSeriesError):
        pearson([1, 1, 1], [1, 2, 3])


@given(arrays(float, 12, elements=finite), arrays(float, 12, elements=finite),
       st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_symmetric_affine(a, b, alpha, beta):
    if np.ptp(a) < 1e-3 or np.ptp(b) < 1e-3:
        return
    r = pearson(a, b)
    assert r == pytest.approx(pearson(b, a), abs=1e-12)
    assert r == pytest.approx(pearson(alpha * a + beta, b), abs=1e-12)
    assert r == pytest.approx(pearson_scalar(a.tolist(), b.tolist()), abs=1e-9)
    assert -1.0 <= r <= 1.0


def test_pearson_rows_batch_invariant(rng):
    a = rng.standard_normal((7, 50))
    b = rng.standard_normal((7, 50))
    full = pearson_rows(a, b)
    for i in range(7):
        assert pearson_rows(a[i:i + 1], b[i:i + 1])[0] == full[i]
    a[3] = 2.0
    assert np.isnan(pearson_rows(a, b)[3])
