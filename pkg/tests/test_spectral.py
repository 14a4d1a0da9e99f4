import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spinnoise.spectral import (
    Spectrum,
    SpectrumError,
    average_spectra,
    band_power,
    periodogram,
    raw_periodogram,
    to_db,
)
from spinnoise.synth import TimeTrace, synth_trace


def _white(n, sigma, seed=0, fs=200e3):
    rng = np.random.default_rng(seed)
    return TimeTrace(rng.normal(0, sigma, n), fs, seed)


def test_parseval_per_trace(default_scenario):
    tr = synth_trace(default_scenario, 0.5, seed=3)
    spec = periodogram(tr, 10.0)
    assert spec.total_power() == pytest.approx(np.var(tr.samples), rel=5e-3)


def test_bin_centres_and_count():
    spec = periodogram(_white(100000, 1.0), 10.0)
    assert spec.freqs[0] == pytest.approx(4.0)
    assert spec.freqs[1] == pytest.approx(14.0)
    assert len(spec) == 10000
    assert spec.bin_width == 10.0


def test_white_noise_unbiased():
    sigma, fs = 0.3, 200e3
    specs = [periodogram(_white(100000, sigma, s), 10.0) for s in range(5)]
    avg = average_spectra(specs)
    vals = avg.psd[1:]
    expected = 2 * sigma**2 / fs
    sem = vals.std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals.mean() - expected) < 3 * sem


def test_floor_only_window_matches_shot_noise(default_scenario):
    tr = synth_trace(default_scenario, 0.5, seed=5)
    spec = periodogram(tr, 10.0)
    got = band_power(spec, 80e3, 90e3)
    expected = default_scenario.shot_noise() * 10e3
    # 5000 raw chi-square(2) bins: relative sd 1/sqrt(5000)
    assert abs(got / expected - 1) < 3 / math.sqrt(5000)


def test_mean_is_removed():
    tr = TimeTrace(np.full(1000, 5.0) + np.sin(np.arange(1000)), 1000.0, 0)
    f, p = raw_periodogram(tr.samples, tr.sample_rate)
    assert p[0] == pytest.approx(0.0, abs=1e-20)


def test_bin_width_must_be_multiple_of_resolution():
    with pytest.raises(SpectrumError, match="multiple"):
        periodogram(_white(100000, 1.0), 3.0)


def test_mismatched_grids_rejected():
    a = periodogram(_white(100000, 1.0), 10.0)
    b = periodogram(_white(40000, 1.0), 10.0)
    with pytest.raises(SpectrumError, match="mismatched"):
        average_spectra([a, b])
    with pytest.raises(SpectrumError):
        average_spectra([])


def test_band_outside_coverage_rejected():
    spec = periodogram(_white(100000, 1.0), 10.0)
    with pytest.raises(SpectrumError, match="outside"):
        band_power(spec, 90e3, 120e3)
    with pytest.raises(SpectrumError):
        band_power(spec, 5e3, 5e3)


def test_empty_trace_rejected():
    with pytest.raises(SpectrumError):
        periodogram(TimeTrace(np.array([]), 1e3, 0))


def test_average_tracks_sources():
    specs = [periodogram(_white(2000, 1.0, s, fs=2000.0), 10.0) for s in range(3)]
    avg = average_spectra(specs)
    assert avg.n_averages == 3 and avg.source_ids == [0, 1, 2]


def test_to_db_reference():
    assert to_db(10.0) == pytest.approx(10.0)
    assert to_db(2.0, reference=2.0) == pytest.approx(0.0)


@given(arrays(np.float64, st.integers(2, 400), elements=st.floats(-1e3, 1e3)))
def test_parseval_raw(x):
    f, p = raw_periodogram(x, 50.0)
    df = 50.0 / len(x)
    assert np.sum(p) * df == pytest.approx(np.var(x), rel=1e-9, abs=1e-9)
    assert len(f) == len(x) // 2 + 1


@given(arrays(np.float64, 400, elements=st.floats(-10, 10)), st.floats(0.01, 100))
def test_psd_scales_quadratically(x, c):
    a = periodogram(TimeTrace(x, 400.0, 0), 5.0)
    b = periodogram(TimeTrace(c * x, 400.0, 0), 5.0)
    assert np.allclose(b.psd, c * c * a.psd, rtol=1e-9, atol=1e-12)


@given(arrays(np.float64, 400, elements=st.floats(-10, 10)))
def test_psd_nonnegative_and_binned_power_bounded(x):
    spec = periodogram(TimeTrace(x, 400.0, 0), 5.0)
    assert np.all(spec.psd >= 0)
    assert spec.total_power() <= np.var(x) * (1 + 1e-9) + 1e-12


@given(st.integers(1, 5))
def test_average_of_copies_is_identity(k):
    spec = periodogram(_white(4000, 1.0, fs=4000.0), 10.0)
    avg = average_spectra([spec] * k)
    assert np.allclose(avg.psd, spec.psd)
    assert avg.n_averages == k


def test_spectrum_validation():
    with pytest.raises(SpectrumError):
        Spectrum(np.arange(3.0), np.arange(4.0), 1.0)
    with pytest.raises(SpectrumError):
        Spectrum(np.arange(3.0), np.arange(3.0), 0.0)
