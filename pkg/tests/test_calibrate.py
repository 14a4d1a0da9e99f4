import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinnoise import physics as ph
from spinnoise.calibrate import (
    CalibrationError,
    calibrate_od_scale,
    fit_kappa_squared,
    fit_linewidth_model,
    fit_shot_noise,
    qc_select,
    variance_from_fit,
)
from spinnoise.physics import CellSpec, DetectorSpec
from spinnoise.spectral import Spectrum, periodogram
from spinnoise.synth import Scenario, qc_contamination, synth_trace

POWERS = np.array([0.5e-3, 1.0e-3, 1.5e-3, 2.5e-3, 4.0e-3])


def test_shot_noise_exact_line_recovers_efficiency():
    det = DetectorSpec()
    pts = [(p, ph.shot_noise_psd(det, p, 1.0)) for p in POWERS]
    fit = fit_shot_noise(pts, det, solve_for="Q")
    assert fit["Q"] == pytest.approx(0.87, rel=1e-12)
    assert fit.error("Q") == pytest.approx(0.0, abs=1e-12)


def test_shot_noise_exact_line_recovers_squeezing():
    det = DetectorSpec()
    pts = [(p, ph.shot_noise_psd(det, p, 0.55)) for p in POWERS]
    assert fit_shot_noise(pts, det, solve_for="xi_sq")["xi_sq"] == pytest.approx(0.55, rel=1e-12)


def test_shot_noise_intercept_diagnostic():
    det = DetectorSpec()
    pts = [(p, ph.shot_noise_psd(det, p, 1.0) + 1e-12) for p in POWERS]
    fit = fit_shot_noise(pts, det, free_intercept=True)
    assert fit.goodness["intercept"] == pytest.approx(1e-12, rel=1e-6)


def test_shot_noise_weighted_points():
    det = DetectorSpec()
    pts = [(p, ph.shot_noise_psd(det, p, 1.0), 1e-12) for p in POWERS]
    assert fit_shot_noise(pts, det)["Q"] == pytest.approx(0.87, rel=1e-12)


def test_shot_noise_input_errors():
    with pytest.raises(CalibrationError):
        fit_shot_noise([(1e-3, 1e-10), (2e-3, 2e-10)])
    with pytest.raises(CalibrationError):
        fit_shot_noise([(1e-3, -1e-10), (2e-3, -2e-10), (3e-3, -3e-10)])
    with pytest.raises(ValueError):
        fit_shot_noise([(1e-3, 1e-10), (2e-3, 2e-10), (3e-3, 3e-10)], solve_for="G")


def test_variance_from_fit_inverts_amplitude():
    sc = Scenario()
    line = sc.lines()[0]
    got = variance_from_fit(line.s_at, line.fwhm_hz, sc.probe.power_w)
    assert got == pytest.approx(line.var_theta, rel=1e-12)


def test_kappa_squared_exact_line():
    cell = CellSpec()
    dens = np.array([1.5e12, 2.4e12, 5e12, 9e12, 1.3e13])
    pts = [(n, ph.faraday_variance(CellSpec(density_cm3=n), ph.RB85, 5e-4)) for n in dens]
    fit = fit_kappa_squared(pts, cell)
    assert fit["kappa_squared"] == pytest.approx(5e-4, rel=1e-9)
    assert fit.goodness["offset_within_3sigma"] == 1.0


def test_kappa_squared_needs_distinct_densities():
    with pytest.raises(CalibrationError):
        fit_kappa_squared([(1e12, 1e-13)] * 3)


def test_linewidth_exact_plane():
    pts = [(n, p, ph.linewidth_fwhm(n, p)) for n in (1.5e12, 5e12, 1.3e13) for p in POWERS]
    fit = fit_linewidth_model(pts)
    assert fit["gamma0_hz"] == pytest.approx(501.0, rel=1e-9)
    assert fit["alpha_hz_per_1e12_cm3"] == pytest.approx(57.8, rel=1e-9)
    assert fit["beta_hz_per_mw"] == pytest.approx(63.0, rel=1e-9)
    assert "gamma0_hz" in fit.to_csv() and "57.8" in fit.report()


def test_linewidth_rank_deficient_grid_named():
    pts = [(2.4e12, p, ph.linewidth_fwhm(2.4e12, p)) for p in POWERS]
    with pytest.raises(CalibrationError, match="densities"):
        fit_linewidth_model(pts)
    pts = [(n, 1e-3, ph.linewidth_fwhm(n, 1e-3)) for n in (1e12, 2e12, 3e12)]
    with pytest.raises(CalibrationError, match="powers"):
        fit_linewidth_model(pts)
    pts = [(n, n * 1e-15, 1000.0) for n in (1e12, 2e12, 3e12)]
    with pytest.raises(CalibrationError, match="collinear"):
        fit_linewidth_model(pts)


def test_od_scale_reproduces_default():
    fit = calibrate_od_scale()
    assert fit["od_scale"] == pytest.approx(ph.OD_SCALE, abs=1e-6)
    assert fit.error("od_scale") >= 0


def _qc_fixture():
    sc = Scenario()
    traces = [synth_trace(sc, 0.1, seed=s) for s in range(20)]
    specs = [periodogram(t, 10.0) for t in traces]
    specs[3] = periodogram(qc_contamination(traces[3], 1.2), 10.0)
    specs[11] = periodogram(qc_contamination(traces[11], 1.2), 10.0)
    return specs


def test_qc_rejects_contaminated():
    rep = qc_select(_qc_fixture())
    assert rep.rejected_indices == [3, 11]
    assert rep.rejected_fraction == pytest.approx(0.1)


def test_qc_frozen_mean():
    specs = _qc_fixture()
    rep = qc_select(specs)
    frozen = qc_select(specs[:5], chi_bar=rep.chi_bar)
    assert frozen.rejected_indices == [3]
    assert frozen.chi_bar == rep.chi_bar


def test_qc_needs_two_spectra():
    with pytest.raises(CalibrationError):
        qc_select(_qc_fixture()[:1])


@settings(max_examples=40)
@given(st.lists(st.floats(0.5, 2.0), min_size=2, max_size=30), st.floats(1.0, 1.5))
def test_qc_partitions_indices(levels, threshold):
    f = np.arange(10000) * 10.0 + 4.0
    specs = [Spectrum(f, np.full(len(f), lv), 10.0) for lv in levels]
    rep = qc_select(specs, threshold=threshold)
    assert sorted(rep.kept_indices + rep.rejected_indices) == list(range(len(levels)))
    assert rep.kept_indices  # the minimum is never above threshold * mean
    for i in rep.rejected_indices:
        assert rep.chi_values[i] > threshold * rep.chi_bar


@settings(max_examples=30)
@given(st.floats(0.3, 1.0), st.floats(1e5, 1e7))
def test_shot_noise_fit_inverts_model(q, gain):
    det = DetectorSpec(gain_v_per_a=gain, quantum_efficiency=q)
    pts = [(p, ph.shot_noise_psd(det, p, 1.0)) for p in POWERS]
    assert fit_shot_noise(pts, det)["Q"] == pytest.approx(q, rel=1e-9)


@settings(max_examples=30)
@given(st.floats(100, 1000), st.floats(10, 100), st.floats(10, 100))
def test_linewidth_fit_inverts_model(g0, a, b):
    br = ph.BroadeningParams.from_hz(g0, a, b)
    pts = [(n, p, ph.linewidth_fwhm(n, p, br)) for n in (1e12, 6e12, 1.3e13) for p in POWERS]
    fit = fit_linewidth_model(pts)
    assert fit.values == pytest.approx([g0, a, b], rel=1e-8)
    assert all(e >= 0 and math.isfinite(e) for e in fit.errors)
