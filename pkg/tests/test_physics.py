import dataclasses as dc
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinnoise import physics as ph
from spinnoise.physics import (
    RB85,
    RB87,
    BroadeningParams,
    CellSpec,
    DetectorSpec,
    FitParams,
    ProbeSpec,
)
from spinnoise.synth import Scenario

# Frozen oracle values from scripts/derive_oracles.py (mpmath, 30 digits,
# no package imports) at P = 2.5 mW, n = 2.4e12 cm^-3, B = 5.6 uT.
ORACLE = {
    "responsivity": 0.559036144578313,
    "s_ph": 4.47228915662651e-10,
    "sigma0": 2.39534173942e-12,
    "kappa2_85_theory": 0.00036771423227014,
    "kappa2_87_theory": 0.000422235820791751,
    "fwhm_hz": 1594.44,
    "var_theta_85": 2.7338272113954e-13,
    "s_at85": 8.5283062800358e-10,
    "eta85": 1.90692193222783,
    "eta87": 0.626243914520009,
    "od_1.5e12": 0.0477209239709797,
    "od_1.3e13": 0.413581341081824,
    "xi2_db_1.5e12": 2.43386648655257,
    "xi2_db_1.3e13": 1.53400030221516,
}


def test_responsivity_and_shot_noise_oracle():
    det = DetectorSpec()
    assert det.responsivity() == pytest.approx(ORACLE["responsivity"], rel=1e-12)
    assert ph.shot_noise_psd(det, 2.5e-3, 1.0) == pytest.approx(ORACLE["s_ph"], rel=1e-12)


def test_cross_section_oracle():
    assert ph.resonant_cross_section(2.4) == pytest.approx(ORACLE["sigma0"], rel=1e-11)
    # Quoted to two figures as 2.4e-12 cm^2.
    assert float(f"{ph.resonant_cross_section(2.4):.1e}") == 2.4e-12


def test_kappa_squared_oracle():
    probe = ProbeSpec()
    assert ph.kappa_squared(RB85, probe, 2.4) == pytest.approx(ORACLE["kappa2_85_theory"], rel=1e-12)
    assert ph.kappa_squared(RB87, probe, 2.4) == pytest.approx(ORACLE["kappa2_87_theory"], rel=1e-12)


def test_effective_kappa_prefers_pinned_value():
    probe, cell = ProbeSpec(), CellSpec()
    assert ph.effective_kappa_squared(RB85, probe, cell) == 5.0e-4
    assert ph.effective_kappa_squared(RB87, probe, cell) == ph.kappa_squared(RB87, probe, 2.4)


def test_reference_point_oracles(default_scenario):
    sc = default_scenario
    lines = {line.mass_number: line for line in sc.lines()}
    assert lines[85].fwhm_hz == pytest.approx(ORACLE["fwhm_hz"], rel=1e-12)
    assert lines[85].var_theta == pytest.approx(ORACLE["var_theta_85"], rel=1e-11)
    assert lines[85].s_at == pytest.approx(ORACLE["s_at85"], rel=1e-11)
    eta = sc.eta()
    assert eta[85] == pytest.approx(ORACLE["eta85"], rel=1e-11)
    assert eta[87] == pytest.approx(ORACLE["eta87"], rel=1e-11)
    assert lines[85].larmor_hz == pytest.approx(26135.2)
    assert lines[87].larmor_hz == pytest.approx(39177.6)


def test_optical_depth_and_squeezing_oracle():
    probe = ProbeSpec(squeezed=True)
    for n, key in ((1.5e12, "1.5e12"), (1.3e13, "1.3e13")):
        od = ph.optical_depth(CellSpec(density_cm3=n), probe)
        assert od == pytest.approx(ORACLE[f"od_{key}"], rel=1e-8)
        db = -ph.to_db(ph.squeezing_after_cell(0.55, od))
        assert db == pytest.approx(ORACLE[f"xi2_db_{key}"], rel=1e-8)


def test_linewidth_reference_values():
    assert ph.linewidth_fwhm(0.0, 0.0) == pytest.approx(1002.0, rel=1e-12)
    br = ph.DEFAULT_BROADENING
    assert br.alpha * 1.3e13 / ph.TWO_PI == pytest.approx(751.4, rel=1e-12)


def test_broadening_hz_round_trip():
    br = BroadeningParams.from_hz(501.0, 57.8, 63.0)
    hz = br.to_hz()
    assert hz["gamma0_hz"] == pytest.approx(501.0)
    assert hz["alpha_hz_per_1e12_cm3"] == pytest.approx(57.8)
    assert hz["beta_hz_per_mw"] == pytest.approx(63.0)


@pytest.mark.parametrize("call", [
    lambda: ph.shot_noise_psd(DetectorSpec(), -1e-3, 1.0),
    lambda: ph.shot_noise_psd(DetectorSpec(), 1e-3, 0.0),
    lambda: ph.squeezing_after_cell(0.0, 0.1),
    lambda: ph.squeezing_after_cell(0.5, -0.1),
    lambda: ph.resonant_cross_section(0.0),
    lambda: ph.relaxation_rate(-1.0, 1e-3),
    lambda: ph.spin_noise_amplitude(DetectorSpec(), 1e-3, 1e-13, 0.0),
    lambda: ph.snr_eta(ProbeSpec(), DetectorSpec(), CellSpec(), RB85, 5e-4, 0.0, 1.0),
    lambda: ph.faraday_variance(CellSpec(), RB85, -1.0),
    lambda: ProbeSpec(input_squeezing=1.5),
    lambda: DetectorSpec(quantum_efficiency=0.0),
    lambda: CellSpec(length_cm=0.0),
    lambda: ph.IsotopeSpec(85, 2.0, 0.7, (1.0, 1.0), 4667.0),
    lambda: ph.IsotopeSpec(85, 2.5, 1.2, (1.0, 1.0), 4667.0),
])
def test_domain_errors(call):
    with pytest.raises(ValueError):
        call()


def test_coherent_probe_ignores_input_squeezing():
    assert ProbeSpec(input_squeezing=0.3).xi0_sq == 1.0
    assert ProbeSpec(input_squeezing=0.3, squeezed=True).xi0_sq == 0.3
    assert Scenario().xi_sq() == 1.0


def test_model_psd_shape():
    p = FitParams(1.0, 2.0, 100.0, 10.0, 0.5, 300.0, 20.0)
    assert ph.model_psd(100.0, p) == pytest.approx(1.0 + 2.0 + 0.5 * 100.0 / (200.0**2 + 100.0))
    assert ph.model_psd(np.array([100.0]), p).shape == (1,)


def test_constants_csv_lists_defaults():
    text = ph.constants_csv()
    assert text.startswith("name,value,unit,provenance")
    assert "effective_area,0.0544,cm^2" in text
    assert "sigma0," in text


# -- invariants ----------------------------------------------------------------

positive = st.floats(1e-3, 1e3)
scenario_st = st.builds(
    lambda p, n, fwhm, det, area, length, xi0, sq, g, q: Scenario(
        probe=ProbeSpec(power_w=p * 1e-3, detuning_ghz=det, input_squeezing=xi0, squeezed=sq),
        cell=CellSpec(density_cm3=n * 1e12, optical_fwhm_ghz=fwhm, effective_area_cm2=area,
                      length_cm=length),
        det=DetectorSpec(gain_v_per_a=g, quantum_efficiency=q)),
    st.floats(0.1, 10.0), st.floats(0.1, 100.0), st.floats(0.5, 5.0), st.floats(5.0, 50.0),
    st.floats(0.01, 0.5), st.floats(0.5, 10.0), st.floats(0.1, 1.0), st.booleans(),
    st.floats(1e4, 1e8), st.floats(0.1, 1.0))


@given(scenario_st)
def test_snr_identity(sc):
    eta = sc.eta()
    floor = sc.shot_noise()
    for line in sc.lines():
        assert eta[line.mass_number] == pytest.approx(line.s_at / floor, rel=1e-9)


@given(scenario_st, st.floats(0.05, 1.0))
def test_eta_scales_inversely_with_squeezing(sc, xi_sq):
    iso, k2 = RB85, 5e-4
    rate = ph.relaxation_rate(sc.cell.density_cm3, sc.probe.power_w)
    base = ph.snr_eta(sc.probe, sc.det, sc.cell, iso, k2, rate, 1.0)
    assert ph.snr_eta(sc.probe, sc.det, sc.cell, iso, k2, rate, xi_sq) == pytest.approx(
        base / xi_sq, rel=1e-12)


@given(st.floats(0.01, 1.0), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
def test_squeezing_degrades_monotonically(xi0, od1, od2):
    lo, hi = sorted((od1, od2))
    a, b = ph.squeezing_after_cell(xi0, lo), ph.squeezing_after_cell(xi0, hi)
    assert xi0 - 1e-15 <= a <= b + 1e-15 <= 1.0 + 2e-15
    assert ph.squeezing_after_cell(xi0, 0.0) == pytest.approx(xi0)


@given(st.floats(-100, 100), st.floats(0.01, 10.0))
def test_spectral_factor_odd_and_bounded(delta, fwhm):
    d = ph.spectral_factor(delta, fwhm)
    assert abs(d) <= 0.5 + 1e-12
    assert ph.spectral_factor(-delta, fwhm) == pytest.approx(-d, abs=1e-15)


@given(st.floats(0.01, 10.0))
def test_spectral_factor_extremum_at_half_width(fwhm):
    assert ph.spectral_factor(fwhm / 2.0, fwhm) == pytest.approx(0.5)


@given(st.floats(0, 1e14), st.floats(0, 0.01), st.floats(0, 1e14), st.floats(0, 0.01))
def test_linewidth_is_affine(n1, p1, n2, p2):
    f = ph.linewidth_fwhm
    mid = f((n1 + n2) / 2, (p1 + p2) / 2)
    assert mid == pytest.approx((f(n1, p1) + f(n2, p2)) / 2, rel=1e-12)


@given(scenario_st)
def test_peak_height_and_half_width(sc):
    p = sc.expected_params()
    at_peak = ph.model_psd(p.nu85, dc.replace(p, s_at87=0.0))
    assert at_peak == pytest.approx(p.s_ph + p.s_at85, rel=1e-12)
    half = ph.model_psd(p.nu85 + p.fwhm85 / 2, dc.replace(p, s_at87=0.0))
    assert half == pytest.approx(p.s_ph + p.s_at85 / 2, rel=1e-12)


@given(scenario_st)
def test_variance_ratio_tracks_abundance_and_coupling(sc):
    lines = {line.mass_number: line for line in sc.lines()}
    k85 = ph.effective_kappa_squared(RB85, sc.probe, sc.cell)
    k87 = ph.effective_kappa_squared(RB87, sc.probe, sc.cell)
    ratio = lines[85].var_theta / lines[87].var_theta
    assert ratio == pytest.approx(0.72 * k85 / (0.28 * k87), rel=1e-12)


@given(st.floats(0.0, 1e15), st.floats(0.0, 1e15))
def test_optical_depth_monotone_in_density(n1, n2):
    lo, hi = sorted((n1, n2))
    probe = ProbeSpec()
    assert ph.optical_depth(CellSpec(density_cm3=lo), probe) <= \
        ph.optical_depth(CellSpec(density_cm3=hi), probe)


@given(st.floats(-50, 50))
def test_db_round_trip(db):
    assert float(ph.to_db(ph.from_db(db))) == pytest.approx(db, abs=1e-10)
