"""Synthetic polarimeter traces: squeezing-scaled white shot noise plus one
precessing Ornstein-Uhlenbeck spin component per isotope."""
from __future__ import annotations

import hashlib
import json
import math
import dataclasses as dc
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import lfilter

from . import physics as ph
from .physics import (
    DEFAULT_BROADENING,
    NATURAL_RB,
    BroadeningParams,
    CellSpec,
    DetectorSpec,
    FieldSpec,
    FitParams,
    IsotopeSpec,
    PhysicalConstants,
    ProbeSpec,
)

DEFAULT_SAMPLE_RATE = 200e3
DEFAULT_DURATION = 0.5
BURN_IN_T2 = 5.0

# Spawn keys for independent RNG streams derived from one 64-bit seed.
_SHOT_STREAM = 0
_CONTAMINATION_STREAM = 1000


@dataclass(frozen=True)
class SpinLine:
    mass_number: int
    larmor_hz: float
    fwhm_hz: float
    rate: float
    kappa_sq: float
    var_theta: float
    s_at: float


@dataclass(frozen=True)
class Scenario:
    probe: ProbeSpec = dc.field(default_factory=ProbeSpec)
    cell: CellSpec = dc.field(default_factory=CellSpec)
    det: DetectorSpec = dc.field(default_factory=DetectorSpec)
    field: FieldSpec = dc.field(default_factory=FieldSpec)
    broadening: BroadeningParams = DEFAULT_BROADENING
    isotopes: tuple[IsotopeSpec, ...] = NATURAL_RB
    consts: PhysicalConstants = dc.field(default_factory=PhysicalConstants)

    def optical_depth(self) -> float:
        return ph.optical_depth(self.cell, self.probe, self.isotopes, self.consts)

    def xi_sq(self) -> float:
        """Squeezing factor at the detector, after absorption in the cell."""
        if not self.probe.squeezed:
            return 1.0
        return ph.squeezing_after_cell(self.probe.xi0_sq, self.optical_depth())

    def shot_noise(self) -> float:
        return ph.shot_noise_psd(self.det, self.probe.power_w, self.xi_sq(), self.consts)

    def lines(self) -> list[SpinLine]:
        rate = ph.relaxation_rate(self.cell.density_cm3, self.probe.power_w, self.broadening)
        fwhm = rate / math.pi
        out = []
        for iso in self.isotopes:
            k2 = ph.effective_kappa_squared(iso, self.probe, self.cell)
            var = ph.faraday_variance(self.cell, iso, k2, self.consts)
            s_at = ph.spin_noise_amplitude(self.det, self.probe.power_w, var, fwhm, self.consts)
            out.append(SpinLine(iso.mass_number, iso.larmor_hz(self.field), fwhm, rate,
                                k2, var, s_at))
        return out

    def eta(self) -> dict[int, float]:
        """Theoretical SNR per isotope from the closed-form expression."""
        rate = ph.relaxation_rate(self.cell.density_cm3, self.probe.power_w, self.broadening)
        xi_sq = self.xi_sq()
        return {
            iso.mass_number: ph.snr_eta(self.probe, self.det, self.cell, iso,
                                        ph.effective_kappa_squared(iso, self.probe, self.cell),
                                        rate, xi_sq, self.consts)
            for iso in self.isotopes
        }

    def expected_params(self) -> FitParams:
        by_mass = {line.mass_number: line for line in self.lines()}
        l85, l87 = by_mass[85], by_mass[87]
        return FitParams(self.shot_noise(), l85.s_at, l85.larmor_hz, l85.fwhm_hz,
                         l87.s_at, l87.larmor_hz, l87.fwhm_hz)

    def to_dict(self) -> dict:
        return asdict(self)

    def scenario_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class TimeTrace:
    samples: np.ndarray
    sample_rate: float
    seed: int
    scenario_id: str = ""
    floor_psd: float | None = None

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def ou_step(z: complex, larmor_hz: float, rate: float, var_st: float, dt: float,
            noise: complex) -> complex:
    """Exact one-step update of a rotating complex OU amplitude.

    ``rate`` is the amplitude decay rate 1/T2, so the one-sided spectrum of
    ``Re z`` is a Lorentzian of FWHM ``rate / pi``. ``var_st`` is the
    stationary ``E|z|^2``; ``noise`` is a unit complex normal draw
    (``E|noise|^2 = 1``). Stationary ``var(Re z)`` is ``var_st / 2``.
    """
    a = np.exp((2j * math.pi * larmor_hz - rate) * dt)
    return z * a + noise * math.sqrt(var_st * -math.expm1(-2.0 * rate * dt))


def _complex_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    g = rng.standard_normal((2, n))
    return (g[0] + 1j * g[1]) / math.sqrt(2.0)


def ou_path(n: int, larmor_hz: float, rate: float, var_st: float, dt: float,
            rng: np.random.Generator, burn_in: int = 0) -> np.ndarray:
    """``n`` stationary samples of the recursion in :func:`ou_step`.

    Starts from a draw of the stationary law and discards ``burn_in`` steps.
    """
    z0 = math.sqrt(var_st) * _complex_normal(rng, 1)[0]
    noise = _complex_normal(rng, n + burn_in)
    a = np.exp((2j * math.pi * larmor_hz - rate) * dt)
    b = math.sqrt(var_st * -math.expm1(-2.0 * rate * dt))
    z, _ = lfilter([b], [1.0, -a], noise, zi=np.array([a * z0]))
    return z[burn_in:]


def synth_trace(sc: Scenario, duration: float = DEFAULT_DURATION,
                sample_rate: float = DEFAULT_SAMPLE_RATE, seed: int = 0) -> TimeTrace:
    if duration <= 0:
        raise ValueError("duration must be positive")
    nyquist = sample_rate / 2.0
    lines = sc.lines()
    for line in lines:
        if line.larmor_hz >= nyquist:
            raise ValueError(f"Larmor frequency of Rb{line.mass_number} ({line.larmor_hz:.0f} Hz) "
                             f"is not below Nyquist ({nyquist:.0f} Hz)")
    n = int(round(duration * sample_rate))
    dt = 1.0 / sample_rate
    streams = np.random.SeedSequence(seed).spawn(1 + len(lines))
    s_ph = sc.shot_noise()
    shot = np.random.default_rng(streams[_SHOT_STREAM])
    volts = shot.normal(0.0, math.sqrt(s_ph * sample_rate / 2.0), n)

    gain = 2.0 * sc.det.gain_v_per_a * sc.det.responsivity(sc.consts) * sc.probe.power_w
    for line, ss in zip(lines, streams[1:]):
        if line.var_theta == 0.0 or gain == 0.0:
            continue
        burn = int(math.ceil(BURN_IN_T2 / (line.rate * dt)))
        z = ou_path(n, line.larmor_hz, line.rate, 2.0 * line.var_theta, dt,
                    np.random.default_rng(ss), burn_in=burn)
        volts += gain * z.real
    return TimeTrace(volts, float(sample_rate), int(seed), sc.scenario_hash(), s_ph)


def expected_variance(sc: Scenario, sample_rate: float = DEFAULT_SAMPLE_RATE) -> float:
    """Variance of a synthesized trace: white floor plus total spin-noise power."""
    resp = sc.det.responsivity(sc.consts)
    spin = sum(line.var_theta for line in sc.lines())
    return (sc.shot_noise() * sample_rate / 2.0
            + 4.0 * sc.det.gain_v_per_a**2 * resp**2 * sc.probe.power_w**2 * spin)


def qc_contamination(trace: TimeTrace, inflation: float,
                     floor_psd: float | None = None) -> TimeTrace:
    """Copy of ``trace`` whose white floor is multiplied by ``inflation``.

    Emulates an unstable quantum-noise lock by adding independent white noise
    of PSD ``(inflation - 1) * floor``.
    """
    if inflation < 1.0:
        raise ValueError("inflation must be >= 1")
    floor = trace.floor_psd if floor_psd is None else floor_psd
    if floor is None:
        raise ValueError("trace carries no floor PSD; pass floor_psd")
    ss = np.random.SeedSequence(trace.seed, spawn_key=(_CONTAMINATION_STREAM,))
    rng = np.random.default_rng(ss)
    extra = rng.normal(0.0, math.sqrt((inflation - 1.0) * floor * trace.sample_rate / 2.0),
                       len(trace.samples))
    return TimeTrace(trace.samples + extra, trace.sample_rate, trace.seed,
                     trace.scenario_id, floor * inflation)
