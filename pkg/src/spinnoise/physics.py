"""Closed-form models for Faraday-rotation spin noise with coherent or squeezed probes.

Unit conventions used throughout the package:

* optical frequencies and detunings in GHz, magnetic-line frequencies in Hz
* densities in cm^-3, lengths in cm, areas in cm^2
* probe power in W, fields in microtesla
* relaxation rates in s^-1 (amplitude rate ``1/T2``); the spin-noise FWHM is
  ``fwhm = rate / pi``, i.e. twice the rate quoted "over 2 pi".
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields

import numpy as np

TWO_PI = 2.0 * math.pi

# Global multiplier of the Lorentzian-wing absorption model, fitted by
# ``calibrate.calibrate_od_scale`` to post-cell squeezing of 2.6 dB at
# 1.5e12 cm^-3 and 1.5 dB at 1.3e13 cm^-3 with xi0^2 = 0.55.
OD_SCALE = 1.03214058


@dataclass(frozen=True)
class PhysicalConstants:
    electron_radius_cm: float = 2.82e-13
    photon_energy_j: float = 2.49e-19
    electron_charge_c: float = 1.6e-19
    oscillator_strength: float = 0.34
    speed_of_light_cm_s: float = 2.99792458e10

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass(frozen=True)
class IsotopeSpec:
    """One rubidium isotope.

    ``hyperfine_line_offsets_ghz`` holds the optical line position seen by the
    ``f = I - 1/2`` and ``f = I + 1/2`` ground levels, relative to the frequency
    the probe detuning is quoted against. ``kappa_squared`` pins the coupling to
    an empirical value; ``None`` means evaluate :func:`kappa_squared`.
    """

    mass_number: int
    nuclear_spin: float
    abundance: float
    hyperfine_line_offsets_ghz: tuple[float, float]
    gyromagnetic_ratio_hz_per_ut: float
    kappa_squared: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")
        if (2 * self.nuclear_spin) % 2 != 1:
            raise ValueError("nuclear spin must be half-integer")
        if self.gyromagnetic_ratio_hz_per_ut <= 0:
            raise ValueError("gyromagnetic ratio must be positive")
        if len(self.hyperfine_line_offsets_ghz) != 2:
            raise ValueError("need one line offset per hyperfine level")

    @property
    def f_values(self) -> tuple[float, float]:
        return (self.nuclear_spin - 0.5, self.nuclear_spin + 0.5)

    def larmor_hz(self, field: "FieldSpec") -> float:
        return self.gyromagnetic_ratio_hz_per_ut * field.bx_ut


# Both hyperfine components are evaluated at the midpoint of the ground-state
# doublet; the probe detuning is referenced to the lower-frequency component.
RB85 = IsotopeSpec(
    mass_number=85,
    nuclear_spin=2.5,
    abundance=0.72,
    hyperfine_line_offsets_ghz=(1.518, 1.518),
    gyromagnetic_ratio_hz_per_ut=4667.0,
    kappa_squared=5.0e-4,
)
RB87 = IsotopeSpec(
    mass_number=87,
    nuclear_spin=1.5,
    abundance=0.28,
    hyperfine_line_offsets_ghz=(2.2, 2.2),
    gyromagnetic_ratio_hz_per_ut=6996.0,
)
NATURAL_RB = (RB85, RB87)


@dataclass(frozen=True)
class CellSpec:
    density_cm3: float = 2.4e12
    length_cm: float = 3.0
    optical_fwhm_ghz: float = 2.4
    effective_area_cm2: float = 0.0544
    od_scale: float = OD_SCALE

    def __post_init__(self):
        if self.length_cm <= 0:
            raise ValueError("cell length must be positive")
        if self.density_cm3 < 0:
            raise ValueError("density must be non-negative")
        if self.optical_fwhm_ghz <= 0:
            raise ValueError("optical linewidth must be positive")
        if self.effective_area_cm2 <= 0:
            raise ValueError("effective area must be positive")
        if self.od_scale < 0:
            raise ValueError("od_scale must be non-negative")

    def isotope_density(self, iso: IsotopeSpec) -> float:
        return self.density_cm3 * iso.abundance


@dataclass(frozen=True)
class ProbeSpec:
    power_w: float = 2.5e-3
    detuning_ghz: float = 20.0
    input_squeezing: float = 0.55
    squeezed: bool = False

    def __post_init__(self):
        if self.power_w < 0:
            raise ValueError("probe power must be non-negative")
        if not 0.0 < self.input_squeezing <= 1.0:
            raise ValueError("input squeezing must lie in (0, 1]")

    @property
    def xi0_sq(self) -> float:
        """Squeezing factor before the cell; exactly 1 for a coherent probe."""
        return self.input_squeezing if self.squeezed else 1.0


@dataclass(frozen=True)
class DetectorSpec:
    gain_v_per_a: float = 1.0e6
    quantum_efficiency: float = 0.87

    def __post_init__(self):
        if self.gain_v_per_a <= 0:
            raise ValueError("gain must be positive")
        if not 0.0 < self.quantum_efficiency <= 1.0:
            raise ValueError("quantum efficiency must lie in (0, 1]")

    def responsivity(self, consts: PhysicalConstants = PhysicalConstants()) -> float:
        """Responsivity in A/W."""
        return self.quantum_efficiency * consts.electron_charge_c / consts.photon_energy_j


@dataclass(frozen=True)
class FieldSpec:
    bx_ut: float = 5.6

    def __post_init__(self):
        if self.bx_ut < 0:
            raise ValueError("field must be non-negative")


@dataclass(frozen=True)
class BroadeningParams:
    """Relaxation model ``1/T2 = gamma0 + alpha n + beta P`` with rates in s^-1."""

    gamma0: float
    alpha: float
    beta: float

    def __post_init__(self):
        if min(self.gamma0, self.alpha, self.beta) < 0:
            raise ValueError("broadening coefficients must be non-negative")

    @classmethod
    def from_hz(cls, gamma0_hz=501.0, alpha_hz_per_1e12_cm3=57.8, beta_hz_per_mw=63.0):
        """Build from the "over 2 pi" values quoted in Hz."""
        return cls(
            gamma0=TWO_PI * gamma0_hz,
            alpha=TWO_PI * alpha_hz_per_1e12_cm3 / 1e12,
            beta=TWO_PI * beta_hz_per_mw / 1e-3,
        )

    def to_hz(self) -> dict[str, float]:
        return {
            "gamma0_hz": self.gamma0 / TWO_PI,
            "alpha_hz_per_1e12_cm3": self.alpha * 1e12 / TWO_PI,
            "beta_hz_per_mw": self.beta * 1e-3 / TWO_PI,
        }


DEFAULT_BROADENING = BroadeningParams.from_hz()


@dataclass(frozen=True)
class FitParams:
    """Floor plus two Lorentzians, labelled by isotope (85 lower in frequency)."""

    s_ph: float
    s_at85: float
    nu85: float
    fwhm85: float
    s_at87: float
    nu87: float
    fwhm87: float

    NAMES = ("s_ph", "s_at85", "nu85", "fwhm85", "s_at87", "nu87", "fwhm87")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "FitParams":
        return cls(*(float(v) for v in values))

    def lines(self):
        return ((self.s_at85, self.nu85, self.fwhm85), (self.s_at87, self.nu87, self.fwhm87))


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def shot_noise_psd(det: DetectorSpec, power_w: float, xi_sq: float,
                   consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Photon shot-noise floor in V^2/Hz."""
    _require(power_w >= 0, "power must be non-negative")
    _require(xi_sq > 0, "squeezing factor must be positive")
    resp = det.responsivity(consts)
    return 2.0 * det.gain_v_per_a**2 * consts.electron_charge_c * (resp * power_w) * xi_sq


def squeezing_after_cell(xi0_sq: float, od: float) -> float:
    """Squeezing factor left after absorption with optical depth ``od``."""
    _require(0 < xi0_sq <= 1, "input squeezing must lie in (0, 1]")
    _require(od >= 0, "optical depth must be non-negative")
    return 1.0 - (1.0 - xi0_sq) * math.exp(-od)


def resonant_cross_section(optical_fwhm_ghz: float,
                           consts: PhysicalConstants = PhysicalConstants()) -> float:
    _require(optical_fwhm_ghz > 0, "optical linewidth must be positive")
    half_width_hz = optical_fwhm_ghz * 1e9 / 2.0
    return (consts.speed_of_light_cm_s * consts.electron_radius_cm
            * consts.oscillator_strength / half_width_hz)


def spectral_factor(detuning_ghz, optical_fwhm_ghz: float):
    """Dispersive line factor; odd in detuning with extrema of +-1/2 at +-fwhm/2."""
    h = optical_fwhm_ghz / 2.0
    d = np.asarray(detuning_ghz, dtype=float)
    out = d * h / (d * d + h * h)
    return float(out) if out.ndim == 0 else out


def kappa_squared(iso: IsotopeSpec, probe: ProbeSpec, optical_fwhm_ghz: float) -> float:
    two_i1 = 2.0 * iso.nuclear_spin + 1.0
    total = 0.0
    for f, offset in zip(iso.f_values, iso.hyperfine_line_offsets_ghz):
        d = spectral_factor(probe.detuning_ghz - offset, optical_fwhm_ghz)
        total += d * d * f * (f + 1.0) * (2.0 * f + 1.0) / 6.0
    return total / two_i1**3


def effective_kappa_squared(iso: IsotopeSpec, probe: ProbeSpec, cell: CellSpec) -> float:
    """The pinned empirical coupling if the isotope carries one, else theory."""
    if iso.kappa_squared is not None:
        return iso.kappa_squared
    return kappa_squared(iso, probe, cell.optical_fwhm_ghz)


def optical_depth(cell: CellSpec, probe: ProbeSpec, isotopes=NATURAL_RB,
                  consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Off-resonant absorption from the Lorentzian wings of every hyperfine line.

    Each ground level holds a fraction ``(2f+1) / (2(2I+1))`` of its isotope.
    The sum is multiplied by ``cell.od_scale``.
    """
    sigma0 = resonant_cross_section(cell.optical_fwhm_ghz, consts)
    h = cell.optical_fwhm_ghz / 2.0
    total = 0.0
    for iso in isotopes:
        n_iso = cell.isotope_density(iso)
        two_i1 = 2.0 * iso.nuclear_spin + 1.0
        for f, offset in zip(iso.f_values, iso.hyperfine_line_offsets_ghz):
            delta = probe.detuning_ghz - offset
            sigma = sigma0 * h * h / (delta * delta + h * h)
            total += n_iso * (2.0 * f + 1.0) / (2.0 * two_i1) * sigma
    return cell.od_scale * total * cell.length_cm


def faraday_variance(cell: CellSpec, iso: IsotopeSpec, kappa_sq: float,
                     consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Variance of the Faraday angle (rad^2) from one isotope."""
    _require(kappa_sq >= 0, "kappa^2 must be non-negative")
    sigma0 = resonant_cross_section(cell.optical_fwhm_ghz, consts)
    a_eff = cell.effective_area_cm2
    n_atoms = cell.isotope_density(iso) * a_eff * cell.length_cm
    return n_atoms * (sigma0 / a_eff) ** 2 * kappa_sq


def relaxation_rate(density_cm3: float, power_w: float,
                    br: BroadeningParams = DEFAULT_BROADENING) -> float:
    """``1/T2`` in s^-1."""
    _require(density_cm3 >= 0 and power_w >= 0, "density and power must be non-negative")
    return br.gamma0 + br.alpha * density_cm3 + br.beta * power_w


def linewidth_fwhm(density_cm3: float, power_w: float,
                   br: BroadeningParams = DEFAULT_BROADENING) -> float:
    """Spin-noise FWHM in Hz, ``1/(pi T2)``."""
    return relaxation_rate(density_cm3, power_w, br) / math.pi


def snr_eta(probe: ProbeSpec, det: DetectorSpec, cell: CellSpec, iso: IsotopeSpec,
            kappa_sq: float, rate: float, xi_sq: float,
            consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Peak spin-noise PSD over the shot-noise PSD for one isotope.

    ``rate`` is ``1/T2`` in s^-1 and ``xi_sq`` the squeezing factor at the
    detector.
    """
    _require(rate > 0, "relaxation rate must be positive")
    _require(probe.power_w >= 0, "power must be non-negative")
    _require(xi_sq > 0, "squeezing factor must be positive")
    sigma0 = resonant_cross_section(cell.optical_fwhm_ghz, consts)
    a_eff = cell.effective_area_cm2
    photon_flux = probe.power_w / consts.photon_energy_j
    n_i = cell.isotope_density(iso)
    return (photon_flux * (4.0 * det.quantum_efficiency / xi_sq) * (sigma0 / a_eff) ** 2
            * kappa_sq * n_i * cell.length_cm * a_eff / rate)


def spin_noise_amplitude(det: DetectorSpec, power_w: float, var_theta: float, fwhm_hz: float,
                         consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Lorentzian peak height (V^2/Hz) carrying a total power of 4 G^2 R^2 P^2 var."""
    _require(fwhm_hz > 0, "linewidth must be positive")
    resp = det.responsivity(consts)
    total = 4.0 * det.gain_v_per_a**2 * resp**2 * power_w**2 * var_theta
    return total / (math.pi * fwhm_hz / 2.0)


def model_psd(freq_hz, params: FitParams):
    nu = np.asarray(freq_hz, dtype=float)
    out = np.full_like(nu, params.s_ph)
    for s_at, nu_l, fwhm in params.lines():
        h2 = (fwhm / 2.0) ** 2
        out = out + s_at * h2 / ((nu - nu_l) ** 2 + h2)
    return float(out) if out.ndim == 0 else out


def to_db(ratio):
    return 10.0 * np.log10(ratio)


def from_db(db):
    return 10.0 ** (np.asarray(db) / 10.0)


@dataclass(frozen=True)
class ConstantRow:
    name: str
    value: float
    unit: str
    provenance: str = field(default="")


def constants_table(consts: PhysicalConstants = PhysicalConstants(),
                    det: DetectorSpec = DetectorSpec(), cell: CellSpec = CellSpec(),
                    br: BroadeningParams = DEFAULT_BROADENING,
                    isotopes=NATURAL_RB, probe: ProbeSpec = ProbeSpec()) -> list[ConstantRow]:
    """Every default used in predictions, including derived quantities."""
    hz = br.to_hz()
    rows = [
        ConstantRow("electron_radius", consts.electron_radius_cm, "cm", "classical electron radius"),
        ConstantRow("photon_energy", consts.photon_energy_j, "J", "795 nm photon"),
        ConstantRow("electron_charge", consts.electron_charge_c, "C", ""),
        ConstantRow("oscillator_strength", consts.oscillator_strength, "", "Rb D1"),
        ConstantRow("speed_of_light", consts.speed_of_light_cm_s, "cm/s", "CODATA"),
        ConstantRow("gain", det.gain_v_per_a, "V/A", "transimpedance gain"),
        ConstantRow("quantum_efficiency", det.quantum_efficiency, "", "measured"),
        ConstantRow("responsivity", det.responsivity(consts), "A/W", "derived Q q / E_ph"),
        ConstantRow("gamma0_over_2pi", hz["gamma0_hz"], "Hz", "measured"),
        ConstantRow("alpha_over_2pi", hz["alpha_hz_per_1e12_cm3"], "Hz/(1e12 cm^-3)", "measured"),
        ConstantRow("beta_over_2pi", hz["beta_hz_per_mw"], "Hz/mW", "measured"),
        ConstantRow("sigma0", resonant_cross_section(cell.optical_fwhm_ghz, consts), "cm^2",
                    "derived; 2.4e-12 to two figures"),
        ConstantRow("effective_area", cell.effective_area_cm2, "cm^2", "measured"),
        ConstantRow("optical_fwhm", cell.optical_fwhm_ghz, "GHz", "pressure broadened, 100 Torr N2"),
        ConstantRow("cell_length", cell.length_cm, "cm", ""),
        ConstantRow("od_scale", cell.od_scale, "", "calibrated absorption multiplier"),
        ConstantRow("input_squeezing", probe.input_squeezing, "", "xi0^2 at room temperature"),
        ConstantRow("probe_detuning", probe.detuning_ghz, "GHz", "blue of the D1 line"),
    ]
    for iso in isotopes:
        tag = f"rb{iso.mass_number}"
        rows.append(ConstantRow(f"{tag}_abundance", iso.abundance, "", "natural abundance"))
        rows.append(ConstantRow(f"{tag}_gyromagnetic_ratio", iso.gyromagnetic_ratio_hz_per_ut,
                                "Hz/uT", "g_F mu_B / h"))
        rows.append(ConstantRow(f"{tag}_kappa_squared_theory",
                                kappa_squared(iso, probe, cell.optical_fwhm_ghz), "",
                                "hyperfine sum at the probe detuning"))
        if iso.kappa_squared is not None:
            rows.append(ConstantRow(f"{tag}_kappa_squared", iso.kappa_squared, "", "measured"))
    return rows


def constants_csv(rows=None) -> str:
    rows = constants_table() if rows is None else rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value", "unit", "provenance"])
    for r in rows:
        w.writerow([r.name, repr(r.value), r.unit, r.provenance])
    return buf.getvalue()
