"""Parameter extraction fits (detector efficiency, squeezing, coupling,
relaxation model, absorption scale) and trace quality control."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import physics as ph
from .physics import CellSpec, DetectorSpec, PhysicalConstants, ProbeSpec
from .spectral import band_power

QC_WINDOW = (80e3, 90e3)
QC_THRESHOLD = 1.03


class CalibrationError(ValueError):
    pass


@dataclass
class QcReport:
    chi_values: np.ndarray
    chi_bar: float
    threshold_factor: float
    kept_indices: list[int]
    rejected_indices: list[int]
    window: tuple[float, float] = QC_WINDOW

    @property
    def rejected_fraction(self) -> float:
        return len(self.rejected_indices) / len(self.chi_values)


def qc_select(spectra, window=QC_WINDOW, threshold: float = QC_THRESHOLD,
              chi_bar: float | None = None) -> QcReport:
    """Reject spectra whose power in ``window`` exceeds ``threshold`` times the mean.

    The mean runs over every spectrum, outliers included, unless a frozen
    ``chi_bar`` from an earlier pass is given.
    """
    spectra = list(spectra)
    if chi_bar is None and len(spectra) < 2:
        raise CalibrationError("quality control needs at least two spectra")
    chi = np.array([band_power(s, *window) for s in spectra])
    bar = float(chi.mean()) if chi_bar is None else float(chi_bar)
    bad = chi > threshold * bar
    return QcReport(chi, bar, threshold, [int(i) for i in np.flatnonzero(~bad)],
                    [int(i) for i in np.flatnonzero(bad)], tuple(window))


@dataclass
class CalibrationFit:
    names: list[str]
    values: list[float]
    errors: list[float]
    goodness: dict = field(default_factory=dict)
    units: list[str] = field(default_factory=list)
    reference: list = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        return self.values[self.names.index(name)]

    def error(self, name: str) -> float:
        return self.errors[self.names.index(name)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "value", "std_error", "unit", "reference_value"])
        for k, name in enumerate(self.names):
            unit = self.units[k] if k < len(self.units) else ""
            ref = self.reference[k] if k < len(self.reference) else ""
            w.writerow([name, repr(self.values[k]), repr(self.errors[k]), unit,
                        "" if ref is None else ref])
        return buf.getvalue()

    def report(self, title: str = "") -> str:
        lines = [title] if title else []
        for k, name in enumerate(self.names):
            unit = self.units[k] if k < len(self.units) else ""
            ref = self.reference[k] if k < len(self.reference) else None
            tail = f"   (reference {ref:.4g})" if ref is not None else ""
            lines.append(f"  {name:<24s} {self.values[k]:.6g} +/- {self.errors[k]:.2g} {unit}{tail}")
        for key, val in self.goodness.items():
            lines.append(f"  {key:<24s} {val:.6g}")
        return "\n".join(lines)


def _wls_origin(x, y, w):
    """Weighted slope through the origin with residual-scaled error."""
    sxx = float(np.sum(w * x * x))
    if sxx == 0:
        raise CalibrationError("all abscissae are zero")
    k = float(np.sum(w * x * y)) / sxx
    resid = y - k * x
    dof = max(len(x) - 1, 1)
    s2 = float(np.sum(w * resid**2)) / dof
    return k, math.sqrt(s2 / sxx), s2


def _wls_line(x, y, w):
    """Weighted straight line ``y = a + b x``; returns (a, b, cov, chi2/dof)."""
    a_mat = np.column_stack([np.ones_like(x), x])
    wa = a_mat * w[:, None]
    normal = a_mat.T @ wa
    coef = np.linalg.solve(normal, wa.T @ y)
    resid = y - a_mat @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(np.sum(w * resid**2)) / dof
    cov = np.linalg.inv(normal) * s2
    return float(coef[0]), float(coef[1]), cov, s2


def _unpack(points, width):
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (width, width + 1):
        raise CalibrationError(f"expected rows of {width} values (plus optional sigma)")
    sigma = arr[:, width] if arr.shape[1] == width + 1 else None
    return arr[:, :width], sigma


def fit_shot_noise(points, det: DetectorSpec = DetectorSpec(), solve_for: str = "Q",
                   consts: PhysicalConstants = PhysicalConstants(),
                   free_intercept: bool = False) -> CalibrationFit:
    """Fit the floor-vs-power line ``S = 2 G^2 q (R P) xi^2``.

    ``points`` are ``(P, S_ph)`` rows, optionally with a third column of
    standard errors used as weights. ``solve_for='Q'`` treats the data as
    coherent (``xi^2 = 1``); ``solve_for='xi_sq'`` uses ``det``'s efficiency
    and returns the squeezing factor. ``free_intercept`` adds a diagnostic
    offset (electronic noise leakage); the reported parameter always comes
    from the zero-intercept fit.
    """
    xy, sigma = _unpack(points, 2)
    if len(xy) < 3:
        raise CalibrationError("need at least three power points")
    p, s = xy[:, 0], xy[:, 1]
    w = np.ones_like(p) if sigma is None else 1.0 / sigma**2
    slope, slope_err, s2 = _wls_origin(p, s, w)
    if slope <= 0:
        raise CalibrationError("fitted slope is not positive")
    g2q = 2.0 * det.gain_v_per_a**2 * consts.electron_charge_c
    goodness = {"residual_variance": s2}
    if free_intercept:
        a, _, cov, _ = _wls_line(p, s, w)
        goodness["intercept"] = a
        goodness["intercept_error"] = math.sqrt(cov[0, 0])
    if solve_for == "Q":
        # slope = 2 G^2 q * (Q q / E_ph)
        factor = consts.photon_energy_j / (g2q * consts.electron_charge_c)
        return CalibrationFit(["Q"], [slope * factor], [slope_err * factor], goodness,
                              [""], [0.87])
    if solve_for == "xi_sq":
        factor = 1.0 / (g2q * det.responsivity(consts))
        return CalibrationFit(["xi_sq"], [slope * factor], [slope_err * factor], goodness,
                              [""], [0.55])
    raise ValueError("solve_for must be 'Q' or 'xi_sq'")


def variance_from_fit(s_at: float, fwhm_hz: float, power_w: float,
                      det: DetectorSpec = DetectorSpec(),
                      consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Faraday-angle variance recovered from a fitted peak height and width."""
    resp = det.responsivity(consts)
    return s_at * (math.pi * fwhm_hz / 2.0) / (4.0 * det.gain_v_per_a**2 * resp**2 * power_w**2)


def fit_kappa_squared(points, cell: CellSpec = CellSpec(), abundance: float = 0.72,
                      consts: PhysicalConstants = PhysicalConstants()) -> CalibrationFit:
    """Straight-line fit of angle variance against density.

    The slope over ``(sigma0/A)^2 * abundance * A * L`` is the coupling; the
    offset is reported with its error so a non-zero intercept can be spotted.
    """
    xy, sigma = _unpack(points, 2)
    if len(xy) < 3:
        raise CalibrationError("need at least three density points")
    n, var = xy[:, 0], xy[:, 1]
    if len(np.unique(n)) < 2:
        raise CalibrationError("need at least two distinct densities")
    sigma0 = ph.resonant_cross_section(cell.optical_fwhm_ghz, consts)
    a_eff = cell.effective_area_cm2
    x = (sigma0 / a_eff) ** 2 * abundance * n * a_eff * cell.length_cm
    w = np.ones_like(x) if sigma is None else 1.0 / sigma**2
    offset, k2, cov, s2 = _wls_line(x, var, w)
    offset_err = math.sqrt(cov[0, 0])
    return CalibrationFit(
        ["kappa_squared", "offset"], [k2, offset], [math.sqrt(cov[1, 1]), offset_err],
        {"residual_variance": s2,
         "offset_within_3sigma": float(abs(offset) <= 3.0 * offset_err)},
        ["", "rad^2"], [5.0e-4, 0.0])


def fit_linewidth_model(points) -> CalibrationFit:
    """Plane fit of ``pi * fwhm = gamma0 + alpha n + beta P``.

    ``points`` are ``(n [cm^-3], P [W], fwhm [Hz])`` rows. Results are quoted as
    the "over 2 pi" values in Hz, Hz per 1e12 cm^-3 and Hz per mW.
    """
    xyz, sigma = _unpack(points, 3)
    n, p, fwhm = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    if len(np.unique(n)) < 2:
        raise CalibrationError("rank-deficient grid: need at least two densities")
    if len(np.unique(p)) < 2:
        raise CalibrationError("rank-deficient grid: need at least two powers")
    y = math.pi * fwhm
    # Columns scaled to O(1) before solving.
    a_mat = np.column_stack([np.ones_like(n), n / 1e12, p / 1e-3])
    w = np.ones_like(y) if sigma is None else 1.0 / (math.pi * sigma) ** 2
    wa = a_mat * w[:, None]
    normal = a_mat.T @ wa
    if np.linalg.matrix_rank(normal) < 3:
        raise CalibrationError("rank-deficient grid: densities and powers are collinear")
    coef = np.linalg.solve(normal, wa.T @ y)
    resid = y - a_mat @ coef
    dof = max(len(y) - 3, 1)
    s2 = float(np.sum(w * resid**2)) / dof
    err = np.sqrt(np.diag(np.linalg.inv(normal)) * s2)
    vals = coef / ph.TWO_PI
    errs = err / ph.TWO_PI
    return CalibrationFit(
        ["gamma0_hz", "alpha_hz_per_1e12_cm3", "beta_hz_per_mw"],
        [float(v) for v in vals], [float(e) for e in errs],
        {"residual_variance": s2},
        ["Hz", "Hz/(1e12 cm^-3)", "Hz/mW"], [501.0, 57.8, 63.0])


def calibrate_od_scale(xi0_sq: float = 0.55,
                       anchors=((1.5e12, 2.6), (1.3e13, 1.5)),
                       cell: CellSpec = CellSpec(), probe: ProbeSpec = ProbeSpec(),
                       isotopes=ph.NATURAL_RB,
                       consts: PhysicalConstants = PhysicalConstants()) -> CalibrationFit:
    """Least-squares absorption multiplier matching post-cell squeezing in dB.

    ``anchors`` are ``(density, squeezing_db)`` pairs, squeezing quoted as a
    positive number of dB below shot noise.
    """
    base = CellSpec(cell.density_cm3, cell.length_cm, cell.optical_fwhm_ghz,
                    cell.effective_area_cm2, 1.0)

    def unit_od(n):
        c = CellSpec(n, base.length_cm, base.optical_fwhm_ghz, base.effective_area_cm2, 1.0)
        return ph.optical_depth(c, probe, isotopes, consts)

    ods = [(unit_od(n), db) for n, db in anchors]

    def cost(scale):
        return sum((-float(ph.to_db(ph.squeezing_after_cell(xi0_sq, scale * od))) - db) ** 2
                   for od, db in ods)

    res = minimize_scalar(cost, bounds=(0.0, 100.0), method="bounded",
                          options={"xatol": 1e-12})
    return CalibrationFit(["od_scale"], [float(res.x)], [0.0],
                          {"sum_sq_db": float(res.fun)}, [""], [None])
