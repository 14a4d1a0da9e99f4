"""Least-squares fit of a flat floor plus two Lorentzians to a binned PSD."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks, peak_widths

from .physics import FitParams, model_psd, to_db
from .spectral import Spectrum

QC_WINDOW = (80e3, 90e3)

# Internal parameter vector: logs of amplitudes and widths, linear centres.
_LOG = np.array([True, True, False, True, True, False, True])


class FitError(RuntimeError):
    """Fit failed; ``last`` holds the last iterate when there was one."""

    def __init__(self, msg, last: FitParams | None = None):
        super().__init__(msg)
        self.last = last


class PeaksNotFound(FitError):
    pass


class ConvergenceError(FitError):
    pass


class DegenerateData(FitError):
    pass


@dataclass(frozen=True)
class FitOptions:
    xtol: float = 1e-8
    gtol: float = 1e-10
    ftol: float = 1e-12
    max_iter: int = 500
    exclude: tuple = (QC_WINDOW,)
    drop_dc_bin: bool = True


@dataclass
class FitResult:
    params: FitParams
    std_errors: FitParams
    eta_85: float
    eta_87: float
    residual_rms: float
    iterations: int
    converged: bool
    grad_norm: float = 0.0
    degenerate: bool = False
    covariance: np.ndarray = field(default=None, repr=False)

    def eta_db(self) -> tuple[float, float]:
        return float(to_db(self.eta_85)), float(to_db(self.eta_87))

    def eta_errors(self) -> tuple[float, float]:
        """Standard errors of eta from the parameter covariance."""
        out = []
        p = self.params.as_array()
        for k in (1, 4):
            g = np.zeros(7)
            g[0] = -p[k] / p[0] ** 2
            g[k] = 1.0 / p[0]
            out.append(float(math.sqrt(max(g @ self.covariance @ g, 0.0))))
        return tuple(out)


def derive_eta(params: FitParams) -> tuple[float, float]:
    if params.s_ph <= 0:
        raise ValueError("floor must be positive")
    return params.s_at85 / params.s_ph, params.s_at87 / params.s_ph


def fit_mask(spec: Spectrum, opts: FitOptions = FitOptions()) -> np.ndarray:
    mask = np.ones(len(spec), dtype=bool)
    for lo, hi in opts.exclude:
        mask &= ~((spec.freqs >= lo) & (spec.freqs < hi))
    if opts.drop_dc_bin:
        mask &= spec.freqs - spec.bin_width / 2 > 0
    return mask


def initial_guess(spec: Spectrum, hints=None) -> FitParams:
    """Starting point from the median floor and the two strongest peaks.

    ``hints`` is an optional pair of expected Larmor frequencies; they replace
    peak detection.
    """
    n = len(spec)
    if n < 50:
        raise ValueError("need at least 50 bins")
    floor = float(np.median(spec.psd))
    win = max(5, (n // 200) | 1)
    smooth = median_filter(spec.psd, size=win, mode="nearest")
    excess = smooth - floor
    resid = spec.psd - smooth
    # Standard error of a running median: 1.2533 sigma / sqrt(window).
    noise = 1.2533 * 1.4826 * np.median(np.abs(resid - np.median(resid))) / math.sqrt(win)
    threshold = max(6.0 * noise, 1e-9 * floor)
    search = spec.freqs - spec.bin_width / 2 > 0

    if hints is None:
        peaks, props = find_peaks(np.where(search, excess, -np.inf), height=threshold,
                                  prominence=threshold)
        ranked = peaks[np.argsort(props["prominences"])[::-1]]
        if len(ranked) < 2:
            raise PeaksNotFound("peaks not found: fewer than two detectable spin-noise lines")
        first = ranked[0]
        # Noise ripple on top of the strongest line is not a second line.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            min_sep = 1.5 * peak_widths(excess, [first], rel_height=0.5)[0][0]
        others = [i for i in ranked[1:] if abs(i - first) > min_sep]
        if not others:
            raise PeaksNotFound("peaks not found: only one spin-noise line resolved")
        idx = np.sort([first, others[0]])
        nu = spec.freqs[idx]
    else:
        nu = np.sort(np.asarray(hints, dtype=float))
        if nu[1] - nu[0] < spec.bin_width:
            nu[1] = nu[0] + 10 * spec.bin_width
        idx = np.array([int(np.argmin(np.abs(spec.freqs - x))) for x in nu])

    widths = []
    amps = []
    for i in idx:
        amp = max(float(excess[i]), 0.0)
        amps.append(amp if amp > 0 else 1e-6 * floor)
        w = None
        if amp > threshold:
            with warnings.catch_warnings():
                # Hinted positions need not be local maxima.
                warnings.simplefilter("ignore", RuntimeWarning)
                bins = peak_widths(excess, [i], rel_height=0.5)[0][0]
            w = max(3.0 * spec.bin_width, bins * spec.bin_width)
        widths.append(w)
    # A line too weak to measure borrows the other line's width (both relax
    # at the same rate); failing that, a generic 100 bins.
    known = [w for w in widths if w is not None]
    fallback = known[0] if known else 100.0 * spec.bin_width
    widths = [fallback if w is None else w for w in widths]
    return FitParams(floor, amps[0], float(nu[0]), widths[0], amps[1], float(nu[1]), widths[1])


def _to_internal(p: FitParams, scale: float) -> np.ndarray:
    v = p.as_array()
    v[[0, 1, 4]] /= scale
    out = v.copy()
    out[_LOG] = np.log(v[_LOG])
    return out


def _to_physical(theta: np.ndarray, scale: float) -> np.ndarray:
    v = theta.copy()
    v[_LOG] = np.exp(theta[_LOG])
    v[[0, 1, 4]] *= scale
    return v


def _model_and_jac(f: np.ndarray, theta: np.ndarray):
    """Normalized model and its Jacobian in the internal parameterization."""
    s_ph = math.exp(theta[0])
    model = np.full_like(f, s_ph)
    jac = np.empty((len(f), 7))
    jac[:, 0] = s_ph
    for k in (1, 4):
        s_at = math.exp(theta[k])
        nu0 = theta[k + 1]
        h = math.exp(theta[k + 2]) / 2.0
        u = f - nu0
        d = u * u + h * h
        shape = h * h / d
        model += s_at * shape
        jac[:, k] = s_at * shape
        jac[:, k + 1] = s_at * h * h * 2.0 * u / (d * d)
        jac[:, k + 2] = 2.0 * s_at * h * h * u * u / (d * d)
    return model, jac


def _admissible(theta: np.ndarray, f_lo: float, f_hi: float, log_w: tuple) -> bool:
    """Centres inside the fitted band; widths between half a bin and the band."""
    lo, hi = log_w
    return (f_lo <= theta[2] <= f_hi and f_lo <= theta[5] <= f_hi
            and lo < theta[3] < hi and lo < theta[6] < hi)


def fit_double_lorentzian(spec: Spectrum, init: FitParams | None = None,
                          opts: FitOptions = FitOptions(), hints=None) -> FitResult:
    """Levenberg-Marquardt on unweighted squared residuals.

    Amplitudes and widths are fitted in log space, so they stay positive. The
    data are divided by their median first, which makes the fit exactly
    equivariant under a global rescaling of the spectrum.
    """
    if init is None:
        init = initial_guess(spec, hints)
    if init.s_ph <= 0 or init.fwhm85 <= 0 or init.fwhm87 <= 0:
        raise ValueError("initial guess violates positivity")
    mask = fit_mask(spec, opts)
    f = spec.freqs[mask]
    y_raw = spec.psd[mask]
    scale = float(np.median(y_raw))
    if not scale > 0:
        raise DegenerateData("spectrum has no positive floor")
    y = y_raw / scale
    f_lo, f_hi = float(f[0]), float(f[-1])
    log_w = (math.log(0.5 * spec.bin_width), math.log(f_hi - f_lo))
    theta = _to_internal(FitParams(init.s_ph, max(init.s_at85, 1e-12 * init.s_ph), init.nu85,
                                   init.fwhm85, max(init.s_at87, 1e-12 * init.s_ph),
                                   init.nu87, init.fwhm87), scale)

    model, jac = _model_and_jac(f, theta)
    r = model - y
    cost = 0.5 * float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    grad = jac.T @ r
    while it < opts.max_iter:
        it += 1
        a = jac.T @ jac
        grad = jac.T @ r
        if np.max(np.abs(grad)) < opts.gtol:
            converged = True
            break
        diag = np.diag(a).copy()
        if np.any(diag <= 0) or not np.all(np.isfinite(a)):
            raise DegenerateData("singular normal equations; data may be degenerate",
                                 FitParams.from_array(_to_physical(theta, scale)))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if not _admissible(trial, f_lo, f_hi, log_w):
                lam *= 10.0
                continue
            try:
                m_new, j_new = _model_and_jac(f, trial)
            except OverflowError:
                lam *= 10.0
                continue
            r_new = m_new - y
            c_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(c_new) and c_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # No downhill step at any damping: a numerical minimum.
            converged = True
            break
        rel = np.max(np.abs(step) / np.maximum(np.abs(theta), 1.0))
        drop = (cost - c_new) / max(cost, 1e-300)
        theta, model, jac, r, cost = trial, m_new, j_new, r_new, c_new
        lam = max(lam / 10.0, 1e-12)
        if rel < opts.xtol or drop < opts.ftol:
            converged = True
            break
    grad = jac.T @ r
    phys = _to_physical(theta, scale)
    if not converged:
        raise ConvergenceError(f"no convergence after {opts.max_iter} iterations",
                               FitParams.from_array(phys))

    m, p = len(y), len(theta)
    a = jac.T @ jac
    try:
        cov_int = np.linalg.inv(a) * (2.0 * cost / max(m - p, 1))
    except np.linalg.LinAlgError as exc:
        raise DegenerateData("singular normal equations at the optimum",
                             FitParams.from_array(phys)) from exc
    # d(physical)/d(internal): value for log entries, 1 for centres.
    d = np.where(_LOG, phys, 1.0)
    cov = cov_int * np.outer(d, d)
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))

    if phys[2] > phys[5]:
        order = [0, 4, 5, 6, 1, 2, 3]
        phys, errs = phys[order], errs[order]
        cov = cov[np.ix_(order, order)]
    params = FitParams.from_array(phys)
    eta85, eta87 = derive_eta(params)
    degenerate = abs(params.nu87 - params.nu85) < spec.bin_width
    return FitResult(
        params=params,
        std_errors=FitParams.from_array(errs),
        eta_85=eta85,
        eta_87=eta87,
        residual_rms=float(math.sqrt(2.0 * cost / m) * scale),
        iterations=it,
        converged=converged,
        grad_norm=float(np.max(np.abs(grad))),
        degenerate=degenerate,
        covariance=cov,
    )


def residuals(spec: Spectrum, result: FitResult, opts: FitOptions = FitOptions()) -> np.ndarray:
    mask = fit_mask(spec, opts)
    return spec.psd[mask] - model_psd(spec.freqs[mask], result.params)
