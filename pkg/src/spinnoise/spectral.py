"""One-sided PSD estimation by a full-length rectangular periodogram averaged
down to coarser frequency bins."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .synth import TimeTrace

# 0 dB on the customary display scale corresponds to -95.57 dBV/Hz.
DISPLAY_DB_REFERENCE = 10.0 ** (-95.57 / 10.0)


class SpectrumError(ValueError):
    pass


@dataclass
class Spectrum:
    freqs: np.ndarray
    psd: np.ndarray
    bin_width: float
    n_averages: int = 1
    source_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.psd = np.asarray(self.psd, dtype=float)
        if self.freqs.shape != self.psd.shape:
            raise SpectrumError("frequency and psd arrays differ in length")
        if self.bin_width <= 0:
            raise SpectrumError("bin width must be positive")

    def __len__(self):
        return len(self.freqs)

    def scaled(self, c: float) -> "Spectrum":
        return Spectrum(self.freqs.copy(), self.psd * c, self.bin_width, self.n_averages,
                        list(self.source_ids))

    def shifted(self, f0: float) -> "Spectrum":
        return Spectrum(self.freqs + f0, self.psd.copy(), self.bin_width, self.n_averages,
                        list(self.source_ids))

    def total_power(self) -> float:
        return float(np.sum(self.psd) * self.bin_width)


def raw_periodogram(samples: np.ndarray, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean-removed one-sided periodogram at resolution ``sample_rate / N``.

    DC and Nyquist bins carry weight 1, all others weight 2, so that
    ``sum(psd) * df`` equals the (population) variance of ``samples``.
    """
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        raise SpectrumError("empty trace")
    x = x - x.mean()
    p = np.abs(np.fft.rfft(x)) ** 2 / (n * sample_rate)
    if n % 2 == 0:
        p[1:-1] *= 2.0
    else:
        p[1:] *= 2.0
    return np.fft.rfftfreq(n, 1.0 / sample_rate), p


def periodogram(trace: TimeTrace, bin_width: float = 10.0) -> Spectrum:
    """PSD in V^2/Hz averaged into bins of ``bin_width`` Hz.

    Consecutive groups of raw bins starting at DC are averaged; a trailing
    partial group is dropped. Bin centres are the mean frequency of each group.
    """
    n = len(trace.samples)
    if n == 0:
        raise SpectrumError("empty trace")
    df = trace.sample_rate / n
    ratio = bin_width / df
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(ratio, 1.0):
        raise SpectrumError(f"bin width {bin_width} Hz is not a multiple of the "
                            f"resolution {df} Hz")
    f, p = raw_periodogram(trace.samples, trace.sample_rate)
    n_bins = len(p) // m
    if n_bins == 0:
        raise SpectrumError("bin width exceeds the spectrum span")
    psd = p[: n_bins * m].reshape(n_bins, m).mean(axis=1)
    freqs = f[: n_bins * m].reshape(n_bins, m).mean(axis=1)
    return Spectrum(freqs, psd, float(bin_width), 1, [trace.seed])


def average_spectra(spectra) -> Spectrum:
    spectra = list(spectra)
    if not spectra:
        raise SpectrumError("nothing to average")
    first = spectra[0]
    for s in spectra[1:]:
        if s.bin_width != first.bin_width or not np.array_equal(s.freqs, first.freqs):
            raise SpectrumError("spectra have mismatched frequency grids")
    psd = np.mean([s.psd for s in spectra], axis=0)
    ids = [i for s in spectra for i in s.source_ids]
    return Spectrum(first.freqs.copy(), psd, first.bin_width,
                    sum(s.n_averages for s in spectra), ids)


def band_mask(spec: Spectrum, f_lo: float, f_hi: float) -> np.ndarray:
    if not f_lo < f_hi:
        raise SpectrumError("band needs f_lo < f_hi")
    lo_edge = spec.freqs[0] - spec.bin_width / 2
    hi_edge = spec.freqs[-1] + spec.bin_width / 2
    if f_lo < lo_edge or f_hi > hi_edge:
        raise SpectrumError(f"window [{f_lo}, {f_hi}) Hz outside coverage "
                            f"[{lo_edge}, {hi_edge}] Hz")
    mask = (spec.freqs >= f_lo) & (spec.freqs < f_hi)
    if not mask.any():
        raise SpectrumError(f"no bin centres inside [{f_lo}, {f_hi}) Hz")
    return mask


def band_power(spec: Spectrum, f_lo: float, f_hi: float) -> float:
    """Power (V^2) in bins whose centres lie in ``[f_lo, f_hi)``."""
    return float(np.sum(spec.psd[band_mask(spec, f_lo, f_hi)]) * spec.bin_width)


def to_db(psd, reference: float = 1.0):
    return 10.0 * np.log10(np.asarray(psd) / reference)
