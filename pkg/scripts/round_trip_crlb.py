"""How precisely can the reference spectrum pin down its own line centre?

Compares the Monte-Carlo scatter of the fitted Rb85 Larmor frequency (10 x
0.5 s spectra averaged, as in the round-trip acceptance check) with the
Cramer-Rao bound for the same data, and converts the +-20 Hz window into the
probability that at least 18 of 20 seeds fall inside it. Run::

    python3 scripts/round_trip_crlb.py [--runs 100]
"""
import argparse
from math import comb, erf, sqrt

import numpy as np

from spinnoise.fit import fit_double_lorentzian
from spinnoise.physics import FitParams, model_psd
from spinnoise.spectral import average_spectra, periodogram
from spinnoise.sweep import pair_key, trace_seed
from spinnoise.synth import Scenario, synth_trace


def fisher_sd(sc: Scenario, n_traces: int, duration: float = 0.5,
              sample_rate: float = 200e3) -> np.ndarray:
    """CRLB standard deviations from the exponential likelihood of raw bins."""
    f = np.arange(1, int(sample_rate / 2 * duration)) / duration
    v0 = sc.expected_params().as_array()
    cols = []
    for i in range(7):
        h = 1e-6 * max(abs(v0[i]), 1.0)
        up, dn = v0.copy(), v0.copy()
        up[i] += h
        dn[i] -= h
        cols.append((model_psd(f, FitParams.from_array(up))
                     - model_psd(f, FitParams.from_array(dn))) / (2 * h))
    s = model_psd(f, FitParams.from_array(v0))
    j = np.array(cols).T / s[:, None]
    return np.sqrt(np.diag(np.linalg.inv(n_traces * j.T @ j)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--window-hz", type=float, default=20.0)
    args = ap.parse_args()

    sc = Scenario()
    true = sc.expected_params()
    sd = fisher_sd(sc, 10)
    print(f"CRLB: sd(nu85) = {sd[2]:.1f} Hz, sd(fwhm85) = {100 * sd[3] / true.fwhm85:.2f}%, "
          f"sd(s_at85) = {100 * sd[1] / true.s_at85:.2f}%")

    nus = []
    for run in range(args.runs):
        spectra = [periodogram(synth_trace(sc, seed=trace_seed(1000 + run, pair_key(sc), r)))
                   for r in range(10)]
        nus.append(fit_double_lorentzian(average_spectra(spectra)).params.nu85)
    d = np.array(nus) - true.nu85
    inside = np.mean(np.abs(d) <= args.window_hz)
    print(f"Monte Carlo ({args.runs} runs): bias {d.mean():+.1f} Hz, sd {d.std(ddof=1):.1f} Hz, "
          f"{100 * inside:.0f}% within +-{args.window_hz:g} Hz")

    for label, q in (("at the CRLB", erf(args.window_hz / (sd[2] * sqrt(2)))),
                     ("observed", inside)):
        p18 = sum(comb(20, k) * q**k * (1 - q) ** (20 - k) for k in (18, 19, 20))
        print(f"P(>= 18/20 seeds inside) {label}: {p18:.3f} (per-seed {q:.3f})")


if __name__ == "__main__":
    main()
