"""Grid orchestration: seeded simulation + analysis per operating point, theory
columns, and the per-figure tables."""
from __future__ import annotations

import dataclasses as dc
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .calibrate import QcReport, qc_select
from .config import Acquisition, RunConfig
from .fit import FitError, FitOptions, FitResult, fit_double_lorentzian
from .spectral import Spectrum, average_spectra, periodogram
from .synth import Scenario, synth_trace


@dataclass(frozen=True)
class Point:
    """One operating point of a figure table."""
    figure: str
    power_w: float
    density_cm3: float
    squeezed: bool

    def scenario(self, base: Scenario) -> Scenario:
        return dc.replace(base,
                          probe=dc.replace(base.probe, power_w=self.power_w,
                                           squeezed=self.squeezed),
                          cell=dc.replace(base.cell, density_cm3=self.density_cm3))


def trace_seed(seed_base: int, scenario_hash: str, rep: int) -> int:
    """64-bit seed for repetition ``rep`` of a scenario.

    Keyed on the scenario content rather than grid position, so a point has
    the same data whichever table or worker produces it.
    """
    h = int(scenario_hash, 16)
    ss = np.random.SeedSequence(seed_base, spawn_key=(h >> 32, h & 0xFFFFFFFF, rep))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def pair_key(sc: Scenario) -> str:
    """Seed key shared by the squeezed and coherent versions of a scenario.

    Both branches then see the same random numbers, so their SNR ratio is
    free of most sampling noise.
    """
    return dc.replace(sc, probe=dc.replace(sc.probe, squeezed=False)).scenario_hash()


def grid_points(figure: str, powers_mw, densities, squeezing) -> list[Point]:
    return [Point(figure, p * 1e-3, n, bool(s))
            for p in powers_mw for n in densities for s in squeezing]


def figure_points(cfg: RunConfig, figure: str) -> list[Point]:
    s = cfg.sweep
    if figure == "fig2":
        return grid_points("fig2", s.fig2.powers_mw, s.fig2.densities_per_cm3, (False, True))
    if figure == "fig3":
        out = []
        for p in s.fig3.powers_mw:
            out += [Point("fig3", p * 1e-3, s.fig3.density_high_per_cm3, False),
                    Point("fig3", p * 1e-3, s.fig3.density_high_per_cm3, True),
                    Point("fig3", p * 1e-3, s.fig3.density_low_per_cm3, True)]
        return out
    if figure == "fig4":
        return grid_points("fig4", s.fig4.powers_mw, s.fig4.densities_per_cm3, (False, True))
    if figure == "grid":
        return grid_points("grid", s.powers_mw, s.densities_per_cm3, s.squeezing)
    raise ValueError(f"unknown figure {figure!r}")


# -- analysis ---------------------------------------------------------------

@dataclass
class PointAnalysis:
    qc: QcReport | None
    groups: list[Spectrum]
    group_fits: list[FitResult | None]
    grand: Spectrum
    grand_fit: FitResult | None
    errors: list[str] = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(f is None for f in self.group_fits) + (self.grand_fit is None)


def analyze_spectra(spectra: list[Spectrum], averages: int, qc_window, qc_threshold: float,
                    hints=None, opts: FitOptions | None = None) -> PointAnalysis:
    """QC, group averaging and fitting of one point's single-trace spectra.

    Kept spectra are averaged in consecutive groups of ``averages`` (the last
    group may be smaller) and each group is fitted; the average of all kept
    spectra is fitted as well.
    """
    opts = FitOptions(exclude=(tuple(qc_window),)) if opts is None else opts
    qc = None
    kept = list(spectra)
    if len(spectra) >= 2:
        qc = qc_select(spectra, qc_window, qc_threshold)
        kept = [spectra[i] for i in qc.kept_indices]
    groups = [average_spectra(kept[i:i + averages]) for i in range(0, len(kept), averages)]
    errors = []

    def attempt(spec, label):
        try:
            return fit_double_lorentzian(spec, opts=opts, hints=hints)
        except FitError as exc:
            errors.append(f"{label}: {exc}")
            return None

    fits = [attempt(g, f"group {k}") for k, g in enumerate(groups)]
    grand = average_spectra(kept)
    return PointAnalysis(qc, groups, fits, grand, attempt(grand, "all kept"), errors)


def simulate_spectra(sc: Scenario, acq: Acquisition, seeds) -> list[Spectrum]:
    return [periodogram(synth_trace(sc, acq.duration_s, acq.sample_rate_hz, s),
                        acq.bin_width_hz) for s in seeds]


# -- table rows ---------------------------------------------------------------

SETTING_COLUMNS = ["figure", "power_mw", "density_per_cm3", "squeezed", "xi_sq_post"]
THEORY_COLUMNS = ["eta85_theory", "eta87_theory", "eta85_theory_db", "fwhm_theory_hz",
                  "nu85_theory_hz", "nu87_theory_hz", "s_ph_theory"]
SIM_COLUMNS = ["n_traces", "n_kept", "qc_rejected_fraction", "n_groups", "n_failed",
               "eta85_fit", "eta85_fit_std", "fwhm85_fit_hz", "fwhm85_fit_std_hz",
               "nu85_fit_hz", "nu87_fit_hz", "eta87_fit", "eta85_fit_db",
               "eta85_avgfit", "eta85_avgfit_err", "fwhm85_avgfit_hz", "fwhm85_avgfit_err_hz",
               "s_ph_avgfit"]


def theory_values(sc: Scenario) -> dict:
    """Closed-form predictions, straight from the physics functions."""
    eta = sc.eta()
    lines = {line.mass_number: line for line in sc.lines()}
    return {
        "eta85_theory": eta[85],
        "eta87_theory": eta[87],
        "eta85_theory_db": float(ph.to_db(eta[85])),
        "fwhm_theory_hz": ph.linewidth_fwhm(sc.cell.density_cm3, sc.probe.power_w,
                                            sc.broadening),
        "nu85_theory_hz": lines[85].larmor_hz,
        "nu87_theory_hz": lines[87].larmor_hz,
        "s_ph_theory": sc.shot_noise(),
    }


def _mean_std(values):
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else math.nan


def summarize(an: PointAnalysis, n_traces: int) -> dict:
    good = [f for f in an.group_fits if f is not None]
    eta, eta_sd = _mean_std([f.eta_85 for f in good])
    fwhm, fwhm_sd = _mean_std([f.params.fwhm85 for f in good])
    nu85, _ = _mean_std([f.params.nu85 for f in good])
    nu87, _ = _mean_std([f.params.nu87 for f in good])
    eta87, _ = _mean_std([f.eta_87 for f in good])
    g = an.grand_fit
    n_kept = len(an.qc.kept_indices) if an.qc is not None else n_traces
    out = {
        "n_traces": n_traces,
        "n_kept": n_kept,
        "qc_rejected_fraction": an.qc.rejected_fraction if an.qc is not None else 0.0,
        "n_groups": len(an.groups),
        "n_failed": an.n_failed,
        "eta85_fit": eta,
        "eta85_fit_std": eta_sd,
        "fwhm85_fit_hz": fwhm,
        "fwhm85_fit_std_hz": fwhm_sd,
        "nu85_fit_hz": nu85,
        "nu87_fit_hz": nu87,
        "eta87_fit": eta87,
        "eta85_fit_db": float(ph.to_db(eta)) if eta > 0 else math.nan,
        "eta85_avgfit": g.eta_85 if g else math.nan,
        "eta85_avgfit_err": g.eta_errors()[0] if g else math.nan,
        "fwhm85_avgfit_hz": g.params.fwhm85 if g else math.nan,
        "fwhm85_avgfit_err_hz": g.std_errors.fwhm85 if g else math.nan,
        "s_ph_avgfit": g.params.s_ph if g else math.nan,
    }
    return out


@dataclass(frozen=True)
class Task:
    scenario: Scenario
    acquisition: Acquisition
    seeds: tuple
    averages: int


def run_task(task: Task) -> dict:
    sc = task.scenario
    spectra = simulate_spectra(sc, task.acquisition, task.seeds)
    lines = sc.lines()
    an = analyze_spectra(spectra, task.averages, task.acquisition.qc_window_hz,
                         task.acquisition.qc_threshold,
                         hints=[line.larmor_hz for line in lines])
    return summarize(an, len(spectra))


@dataclass
class SweepRow:
    point: Point
    scenario: Scenario
    theory: dict
    sim: dict | None = None

    def values(self, theory_only: bool = False) -> dict:
        p = self.point
        out = {"figure": p.figure, "power_mw": p.power_w * 1e3,
               "density_per_cm3": p.density_cm3, "squeezed": int(p.squeezed),
               "xi_sq_post": self.scenario.xi_sq()}
        out.update(self.theory)
        if not theory_only:
            out.update(self.sim)
        out["scenario"] = self.scenario.scenario_hash()
        return out


def columns(theory_only: bool) -> list[str]:
    return SETTING_COLUMNS + THEORY_COLUMNS + ([] if theory_only else SIM_COLUMNS) + ["scenario"]


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_points(cfg: RunConfig, points: list[Point], workers: int = 1,
               theory_only: bool = False, on_result=None) -> list[SweepRow]:
    """Evaluate ``points`` in order; identical scenarios are simulated once."""
    base = cfg.scenario
    scenarios = [p.scenario(base) for p in points]
    rows = [SweepRow(p, sc, theory_values(sc)) for p, sc in zip(points, scenarios)]
    if theory_only:
        return rows
    order: list[str] = []
    tasks: dict[str, Task] = {}
    for sc in scenarios:
        h = sc.scenario_hash()
        if h not in tasks:
            seeds = tuple(trace_seed(cfg.sweep.seed_base, pair_key(sc), r)
                          for r in range(cfg.sweep.spectra_per_point))
            tasks[h] = Task(sc, cfg.acquisition, seeds, cfg.sweep.averages_per_spectrum)
            order.append(h)
    if workers > 1 and len(order) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_task, [tasks[h] for h in order]))
    else:
        results = [run_task(tasks[h]) for h in order]
    by_hash = dict(zip(order, results))
    for h in order:
        if on_result is not None:
            on_result(h, by_hash[h])
    for row in rows:
        row.sim = by_hash[row.scenario.scenario_hash()]
    return rows


def convergence_table(cfg: RunConfig) -> list[dict]:
    """Theory-only squeezed/coherent SNR ratio on a log density grid."""
    c = cfg.sweep.convergence
    out = []
    for n in np.geomspace(c.start_per_cm3, c.stop_per_cm3, c.count):
        coh = Point("convergence", c.power_mw * 1e-3, float(n), False).scenario(cfg.scenario)
        sq = Point("convergence", c.power_mw * 1e-3, float(n), True).scenario(cfg.scenario)
        ratio = sq.eta()[85] / coh.eta()[85]
        out.append({"density_per_cm3": float(n), "optical_depth": sq.optical_depth(),
                    "xi_sq_post": sq.xi_sq(), "eta_ratio": ratio,
                    "eta_ratio_db": float(ph.to_db(ratio))})
    return out


def first_crossing(table: list[dict], level: float) -> float:
    """Density at which the ratio first drops to ``level`` (log interpolation)."""
    for a, b in zip(table, table[1:]):
        if a["eta_ratio"] > level >= b["eta_ratio"]:
            t = (a["eta_ratio"] - level) / (a["eta_ratio"] - b["eta_ratio"])
            return float(math.exp(math.log(a["density_per_cm3"]) * (1 - t)
                                  + math.log(b["density_per_cm3"]) * t))
    return math.nan
