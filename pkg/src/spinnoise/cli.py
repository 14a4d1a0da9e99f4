"""Command-line front end: ``spinnoise {simulate,analyze,sweep,constants,qc}``.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error,
4 a fit did not converge.
"""
from __future__ import annotations

import argparse
import dataclasses as dc
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__, io as sio
from . import physics as ph
from .calibrate import CalibrationError, qc_select
from .config import FULL_SCALE_SPECTRA, ConfigError, RunConfig, dump_config, load_config
from .spectral import SpectrumError, periodogram
from .sweep import (
    analyze_spectra,
    columns,
    convergence_table,
    figure_points,
    format_value,
    pair_key,
    run_points,
    trace_seed,
)
from .synth import synth_trace

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT = 0, 2, 3, 4


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    acq = cfg.acquisition
    if getattr(args, "bins_hz", None) is not None:
        if args.bins_hz <= 0:
            raise ConfigError("--bins-hz must be positive")
        acq = dc.replace(acq, bin_width_hz=float(args.bins_hz))
    if getattr(args, "qc_window", None) is not None:
        lo, hi = args.qc_window
        if not lo < hi:
            raise ConfigError("--qc-window needs LOW < HIGH")
        acq = dc.replace(acq, qc_window_hz=(float(lo), float(hi)))
    sweep = cfg.sweep
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        sweep = dc.replace(sweep, seed_base=int(args.seed))
    if getattr(args, "paper_scale", False):
        sweep = dc.replace(sweep, spectra_per_point=FULL_SCALE_SPECTRA)
    return dc.replace(cfg, acquisition=acq, sweep=sweep)


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    acq = cfg.acquisition
    manifest = []
    scenarios = {}
    for point in figure_points(cfg, "grid"):
        sc = point.scenario(cfg.scenario)
        h = sc.scenario_hash()
        scenarios[h] = {"power_mw": point.power_w * 1e3, "density_per_cm3": point.density_cm3,
                        "squeezed": point.squeezed,
                        "larmor_hz": [line.larmor_hz for line in sc.lines()],
                        "expected": dict(zip(ph.FitParams.NAMES,
                                             sc.expected_params().as_array().tolist()))}
        for rep in range(cfg.sweep.spectra_per_point):
            seed = trace_seed(cfg.sweep.seed_base, pair_key(sc), rep)
            rel = Path("traces") / h / f"rep_{rep:04d}{sio.TRACE_SUFFIX}"
            sio.write_trace(out / rel, synth_trace(sc, acq.duration_s, acq.sample_rate_hz, seed))
            manifest.append([rel.as_posix(), h, seed, rep, format_value(point.power_w * 1e3),
                             format_value(point.density_cm3), int(point.squeezed)])
    header = sio.provenance_lines(cfg.config_hash(), cfg.sweep.seed_base)
    sio.write_text(out / sio.MANIFEST_NAME, sio.rows_to_csv(sio.MANIFEST_COLUMNS, manifest, header))
    sio.write_scenarios(out / sio.SCENARIOS_NAME, scenarios)
    print(f"wrote {len(manifest)} traces for {len(scenarios)} scenarios to {out}")
    return EXIT_OK


# -- analyze / qc -------------------------------------------------------------

def _collect(paths) -> list[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.rglob(f"*{sio.TRACE_SUFFIX}"))
        else:
            files.append(p)
    return files


def _find_scenarios(paths) -> dict:
    found = {}
    for p in map(Path, paths):
        for d in [p if p.is_dir() else p.parent, *(p if p.is_dir() else p.parent).parents][:4]:
            found.update(sio.read_scenarios(d))
    return found


def _load_points(paths, bin_width):
    """Group readable traces by scenario; report unreadable files by name."""
    files = _collect(paths)
    if not files:
        raise FileNotFoundError("no trace files found")
    points = defaultdict(list)
    bad = []
    for f in files:
        try:
            tr = sio.read_trace(f)
            spec = periodogram(tr, bin_width)
        except (sio.TraceFormatError, SpectrumError) as exc:
            _err(str(exc) if str(f) in str(exc) else f"{f}: {exc}")
            bad.append(f)
            continue
        points[tr.scenario_id or "unlabelled"].append((f, tr.sample_rate, spec))
    return points, bad


def _check_rates(key, items) -> bool:
    rates = {fs for _, fs, _ in items}
    if len(rates) > 1:
        _err(f"scenario {key}: mixed sample rates {sorted(rates)}; point skipped")
        return False
    return True


def cmd_analyze(args, cfg: RunConfig) -> int:
    acq = cfg.acquisition
    points, bad = _load_points(args.paths, acq.bin_width_hz)
    hints_by = _find_scenarios(args.paths)
    out = Path(args.out)
    header = sio.provenance_lines(cfg.config_hash())
    fit_rows, qc_rows = [], []
    status = EXIT_DATA if bad else EXIT_OK
    failed = False
    print(f"{'scenario':<18s}{'traces':>7s}{'kept':>6s}{'eta85':>10s}{'+/-':>8s}"
          f"{'fwhm85/Hz':>11s}{'nu85/Hz':>11s}{'nu87/Hz':>11s}")
    for key in sorted(points):
        items = points[key]
        if not _check_rates(key, items):
            status = EXIT_DATA
            continue
        spectra = [s for _, _, s in items]
        hints = hints_by.get(key, {}).get("larmor_hz")
        try:
            an = analyze_spectra(spectra, cfg.sweep.averages_per_spectrum, acq.qc_window_hz,
                                 acq.qc_threshold, hints=hints)
        except (SpectrumError, CalibrationError) as exc:
            _err(f"scenario {key}: {exc}")
            status = EXIT_DATA
            continue
        for msg in an.errors:
            _err(f"scenario {key}: fit failed ({msg})")
        failed |= an.n_failed > 0
        for k, (g, f) in enumerate(zip(an.groups, an.group_fits)):
            fit_rows.append(sio.fit_row(f, key, f"group{k}", g.n_averages) if f
                            else sio.failed_fit_row(key, f"group{k}", g.n_averages))
        fit_rows.append(sio.fit_row(an.grand_fit, key, "all", an.grand.n_averages)
                        if an.grand_fit else sio.failed_fit_row(key, "all", an.grand.n_averages))
        if an.qc is not None:
            for i, (f, _, _) in enumerate(items):
                qc_rows.append([key, str(f), repr(float(an.qc.chi_values[i])),
                                int(i in an.qc.kept_indices)])
        sio.write_text(out / "spectra" / f"{key}.csv",
                       sio.spectrum_to_csv(an.grand, key, header))
        good = [f for f in an.group_fits if f is not None]
        etas = [f.eta_85 for f in good]
        sd = float(np.std(etas, ddof=1)) if len(etas) > 1 else math.nan
        g = an.grand_fit
        print(f"{key:<18s}{len(items):>7d}{an.grand.n_averages:>6d}"
              f"{np.mean(etas) if etas else math.nan:>10.4f}{sd:>8.4f}"
              f"{g.params.fwhm85 if g else math.nan:>11.1f}"
              f"{g.params.nu85 if g else math.nan:>11.1f}{g.params.nu87 if g else math.nan:>11.1f}")
    sio.write_text(out / "fits.csv", sio.rows_to_csv(sio.FIT_COLUMNS, fit_rows, header))
    qc_head = header + [f"# qc_window_hz={acq.qc_window_hz[0]!r},{acq.qc_window_hz[1]!r}",
                        f"# qc_threshold={acq.qc_threshold!r}"]
    sio.write_text(out / "qc.csv", sio.rows_to_csv(["scenario", "file", "chi", "kept"],
                                                   qc_rows, qc_head))
    if bad:
        _err(f"{len(bad)} unreadable file(s): {', '.join(str(b) for b in bad)}")
    if status == EXIT_OK and failed:
        status = EXIT_FIT
    return status


def cmd_qc(args, cfg: RunConfig) -> int:
    acq = cfg.acquisition
    points, bad = _load_points(args.paths, acq.bin_width_hz)
    rows = []
    total = rejected = 0
    status = EXIT_DATA if bad else EXIT_OK
    for key in sorted(points):
        items = points[key]
        if not _check_rates(key, items):
            status = EXIT_DATA
            continue
        if len(items) < 2:
            _err(f"scenario {key}: quality control needs at least two spectra")
            status = EXIT_DATA
            continue
        try:
            rep = qc_select([s for _, _, s in items], acq.qc_window_hz, acq.qc_threshold)
        except SpectrumError as exc:
            _err(f"scenario {key}: {exc}")
            status = EXIT_DATA
            continue
        for i, (f, _, _) in enumerate(items):
            rows.append([key, str(f), repr(float(rep.chi_values[i])),
                         int(i in rep.kept_indices)])
        total += len(items)
        rejected += len(rep.rejected_indices)
        print(f"{key}: {len(rep.rejected_indices)}/{len(items)} rejected "
              f"(chi_bar={rep.chi_bar:.4g} V^2, window={acq.qc_window_hz[0]:g}-"
              f"{acq.qc_window_hz[1]:g} Hz)")
        for i in rep.rejected_indices:
            print(f"  rejected {items[i][0]}  chi/chi_bar={rep.chi_values[i] / rep.chi_bar:.4f}")
    if total:
        print(f"global: {rejected}/{total} rejected ({rejected / total:.1%})")
    if args.out:
        head = sio.provenance_lines(cfg.config_hash())
        sio.write_text(Path(args.out) / "qc.csv",
                       sio.rows_to_csv(["scenario", "file", "chi", "kept"], rows, head))
    return status


# -- sweep / constants ------------------------------------------------------

def cmd_sweep(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    theory_only = bool(args.theory_only)
    header = sio.provenance_lines(cfg.config_hash(), cfg.sweep.seed_base,
                                  spectra_per_point=cfg.sweep.spectra_per_point,
                                  averages_per_spectrum=cfg.sweep.averages_per_spectrum)
    points = [p for fig in cfg.sweep.figures for p in figure_points(cfg, fig)]

    def save_point(h, result):
        cols = list(result)
        sio.write_text(out / "points" / f"{h}.csv",
                       sio.rows_to_csv(cols, [[format_value(result[c]) for c in cols]], header))

    rows = run_points(cfg, points, workers=args.workers, theory_only=theory_only,
                      on_result=None if theory_only else save_point)
    cols = columns(theory_only)
    failed = 0
    qc_rows = []
    for fig in cfg.sweep.figures:
        fig_rows = [r for r in rows if r.point.figure == fig]
        table = [[format_value(r.values(theory_only)[c]) for c in cols] for r in fig_rows]
        sio.write_text(out / f"{fig}.csv", sio.rows_to_csv(cols, table, header + [f"# figure={fig}"]))
        if not theory_only:
            failed += sum(r.sim["n_failed"] for r in fig_rows)
            qc_rows += [[fig, format_value(r.point.power_w * 1e3), format_value(r.point.density_cm3),
                         int(r.point.squeezed), r.sim["n_traces"], r.sim["n_traces"] - r.sim["n_kept"]]
                        for r in fig_rows]
    conv = convergence_table(cfg)
    conv_cols = list(conv[0])
    sio.write_text(out / "convergence.csv",
                   sio.rows_to_csv(conv_cols, [[format_value(r[c]) for c in conv_cols]
                                               for r in conv], header + ["# figure=convergence"]))
    if qc_rows:
        # Each scenario counts once towards the global fraction.
        seen = {}
        for r in rows:
            seen[r.scenario.scenario_hash()] = r.sim
        tot = sum(s["n_traces"] for s in seen.values())
        rej = sum(s["n_traces"] - s["n_kept"] for s in seen.values())
        qc_rows.append(["global", "", "", "", tot, rej])
        sio.write_text(out / "qc_summary.csv",
                       sio.rows_to_csv(["figure", "power_mw", "density_per_cm3", "squeezed",
                                        "n_traces", "n_rejected"], qc_rows, header))
    print(f"wrote {', '.join(cfg.sweep.figures)} and convergence tables to {out}")
    if failed:
        _err(f"{failed} fit(s) did not converge; see n_failed columns")
        return EXIT_FIT
    return EXIT_OK


def cmd_constants(args, cfg: RunConfig) -> int:
    text = dump_config(cfg, derived=True)
    sys.stdout.write(f"# spinnoise {__version__} defaults; derived values are informational\n")
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        sio.write_text(out / "constants.yaml", text)
        sc = cfg.scenario
        sio.write_text(out / "constants.csv", ph.constants_csv(ph.constants_table(
            sc.consts, sc.det, sc.cell, sc.broadening, sc.isotopes, sc.probe)))
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults if omitted)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--bins-hz", type=float, help="PSD bin width in Hz")
    common.add_argument("--qc-window", type=float, nargs=2, metavar=("LOW_HZ", "HIGH_HZ"),
                        help="quality-control band in Hz")
    return common


def _runner_options() -> argparse.ArgumentParser:
    runner = argparse.ArgumentParser(add_help=False)
    runner.add_argument("--seed", type=int, help="override sweep.seed_base")
    runner.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    runner.add_argument("--paper-scale", action="store_true",
                        help=f"{FULL_SCALE_SPECTRA} spectra per point instead of the desk default")
    return runner


def build_parser() -> argparse.ArgumentParser:
    # Parent parsers share their Action objects with every child, so each
    # subcommand gets fresh ones; otherwise set_defaults(out=...) would leak.
    p = argparse.ArgumentParser(prog="spinnoise", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"spinnoise {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    both = lambda: [_common_options(), _runner_options()]  # noqa: E731
    s = sub.add_parser("simulate", parents=both(), help="write synthetic trace files")
    s.set_defaults(func=cmd_simulate, out="sim")
    a = sub.add_parser("analyze", parents=[_common_options()],
                       help="spectra, QC and fits from traces")
    a.add_argument("paths", nargs="+", help="trace files or directories")
    a.set_defaults(func=cmd_analyze, out="analysis")
    w = sub.add_parser("sweep", parents=both(), help="figure tables")
    w.add_argument("--theory-only", action="store_true", help="skip simulation")
    w.set_defaults(func=cmd_sweep, out="sweep")
    c = sub.add_parser("constants", parents=[_common_options()], help="print defaults as YAML")
    c.set_defaults(func=cmd_constants)
    q = sub.add_parser("qc", parents=[_common_options()],
                       help="quality-control report for traces")
    q.add_argument("paths", nargs="+", help="trace files or directories")
    q.set_defaults(func=cmd_qc)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        _err("--workers must be >= 1")
        return EXIT_CONFIG
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        _err(f"config: {exc}")
        return EXIT_CONFIG
    try:
        return args.func(args, cfg)
    except ConfigError as exc:
        _err(f"config: {exc}")
        return EXIT_CONFIG
    except (OSError, SpectrumError, sio.TraceFormatError, ValueError) as exc:
        _err(str(exc))
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
