"""File formats: binary traces, spectrum / fit CSVs and the simulation manifest."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .fit import FitResult
from .physics import FitParams
from .spectral import Spectrum
from .synth import TimeTrace

TRACE_MAGIC = "SNSTRACE1"
HEADER_BYTES = 256
TRACE_SUFFIX = ".trace"


class TraceFormatError(ValueError):
    """A trace file is truncated, has a bad header or a wrong sample count."""


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def trace_header(trace: TimeTrace) -> bytes:
    floor = "none" if trace.floor_psd is None else repr(float(trace.floor_psd))
    text = (f"{TRACE_MAGIC} sample_rate={trace.sample_rate!r} duration={trace.duration!r} "
            f"n={len(trace.samples)} seed={int(trace.seed)} "
            f"scenario={trace.scenario_id or '-'} floor_psd={floor}")
    raw = text.encode("ascii")
    if len(raw) > HEADER_BYTES - 1:
        raise ValueError("trace header too long")
    return raw.ljust(HEADER_BYTES - 1, b" ") + b"\n"


def write_trace(path, trace: TimeTrace):
    """Fixed 256-byte ASCII header line followed by little-endian float64 samples."""
    body = np.asarray(trace.samples, dtype="<f8").tobytes()
    _atomic_write(Path(path), trace_header(trace) + body)


def read_trace(path) -> TimeTrace:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise TraceFormatError(f"{path}: cannot read ({exc.strerror})") from exc
    if len(blob) < HEADER_BYTES or blob[HEADER_BYTES - 1:HEADER_BYTES] != b"\n":
        raise TraceFormatError(f"{path}: missing or truncated header")
    try:
        fields = blob[:HEADER_BYTES].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise TraceFormatError(f"{path}: header is not ASCII") from exc
    if not fields or fields[0] != TRACE_MAGIC:
        raise TraceFormatError(f"{path}: not a trace file")
    meta = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
    try:
        fs = float(meta["sample_rate"])
        n = int(meta["n"])
        seed = int(meta["seed"])
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"{path}: bad header field ({exc})") from exc
    body = blob[HEADER_BYTES:]
    if len(body) != 8 * n:
        raise TraceFormatError(f"{path}: expected {n} samples, found {len(body) / 8:g}")
    samples = np.frombuffer(body, dtype="<f8").astype(float)
    if not np.all(np.isfinite(samples)):
        raise TraceFormatError(f"{path}: non-finite samples")
    floor = meta.get("floor_psd", "none")
    scenario = meta.get("scenario", "-")
    return TimeTrace(samples, fs, seed, "" if scenario == "-" else scenario,
                     None if floor == "none" else float(floor))


def trace_to_csv(trace: TimeTrace) -> str:
    buf = io.StringIO()
    buf.write(f"# sample_rate_hz={trace.sample_rate!r} seed={trace.seed} "
              f"scenario={trace.scenario_id}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_s", "voltage_v"])
    for k, v in enumerate(trace.samples):
        w.writerow([repr(k / trace.sample_rate), repr(float(v))])
    return buf.getvalue()


def provenance_lines(config_hash: str = "", seed_base=None, **extra) -> list[str]:
    """Comment lines that make every CSV traceable to its inputs."""
    lines = [f"# spinnoise {__version__}"]
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    if seed_base is not None:
        lines.append(f"# seed_base={seed_base}")
    for k, v in extra.items():
        lines.append(f"# {k}={v}")
    return lines


def spectrum_to_csv(spec: Spectrum, scenario: str = "", header: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header or []:
        buf.write(line + "\n")
    buf.write(f"# bin_width={spec.bin_width!r}\n# n_averages={spec.n_averages}\n"
              f"# scenario={scenario}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frequency_hz", "psd_v2_per_hz"])
    for f, p in zip(spec.freqs, spec.psd):
        w.writerow([repr(float(f)), repr(float(p))])
    return buf.getvalue()


def read_spectrum_csv(path) -> Spectrum:
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].strip().split("=", 1)
                    meta[k.strip()] = v.strip()
            elif line.strip() and not line.startswith("frequency_hz"):
                rows.append([float(x) for x in line.split(",")])
    arr = np.array(rows)
    return Spectrum(arr[:, 0], arr[:, 1], float(meta["bin_width"]),
                    int(meta.get("n_averages", 1)))


FIT_COLUMNS = (["scenario", "label", "n_averages"] + list(FitParams.NAMES)
               + [f"{n}_err" for n in FitParams.NAMES]
               + ["eta_85", "eta_85_err", "eta_85_db", "eta_87", "eta_87_err", "eta_87_db",
                  "residual_rms", "iterations", "converged", "degenerate"])


def fit_row(result: FitResult, scenario: str = "", label: str = "",
            n_averages: int = 0) -> list:
    e85, e87 = result.eta_errors()
    db85, db87 = result.eta_db()
    return ([scenario, label, n_averages]
            + [repr(float(v)) for v in result.params.as_array()]
            + [repr(float(v)) for v in result.std_errors.as_array()]
            + [repr(result.eta_85), repr(e85), repr(db85),
               repr(result.eta_87), repr(e87), repr(db87),
               repr(result.residual_rms), result.iterations,
               int(result.converged), int(result.degenerate)])


def failed_fit_row(scenario: str, label: str, n_averages: int) -> list:
    n = len(FIT_COLUMNS) - 3
    row = [scenario, label, n_averages] + ["nan"] * n
    row[-4:] = ["nan", 0, 0, 0]
    return row


def rows_to_csv(columns, rows, header: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header or []:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def write_text(path, text: str):
    _atomic_write(Path(path), text.encode())


def read_csv_rows(path) -> list[dict]:
    """Rows of a CSV written by this package, skipping '#' comment lines."""
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


MANIFEST_COLUMNS = ["file", "scenario", "seed", "rep", "power_mw", "density_per_cm3",
                    "squeezed"]
MANIFEST_NAME = "manifest.csv"
SCENARIOS_NAME = "scenarios.json"


def write_scenarios(path, scenarios: dict):
    """Sidecar mapping scenario hash -> expected Larmor frequencies and settings."""
    write_text(path, json.dumps(scenarios, sort_keys=True, indent=1) + "\n")


def read_scenarios(directory) -> dict:
    path = Path(directory) / SCENARIOS_NAME
    if not path.is_file():
        return {}
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError):
        return {}


def finite(x: float) -> bool:
    return isinstance(x, float) and math.isfinite(x)
