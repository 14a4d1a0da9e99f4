"""YAML run configuration: scenario defaults, acquisition settings and sweep axes.

Every key carries its unit in the name (``power_mw``, ``density_per_cm3``).
"""
from __future__ import annotations

import dataclasses as dc
import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import physics as ph
from .physics import (
    BroadeningParams,
    CellSpec,
    DetectorSpec,
    FieldSpec,
    IsotopeSpec,
    PhysicalConstants,
    ProbeSpec,
)
from .synth import Scenario


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Acquisition:
    sample_rate_hz: float = 200e3
    duration_s: float = 0.5
    bin_width_hz: float = 10.0
    qc_window_hz: tuple[float, float] = (80e3, 90e3)
    qc_threshold: float = 1.03


@dataclass(frozen=True)
class Fig2:
    powers_mw: tuple = (0.5, 1.5, 4.0)
    densities_per_cm3: tuple = (1.5e12, 2.4e12, 5.0e12, 9.0e12, 1.3e13)


@dataclass(frozen=True)
class Fig3:
    powers_mw: tuple = (0.5, 1.5, 2.5, 4.0)
    density_high_per_cm3: float = 0.9e13
    density_low_per_cm3: float = 0.5e13


@dataclass(frozen=True)
class Fig4:
    powers_mw: tuple = (2.0, 4.0)
    densities_per_cm3: tuple = (1.5e12, 2.4e12, 5.0e12, 9.0e12, 1.3e13)


@dataclass(frozen=True)
class Convergence:
    start_per_cm3: float = 1e12
    stop_per_cm3: float = 1e15
    count: int = 61
    power_mw: float = 1.5


@dataclass(frozen=True)
class SweepConfig:
    seed_base: int = 0
    spectra_per_point: int = 20
    averages_per_spectrum: int = 10
    powers_mw: tuple = (2.5,)
    densities_per_cm3: tuple = (2.4e12,)
    squeezing: tuple = (False, True)
    figures: tuple = ("fig2", "fig3", "fig4")
    fig2: Fig2 = field(default_factory=Fig2)
    fig3: Fig3 = field(default_factory=Fig3)
    fig4: Fig4 = field(default_factory=Fig4)
    convergence: Convergence = field(default_factory=Convergence)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario = field(default_factory=Scenario)
    acquisition: Acquisition = field(default_factory=Acquisition)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def config_hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


FULL_SCALE_SPECTRA = 100
FIGURES = ("fig2", "fig3", "fig4")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        s = repr(v)
        if "e" not in s and v != 0 and abs(v) >= 1e5:
            s = np.format_float_scientific(v, unique=True, trim="0")
        # PyYAML only reads floats with a '.' and a signed exponent.
        if "e" in s:
            mant, exp = s.split("e")
            if "." not in mant:
                mant += ".0"
            if exp[0] not in "+-":
                exp = "+" + exp
            s = f"{mant}e{exp}"
        elif s in ("inf", "nan"):
            s = "." + s
        return s
    if isinstance(v, str):
        return v
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(type(v))


def _tree(cfg: RunConfig) -> list:
    """Ordered (key, value-or-subtree, comment) triples mirroring the YAML layout."""
    sc = cfg.scenario
    # Stored internally as angular rates; 12 digits undo the 2 pi round trip.
    hz = {k: float(f"{v:.12g}") for k, v in sc.broadening.to_hz().items()}
    iso_blocks = []
    for iso in sc.isotopes:
        iso_blocks.append((f"rb{iso.mass_number}", [
            ("nuclear_spin", iso.nuclear_spin, ""),
            ("abundance", iso.abundance, "natural abundance fraction"),
            ("hyperfine_line_offsets_ghz", tuple(iso.hyperfine_line_offsets_ghz),
             "line positions for f = I-1/2, I+1/2"),
            ("gyromagnetic_ratio_hz_per_ut", iso.gyromagnetic_ratio_hz_per_ut, "g_F mu_B / h"),
            ("kappa_squared", iso.kappa_squared, "null: evaluate from the hyperfine sum"),
        ], ""))
    a, s = cfg.acquisition, cfg.sweep
    return [
        ("probe", [
            ("power_mw", float(f"{sc.probe.power_w * 1e3:.12g}"), "at the detector"),
            ("detuning_ghz", sc.probe.detuning_ghz, "blue of the Rb D1 line"),
            ("input_squeezing_ratio", sc.probe.input_squeezing, "xi0^2, 3.0 dB before the cell"),
            ("squeezed", sc.probe.squeezed, ""),
        ], ""),
        ("cell", [
            ("density_per_cm3", sc.cell.density_cm3, "total Rb density"),
            ("length_cm", sc.cell.length_cm, ""),
            ("optical_fwhm_ghz", sc.cell.optical_fwhm_ghz, "pressure broadened, 100 Torr N2"),
            ("effective_area_cm2", sc.cell.effective_area_cm2, "measured"),
            ("od_scale", sc.cell.od_scale, "calibrated absorption multiplier"),
        ], ""),
        ("detector", [
            ("gain_v_per_a", sc.det.gain_v_per_a, "transimpedance gain"),
            ("quantum_efficiency", sc.det.quantum_efficiency, "measured"),
        ], ""),
        ("field", [("bx_ut", sc.field.bx_ut, "transverse DC field")], ""),
        ("broadening", [
            ("gamma0_over_2pi_hz", hz["gamma0_hz"], "measured"),
            ("alpha_over_2pi_hz_per_1e12_cm3", hz["alpha_hz_per_1e12_cm3"], "measured"),
            ("beta_over_2pi_hz_per_mw", hz["beta_hz_per_mw"], "measured"),
        ], ""),
        ("constants", [
            ("electron_radius_cm", sc.consts.electron_radius_cm, "classical electron radius"),
            ("photon_energy_j", sc.consts.photon_energy_j, "795 nm"),
            ("electron_charge_c", sc.consts.electron_charge_c, ""),
            ("oscillator_strength", sc.consts.oscillator_strength, "Rb D1"),
            ("speed_of_light_cm_per_s", sc.consts.speed_of_light_cm_s, ""),
        ], ""),
        ("isotopes", iso_blocks, ""),
        ("acquisition", [
            ("sample_rate_hz", a.sample_rate_hz, "digitizer rate"),
            ("duration_s", a.duration_s, "per spectrum"),
            ("bin_width_hz", a.bin_width_hz, ""),
            ("qc_window_hz", tuple(a.qc_window_hz), "featureless band used for rejection"),
            ("qc_threshold", a.qc_threshold, "reject if chi > threshold * mean chi"),
        ], ""),
        ("sweep", [
            ("seed_base", s.seed_base, ""),
            ("spectra_per_point", s.spectra_per_point, "0.5 s traces per operating point"),
            ("averages_per_spectrum", s.averages_per_spectrum, "traces averaged per fitted spectrum"),
            ("powers_mw", tuple(s.powers_mw), "grid for 'simulate'"),
            ("densities_per_cm3", tuple(s.densities_per_cm3), "grid for 'simulate'"),
            ("squeezing", tuple(s.squeezing), ""),
            ("figures", tuple(s.figures), ""),
            ("fig2", [("powers_mw", tuple(s.fig2.powers_mw), ""),
                      ("densities_per_cm3", tuple(s.fig2.densities_per_cm3), "")], ""),
            ("fig3", [("powers_mw", tuple(s.fig3.powers_mw), ""),
                      ("density_high_per_cm3", s.fig3.density_high_per_cm3, "coherent + squeezed"),
                      ("density_low_per_cm3", s.fig3.density_low_per_cm3, "squeezed only")], ""),
            ("fig4", [("powers_mw", tuple(s.fig4.powers_mw), ""),
                      ("densities_per_cm3", tuple(s.fig4.densities_per_cm3), "")], ""),
            ("convergence", [("start_per_cm3", s.convergence.start_per_cm3, ""),
                             ("stop_per_cm3", s.convergence.stop_per_cm3, ""),
                             ("count", s.convergence.count, "log-spaced theory grid"),
                             ("power_mw", s.convergence.power_mw, "")], ""),
        ], ""),
    ]


def _emit(items, indent, out):
    pad = "  " * indent
    for key, val, comment in items:
        if isinstance(val, list):
            out.append(f"{pad}{key}:")
            _emit(val, indent + 1, out)
        else:
            line = f"{pad}{key}: {_fmt(val)}"
            if comment:
                line += f"  # {comment}"
            out.append(line)


def dump_config(cfg: RunConfig | None = None, derived: bool = False) -> str:
    """YAML text for ``cfg``; with ``derived`` also a read-only block of
    quantities computed from it (ignored when parsed back)."""
    cfg = RunConfig() if cfg is None else cfg
    out: list[str] = []
    _emit(_tree(cfg), 0, out)
    if derived:
        sc = cfg.scenario
        rows = ph.constants_table(sc.consts, sc.det, sc.cell, sc.broadening, sc.isotopes,
                                  sc.probe)
        out.append("derived:  # informational, not read back")
        for r in rows:
            if r.name in ("responsivity", "sigma0") or r.name.endswith("theory"):
                note = f"{r.unit}; {r.provenance}" if r.unit else r.provenance
                out.append(f"  {r.name}: {_fmt(float(r.value))}  # {note}")
    return "\n".join(out) + "\n"


def _line_index(text: str) -> dict:
    """Map dotted key paths to 1-based source lines."""
    index = {}
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return index

    def walk(n, prefix):
        if isinstance(n, yaml.MappingNode):
            for k, v in n.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                index[path] = k.start_mark.line + 1
                walk(v, path)

    if node is not None:
        walk(node, "")
    return index


class _Reader:
    def __init__(self, data: dict, lines: dict):
        self.lines = lines
        self.data = data

    def fail(self, path, msg):
        line = self.lines.get(path)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{path}: {msg}")

    def section(self, path: str, allowed) -> dict:
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict):
                self.fail(path, "expected a mapping")
            node = node.get(part, {})
        if node is None:
            node = {}
        if not isinstance(node, dict):
            self.fail(path, "expected a mapping")
        for k in node:
            if k not in allowed:
                self.fail(f"{path}.{k}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return node

    def number(self, sec: dict, path: str, key: str, default, kind=float):
        if key not in sec:
            return default
        v = sec[key]
        if isinstance(v, bool):
            self.fail(f"{path}.{key}", f"expected a number, got {v!r}")
        try:
            out = kind(float(v)) if kind is int else kind(v)
        except (TypeError, ValueError):
            self.fail(f"{path}.{key}", f"expected a number, got {v!r}")
        if kind is int and float(v) != out:
            self.fail(f"{path}.{key}", f"expected an integer, got {v!r}")
        return out

    def maybe_number(self, sec, path, key, default):
        if key in sec and sec[key] is None:
            return None
        return self.number(sec, path, key, default)

    def flag(self, sec, path, key, default):
        if key not in sec:
            return default
        if not isinstance(sec[key], bool):
            self.fail(f"{path}.{key}", f"expected true/false, got {sec[key]!r}")
        return sec[key]

    def numbers(self, sec, path, key, default, length=None):
        if key not in sec:
            return tuple(default)
        v = sec[key]
        if not isinstance(v, list) or not v:
            self.fail(f"{path}.{key}", "expected a non-empty list")
        try:
            out = tuple(float(x) for x in v if not isinstance(x, bool))
        except (TypeError, ValueError):
            self.fail(f"{path}.{key}", f"expected numbers, got {v!r}")
        if len(out) != len(v):
            self.fail(f"{path}.{key}", f"expected numbers, got {v!r}")
        if length is not None and len(out) != length:
            self.fail(f"{path}.{key}", f"expected {length} values")
        return out


def _keys(items) -> set:
    return {k for k, _, _ in items}


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}YAML parse error: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    base = RunConfig()
    tree = dict((k, v) for k, v, _ in _tree(base))
    top = set(tree) | {"derived"}
    for k in data:
        if k not in top:
            raise ConfigError(f"{k}: unknown section (allowed: {', '.join(sorted(top))})")
    r = _Reader(data, _line_index(text))
    d = base.scenario

    try:
        sec = r.section("probe", _keys(tree["probe"]))
        probe = ProbeSpec(
            power_w=r.number(sec, "probe", "power_mw", d.probe.power_w * 1e3) * 1e-3,
            detuning_ghz=r.number(sec, "probe", "detuning_ghz", d.probe.detuning_ghz),
            input_squeezing=r.number(sec, "probe", "input_squeezing_ratio",
                                     d.probe.input_squeezing),
            squeezed=r.flag(sec, "probe", "squeezed", d.probe.squeezed),
        )
        sec = r.section("cell", _keys(tree["cell"]))
        cell = CellSpec(
            density_cm3=r.number(sec, "cell", "density_per_cm3", d.cell.density_cm3),
            length_cm=r.number(sec, "cell", "length_cm", d.cell.length_cm),
            optical_fwhm_ghz=r.number(sec, "cell", "optical_fwhm_ghz", d.cell.optical_fwhm_ghz),
            effective_area_cm2=r.number(sec, "cell", "effective_area_cm2",
                                        d.cell.effective_area_cm2),
            od_scale=r.number(sec, "cell", "od_scale", d.cell.od_scale),
        )
        sec = r.section("detector", _keys(tree["detector"]))
        det = DetectorSpec(r.number(sec, "detector", "gain_v_per_a", d.det.gain_v_per_a),
                           r.number(sec, "detector", "quantum_efficiency",
                                    d.det.quantum_efficiency))
        sec = r.section("field", _keys(tree["field"]))
        bfield = FieldSpec(r.number(sec, "field", "bx_ut", d.field.bx_ut))
        sec = r.section("broadening", _keys(tree["broadening"]))
        hz = d.broadening.to_hz()
        br = BroadeningParams.from_hz(
            r.number(sec, "broadening", "gamma0_over_2pi_hz", hz["gamma0_hz"]),
            r.number(sec, "broadening", "alpha_over_2pi_hz_per_1e12_cm3",
                     hz["alpha_hz_per_1e12_cm3"]),
            r.number(sec, "broadening", "beta_over_2pi_hz_per_mw", hz["beta_hz_per_mw"]),
        )
        sec = r.section("constants", _keys(tree["constants"]))
        c = d.consts
        consts = PhysicalConstants(
            r.number(sec, "constants", "electron_radius_cm", c.electron_radius_cm),
            r.number(sec, "constants", "photon_energy_j", c.photon_energy_j),
            r.number(sec, "constants", "electron_charge_c", c.electron_charge_c),
            r.number(sec, "constants", "oscillator_strength", c.oscillator_strength),
            r.number(sec, "constants", "speed_of_light_cm_per_s", c.speed_of_light_cm_s),
        )
        iso_items = {k: v for k, v, _ in tree["isotopes"]}
        r.section("isotopes", set(iso_items))
        isotopes = []
        for iso in d.isotopes:
            tag = f"rb{iso.mass_number}"
            path = f"isotopes.{tag}"
            sec = r.section(path, _keys(iso_items[tag]))
            isotopes.append(IsotopeSpec(
                mass_number=iso.mass_number,
                nuclear_spin=r.number(sec, path, "nuclear_spin", iso.nuclear_spin),
                abundance=r.number(sec, path, "abundance", iso.abundance),
                hyperfine_line_offsets_ghz=r.numbers(sec, path, "hyperfine_line_offsets_ghz",
                                                     iso.hyperfine_line_offsets_ghz, 2),
                gyromagnetic_ratio_hz_per_ut=r.number(sec, path, "gyromagnetic_ratio_hz_per_ut",
                                                      iso.gyromagnetic_ratio_hz_per_ut),
                kappa_squared=r.maybe_number(sec, path, "kappa_squared", iso.kappa_squared),
            ))
        scenario = Scenario(probe, cell, det, bfield, br, tuple(isotopes), consts)

        sec = r.section("acquisition", _keys(tree["acquisition"]))
        a = base.acquisition
        acq = Acquisition(
            r.number(sec, "acquisition", "sample_rate_hz", a.sample_rate_hz),
            r.number(sec, "acquisition", "duration_s", a.duration_s),
            r.number(sec, "acquisition", "bin_width_hz", a.bin_width_hz),
            r.numbers(sec, "acquisition", "qc_window_hz", a.qc_window_hz, 2),
            r.number(sec, "acquisition", "qc_threshold", a.qc_threshold),
        )
        sweep = _parse_sweep(r, tree)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    _validate(acq, sweep)
    return RunConfig(scenario, acq, sweep)


def _parse_sweep(r: _Reader, tree) -> SweepConfig:
    s = SweepConfig()
    sub = {k: v for k, v, _ in tree["sweep"]}
    sec = r.section("sweep", set(sub))
    figures = sec.get("figures", list(s.figures))
    if not isinstance(figures, list) or any(f not in FIGURES for f in figures):
        r.fail("sweep.figures", f"expected a list drawn from {', '.join(FIGURES)}")
    squeezing = sec.get("squeezing", list(s.squeezing))
    if not isinstance(squeezing, list) or not squeezing or \
            any(not isinstance(x, bool) for x in squeezing):
        r.fail("sweep.squeezing", "expected a non-empty list of true/false")
    f2 = r.section("sweep.fig2", _keys(sub["fig2"]))
    f3 = r.section("sweep.fig3", _keys(sub["fig3"]))
    f4 = r.section("sweep.fig4", _keys(sub["fig4"]))
    cv = r.section("sweep.convergence", _keys(sub["convergence"]))
    return SweepConfig(
        seed_base=r.number(sec, "sweep", "seed_base", s.seed_base, int),
        spectra_per_point=r.number(sec, "sweep", "spectra_per_point", s.spectra_per_point, int),
        averages_per_spectrum=r.number(sec, "sweep", "averages_per_spectrum",
                                       s.averages_per_spectrum, int),
        powers_mw=r.numbers(sec, "sweep", "powers_mw", s.powers_mw),
        densities_per_cm3=r.numbers(sec, "sweep", "densities_per_cm3", s.densities_per_cm3),
        squeezing=tuple(squeezing),
        figures=tuple(figures),
        fig2=Fig2(r.numbers(f2, "sweep.fig2", "powers_mw", s.fig2.powers_mw),
                  r.numbers(f2, "sweep.fig2", "densities_per_cm3", s.fig2.densities_per_cm3)),
        fig3=Fig3(r.numbers(f3, "sweep.fig3", "powers_mw", s.fig3.powers_mw),
                  r.number(f3, "sweep.fig3", "density_high_per_cm3", s.fig3.density_high_per_cm3),
                  r.number(f3, "sweep.fig3", "density_low_per_cm3", s.fig3.density_low_per_cm3)),
        fig4=Fig4(r.numbers(f4, "sweep.fig4", "powers_mw", s.fig4.powers_mw),
                  r.numbers(f4, "sweep.fig4", "densities_per_cm3", s.fig4.densities_per_cm3)),
        convergence=Convergence(
            r.number(cv, "sweep.convergence", "start_per_cm3", s.convergence.start_per_cm3),
            r.number(cv, "sweep.convergence", "stop_per_cm3", s.convergence.stop_per_cm3),
            r.number(cv, "sweep.convergence", "count", s.convergence.count, int),
            r.number(cv, "sweep.convergence", "power_mw", s.convergence.power_mw)),
    )


def _validate(acq: Acquisition, sweep: SweepConfig):
    if acq.sample_rate_hz <= 0 or acq.duration_s <= 0 or acq.bin_width_hz <= 0:
        raise ConfigError("acquisition: rates, durations and bin widths must be positive")
    if not acq.qc_window_hz[0] < acq.qc_window_hz[1]:
        raise ConfigError("acquisition.qc_window_hz: need low < high")
    if sweep.spectra_per_point < 1 or sweep.averages_per_spectrum < 1:
        raise ConfigError("sweep: counts must be >= 1")
    if sweep.seed_base < 0:
        raise ConfigError("sweep.seed_base must be non-negative")


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def with_overrides(cfg: RunConfig, **sweep_changes) -> RunConfig:
    return dc.replace(cfg, sweep=dc.replace(cfg.sweep, **sweep_changes))
