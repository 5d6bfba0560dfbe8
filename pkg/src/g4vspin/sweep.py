"""Parameter sweeps over strain and field grids with deterministic tabular output.

A sweep is a task name plus axes; the grid is the Cartesian product of the
axes that the task uses, in a fixed axis order, and rows come out in grid
order whatever the thread count. Angles are given in degrees in configs and
on the command line.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from itertools import product
from typing import Callable

import numpy as np

from . import __version__
from .effective import LAMBDA_ORBITAL_FACTOR, coupling_lambda, effective_qubit, mixing_angle
from .gates import TARGET_CYCLES, TARGETS, DriveSpec, dressed_resonance, driven_model, optimize_gate_time, simulate_gate
from .hamiltonians import (
    FieldVector,
    Manifold,
    Species,
    StrainConfig,
    build_static_hamiltonian,
    get_species,
    numeric_splittings,
)
from .open_system import rate_set

TASKS = ("levels", "lambda_map", "rabi_map", "fidelity_table", "init_rate", "amplification")
FORMATS = ("csv", "json")
THREADS_ENV = "G4V_THREADS"
TABLE_GEOMETRIES = ((0.0, 90.0), (90.0, 0.0))

# Reference drive amplitudes (T) used when a fidelity table is requested without --bac.
DEFAULT_BAC = {Species.SiV: 3.7e-3, Species.SnV: 1.0e-3}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    lo: float
    hi: float
    count: int = 1

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigError(f"axis range needs min <= max, got {self.lo} > {self.hi}")
        if self.count < 1:
            raise ConfigError("axis count must be >= 1")
        if self.count == 1 and self.lo != self.hi:
            raise ConfigError("a single-point axis needs min == max")

    @classmethod
    def parse(cls, text: str) -> "Axis":
        parts = [p.strip() for p in str(text).split(",") if p.strip()]
        try:
            if len(parts) == 1:
                v = float(parts[0])
                return cls(v, v, 1)
            if len(parts) == 3:
                return cls(float(parts[0]), float(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise ConfigError(f"cannot parse axis {text!r}: {exc}") from exc
        raise ConfigError(f"axis must be 'value' or 'min, max, count', got {text!r}")

    def values(self) -> list[float]:
        if self.count == 1:
            return [self.lo]
        return [float(v) for v in np.linspace(self.lo, self.hi, self.count)]

    def text(self) -> str:
        return f"{self.lo!r}, {self.hi!r}, {self.count}"


def _pt(v: float) -> Axis:
    return Axis(v, v, 1)


@dataclass(frozen=True)
class SweepConfig:
    task: str
    species: str = "SnV"
    manifold: str = "ground"
    Ex: Axis = field(default_factory=lambda: _pt(0.0))
    eps_xy: Axis = field(default_factory=lambda: _pt(0.0))
    theta_dc: Axis = field(default_factory=lambda: _pt(90.0))  # deg
    theta_ac: Axis = field(default_factory=lambda: _pt(0.0))  # deg
    phi: Axis = field(default_factory=lambda: _pt(0.0))  # deg, phi_dc - phi_ac
    bdc: Axis = field(default_factory=lambda: _pt(0.2))  # T
    bac: Axis | None = None  # T
    f_values: tuple = (0.0, 0.1, 0.15, 0.2)
    orbital_factor: float = LAMBDA_ORBITAL_FACTOR
    rho_dos: float = 1.0  # ns
    optimize: bool = True
    table_geometries: bool = True  # fidelity_table: only the axial-dc and in-plane-dc pairs
    output: str = "-"
    format: str = "csv"
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        try:
            Species(self.species)
            Manifold(self.manifold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.rho_dos < 0:
            raise ConfigError("rho_dos must be non-negative")
        for name in ("theta_dc", "theta_ac"):
            ax = getattr(self, name)
            if ax.lo < 0 or ax.hi > 180:
                raise ConfigError(f"{name} must lie in [0, 180] degrees")
        if self.bdc.lo < 0 or (self.bac is not None and self.bac.lo < 0):
            raise ConfigError("field magnitudes must be non-negative")

    def canonical(self) -> str:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.text() if isinstance(v, Axis) else (list(v) if isinstance(v, tuple) else v)
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def drive_amplitude(self) -> Axis:
        if self.bac is not None:
            return self.bac
        return _pt(DEFAULT_BAC.get(Species(self.species), 1.0e-3))


_AXIS_KEYS = ("Ex", "eps_xy", "theta_dc", "theta_ac", "phi", "bdc", "bac")
_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def config_from_mapping(values: dict) -> SweepConfig:
    """Build a config from flat string values (from a file or the command line)."""
    kw = {}
    for key, raw in values.items():
        if raw is None:
            continue
        if key in _AXIS_KEYS:
            kw[key] = raw if isinstance(raw, Axis) else Axis.parse(raw)
        elif key == "f_values":
            try:
                kw[key] = tuple(float(x) for x in str(raw).split(",") if x.strip())
            except ValueError as exc:
                raise ConfigError(f"bad f_values: {raw!r}") from exc
        elif key in ("orbital_factor", "rho_dos"):
            try:
                kw[key] = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad {key}: {raw!r}") from exc
        elif key == "seed":
            try:
                kw[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"bad seed: {raw!r}") from exc
        elif key in ("optimize", "table_geometries"):
            if str(raw).lower() not in _BOOL:
                raise ConfigError(f"bad {key} flag: {raw!r}")
            kw[key] = _BOOL[str(raw).lower()]
        elif key in ("task", "species", "manifold", "output", "format"):
            kw[key] = str(raw).strip()
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "task" not in kw:
        raise ConfigError("config does not name a task")
    return SweepConfig(**kw)


def read_config_file(path: str) -> dict:
    """Flatten an INI file with [sweep], [strain], [field] and [options] sections."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    flat = {}
    for section in parser.sections():
        if section not in ("sweep", "strain", "field", "options"):
            raise ConfigError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            flat[key] = value
    return flat


# -- tasks -------------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    axes: tuple  # (config attribute, column name) pairs forming the grid
    outputs: tuple  # column names computed at each point
    evaluate: Callable


def _strain(ex, exy):
    return StrainConfig(Ex=ex, eps_xy=exy)


def _levels(cfg, pt):
    p = get_species(cfg.species)
    b = FieldVector(pt["bdc"], math.radians(pt["theta_dc"]), math.radians(pt["phi"]))
    h = build_static_hamiltonian(p, cfg.manifold, _strain(pt["Ex"], pt["eps_xy"]), b)
    sp = numeric_splittings(h)
    e = sp.energies
    return [e[0], e[1], e[2], e[3], sp.delta_g, sp.branch_gap]


def _lambda_map(cfg, pt):
    p = get_species(cfg.species)
    ma = mixing_angle(p, cfg.manifold, _strain(pt["Ex"], pt["eps_xy"]))
    lam = coupling_lambda(
        math.radians(pt["theta_dc"]),
        math.radians(pt["theta_ac"]),
        math.radians(pt["phi"]),
        ma.x,
        p.require(cfg.manifold, "f"),
        orbital_factor=cfg.orbital_factor,
    )
    return [ma.x, lam]


def _rabi_map(cfg, pt):
    p = get_species(cfg.species)
    b_dc = FieldVector(pt["bdc"], math.radians(pt["theta_dc"]), math.radians(pt["phi"]))
    b_ac = FieldVector(pt["bac"], math.radians(pt["theta_ac"]), 0.0)
    q = effective_qubit(p, cfg.manifold, _strain(pt["Ex"], pt["eps_xy"]), b_dc, b_ac)
    return [q.rabi, q.delta_g, float(q.valid)]


def _fidelity(cfg, pt):
    p = get_species(cfg.species)
    s = _strain(pt["Ex"], pt["eps_xy"])
    b_dc = FieldVector(pt["bdc"], math.radians(pt["theta_dc"]), math.radians(pt["phi"]))
    b_ac = FieldVector(pt["bac"], math.radians(pt["theta_ac"]), 0.0)
    q = effective_qubit(p, "ground", s, b_dc, b_ac)
    out = []
    res = None
    for target in ("pi_half", "pi"):
        if cfg.optimize:
            if res is None:
                res = dressed_resonance(driven_model(p, s, b_dc, b_ac), b_ac.magnitude)
            o = optimize_gate_time(p, s, b_dc, target, b_ac, resonance=res)
            out += [o.b_ac.magnitude, o.duration, o.infidelity, o.gate.leakage]
        else:
            t = TARGET_CYCLES[target] / (q.rabi * 1e-3)
            g = simulate_gate(p, s, b_dc, DriveSpec(b_ac, t), TARGETS[target])
            out += [b_ac.magnitude, t, g.infidelity, g.leakage]
    return [q.rabi, q.delta_g] + out


def _init_rate(cfg, pt):
    p = get_species(cfg.species)
    b = FieldVector(pt["bdc"], math.radians(pt["theta_dc"]), math.radians(pt["phi"]))
    r = rate_set(p, _strain(pt["Ex"], pt["eps_xy"]), b, cfg.rho_dos)
    g = r.gamma_opt
    ph = r.gamma_phonon
    return [r.gamma_init, g[(1, 5)], g[(2, 5)], g[(3, 5)], g[(4, 5)], ph[(1, 3)], ph[(2, 3)], ph[(1, 4)], ph[(2, 4)]]


def _amplification(cfg, pt):
    p = get_species(cfg.species)
    x = mixing_angle(p, cfg.manifold, _strain(pt["Ex"], 0.0)).x
    lam2 = coupling_lambda(math.pi / 2, 0.0, 0.0, x, pt["f"], orbital_factor=cfg.orbital_factor)
    return [x, lam2]


_STRAIN_AXES = (("Ex", "Ex"), ("eps_xy", "eps_xy"))
_DC_AXES = (("theta_dc", "theta_dc_deg"), ("phi", "phi_deg"), ("bdc", "bdc_T"))

TASK_TABLE = {
    "levels": Task(
        _STRAIN_AXES + _DC_AXES,
        ("E1_GHz", "E2_GHz", "E3_GHz", "E4_GHz", "delta_GHz", "branch_gap_GHz"),
        _levels,
    ),
    "lambda_map": Task(
        _STRAIN_AXES + (("theta_dc", "theta_dc_deg"), ("theta_ac", "theta_ac_deg"), ("phi", "phi_deg")),
        ("x_rad", "lambda"),
        _lambda_map,
    ),
    "rabi_map": Task(
        _STRAIN_AXES + _DC_AXES + (("theta_ac", "theta_ac_deg"), ("bac", "bac_T")),
        ("rabi_MHz", "delta_g_GHz", "valid"),
        _rabi_map,
    ),
    "fidelity_table": Task(
        _STRAIN_AXES + _DC_AXES + (("theta_ac", "theta_ac_deg"), ("bac", "bac_ref_T")),
        (
            "rabi_MHz",
            "delta_g_GHz",
            "pi_half_bac_T",
            "pi_half_duration_ns",
            "pi_half_infidelity",
            "pi_half_leakage",
            "pi_bac_T",
            "pi_duration_ns",
            "pi_infidelity",
            "pi_leakage",
        ),
        _fidelity,
    ),
    "init_rate": Task(
        _STRAIN_AXES + _DC_AXES,
        (
            "gamma_init_per_ns",
            "gamma15_per_ns",
            "gamma25_per_ns",
            "gamma35_per_ns",
            "gamma45_per_ns",
            "gamma13_per_ns",
            "gamma23_per_ns",
            "gamma14_per_ns",
            "gamma24_per_ns",
        ),
        _init_rate,
    ),
    "amplification": Task((("Ex", "Ex"), ("f", "f")), ("x_rad", "lambda2"), _amplification),
}


def grid(cfg: SweepConfig) -> list[dict]:
    task = TASK_TABLE[cfg.task]
    axes = []
    for attr, _ in task.axes:
        if attr == "f":
            axes.append(list(cfg.f_values))
        elif attr == "bac":
            axes.append(cfg.drive_amplitude().values())
        else:
            axes.append(getattr(cfg, attr).values())
    names = [a for a, _ in task.axes]
    points = [dict(zip(names, combo)) for combo in product(*axes)]
    if cfg.task == "fidelity_table" and cfg.table_geometries:
        # (theta_dc, theta_ac) = (0, 90) and (90, 0) degrees replace the angle axes
        keep = []
        seen = set()
        for pt in points:
            for tdc, tac in TABLE_GEOMETRIES:
                q = dict(pt, theta_dc=tdc, theta_ac=tac)
                key = tuple(q.values())
                if key not in seen:
                    seen.add(key)
                    keep.append(q)
        points = keep
    return points


@dataclass(frozen=True)
class SweepResult:
    header: tuple
    rows: list
    provenance: dict


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _safe(cfg, task, pt):
    try:
        vals = [float(v) for v in task.evaluate(cfg, pt)]
        return vals, ""
    except Exception as exc:  # recorded per point, never fatal
        return [math.nan] * len(task.outputs), f"{type(exc).__name__}: {exc}"


def run_sweep(cfg: SweepConfig, threads: int | None = None) -> SweepResult:
    """Evaluate the task on every grid point; rows follow grid order."""
    task = TASK_TABLE[cfg.task]
    points = grid(cfg)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(points) == 1:
        results = [_safe(cfg, task, pt) for pt in points]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda pt: _safe(cfg, task, pt), points))
    header = tuple(col for _, col in task.axes) + task.outputs + ("reason",)
    rows = []
    for pt, (vals, reason) in zip(points, results):
        rows.append(tuple(pt[a] for a, _ in task.axes) + tuple(vals) + (reason,))
    prov = {"config_sha256": cfg.digest(), "version": __version__, "task": cfg.task, "config": json.loads(cfg.canonical())}
    return SweepResult(header, rows, prov)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return "%.17g" % v


def render(result: SweepResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(result.header)
        for row in result.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()
    if fmt == "json":
        records = []
        for row in result.rows:
            rec = {}
            for k, v in zip(result.header, row):
                rec[k] = None if isinstance(v, float) and math.isnan(v) else v
            records.append(rec)
        return json.dumps({"provenance": result.provenance, "records": records}, sort_keys=False, allow_nan=False, indent=1) + "\n"
    raise ConfigError(f"unknown format {fmt!r}")


def emit(result: SweepResult, path: str, fmt: str = "csv") -> None:
    text = render(result, fmt)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def parse_csv(text: str) -> tuple[list[str], list[list]]:
    """Inverse of the CSV rendering: floats for numeric cells, strings for the reason."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = []
    for raw in reader:
        rows.append([float(c) for c in raw[:-1]] + [raw[-1]])
    return header, rows
