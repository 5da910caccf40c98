"""Config files, named presets and report/field serialization.

Config files are flat ``key = value`` lines grouped under ``[grid]``,
``[species]``, ``[fluid]``, ``[init]`` and ``[run]``; ``#`` starts a comment.
Only ``[grid] nx`` and ``ny`` are required.
"""

from __future__ import annotations

import csv
import math
from dataclasses import fields
from pathlib import Path

import numpy as np

from .config import (ConfigError, FluidConfig, InitConfig, InitialDataError, RunConfig,
                     SimConfig, initial_state, reference_config)
from .diagnostics import SLACK_KAPPA, FunctionalReport
from .grid import GridSpec
from .taxis import SensitivitySpec, SpeciesParams

SECTIONS = ("grid", "species", "fluid", "init", "run")
REQUIRED = {("grid", "nx"), ("grid", "ny")}


class ConfigSyntaxError(ConfigError):
    pass


class UnknownKeyError(ConfigError):
    pass


class DuplicateKeyError(ConfigError):
    pass


class MissingKeyError(ConfigError):
    pass


class InvalidValueError(ConfigError):
    pass


class LowerBoundError(ConfigError):
    """``delta`` must be a positive lower bound for the initial oxygen."""


class SensitivityHypothesisError(ConfigError):
    """A conditional-functional experiment was requested with ``f'(0) != 0``."""


class UnknownPresetError(KeyError):
    pass


# parsing ---------------------------------------------------------------------

def _as_bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _as_floats(v: str) -> tuple:
    return tuple(float(x) for x in v.replace(";", ",").split(",") if x.strip())


def _converters(cls) -> dict:
    out = {}
    for f in fields(cls):
        t = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
        if t == "bool":
            out[f.name] = _as_bool
        elif t == "int":
            out[f.name] = int
        elif t == "float":
            out[f.name] = float
        elif t == "tuple":
            out[f.name] = _as_floats
        else:
            out[f.name] = str
    return out


_KEYS = {
    "grid": {"nx": int, "ny": int, "lx": float, "ly": float},
    "species": {"chi": float, "eps": float, "c0_inf": float, "delta": float,
                "f": str, "p": float, "table_s": _as_floats, "table_f": _as_floats},
    "fluid": _converters(FluidConfig),
    "init": _converters(InitConfig),
    "run": _converters(RunConfig),
}


def _read_pairs(text: str) -> dict:
    values: dict[tuple[str, str], tuple[str, int]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigSyntaxError(f"line {lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise UnknownKeyError(f"line {lineno}: unknown section [{section}]; expected one of {SECTIONS}")
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        if section is None:
            raise ConfigSyntaxError(f"line {lineno}: key outside any section")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS[section]:
            raise UnknownKeyError(f"line {lineno}: unknown key {key!r} in [{section}]")
        if (section, key) in values:
            first = values[(section, key)][1]
            raise DuplicateKeyError(f"line {lineno}: duplicate key {key!r} in [{section}] (first set on line {first})")
        values[(section, key)] = (value, lineno)
    return values


def parse_config(text: str) -> SimConfig:
    """Parse and fully validate a config, including the initial data it generates."""
    pairs = _read_pairs(text)
    missing = sorted(f"[{s}] {k}" for s, k in REQUIRED if (s, k) not in pairs)
    if missing:
        raise MissingKeyError(f"missing required key(s): {', '.join(missing)}")

    sec: dict[str, dict] = {s: {} for s in SECTIONS}
    for (s, k), (v, lineno) in pairs.items():
        try:
            sec[s][k] = _KEYS[s][k](v)
        except ValueError as err:
            raise InvalidValueError(f"line {lineno}: invalid value for {k!r}: {err}") from None

    sp = sec["species"]
    if "delta" in sp and not sp["delta"] > 0:
        raise LowerBoundError(
            f"delta = {sp['delta']} rejected: the initial data need c_0 \\ge \\delta for some \\delta > 0")
    kind = sp.pop("f", "power")
    p = sp.pop("p", 2.0)
    ts, tf = sp.pop("table_s", ()), sp.pop("table_f", ())
    try:
        if kind == "power":
            spec = SensitivitySpec.power(p)
        elif kind == "linear":
            spec = SensitivitySpec.linear()
        elif kind == "table":
            spec = SensitivitySpec.table(ts, tf)
        else:
            raise ValueError(f"f must be power, linear or table, got {kind!r}")
        cfg = SimConfig(
            grid=GridSpec(**sec["grid"]),
            species=SpeciesParams(**sp),
            sensitivity=spec,
            fluid=FluidConfig(**sec["fluid"]),
            init=InitConfig(**sec["init"]),
            run=RunConfig(**sec["run"]),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise InvalidValueError(str(err)) from None
    validate(cfg)
    return cfg


def validate(cfg: SimConfig) -> SimConfig:
    """Cross-field checks: f-hypothesis gate and admissible initial data."""
    if cfg.run.conditional and not cfg.sensitivity.flat_at_origin:
        raise SensitivityHypothesisError(
            "f'(0) = 0 required: conditional-functional experiments reject this sensitivity")
    initial_state(cfg)
    return cfg


def load_config(path) -> SimConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: SimConfig) -> str:
    """Inverse of :func:`parse_config` (every key written explicitly)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return format(v, ".17g")
        if isinstance(v, tuple):
            return ",".join(format(x, ".17g") for x in v)
        return str(v)

    g, sp, f = cfg.grid, cfg.species, cfg.sensitivity
    lines = ["[grid]", f"nx = {g.nx}", f"ny = {g.ny}", f"lx = {fmt(g.lx)}", f"ly = {fmt(g.ly)}", "",
             "[species]"]
    lines += [f"{k} = {fmt(getattr(sp, k))}" for k in ("chi", "eps", "c0_inf", "delta")]
    lines.append(f"f = {f.kind}")
    if f.kind == "power":
        lines.append(f"p = {fmt(f.p)}")
    elif f.kind == "table":
        lines += [f"table_s = {fmt(f.table_s)}", f"table_f = {fmt(f.table_f)}"]
    for name in ("fluid", "init", "run"):
        obj = getattr(cfg, name)
        lines += ["", f"[{name}]"] + [f"{fl.name} = {fmt(getattr(obj, fl.name))}" for fl in fields(obj)]
    return "\n".join(lines) + "\n"


# presets -----------------------------------------------------------------------

def _presets() -> dict:
    ref = reference_config()
    return {
        "quasi-energy": ref.with_(init__c="bump", init__c_amp=0.9, init__bump_width=0.15,
                                  species__delta=0.1, run__t_end=2.0),
        "uniform-integrability": ref.with_(run__t_end=5.0),
        "conditional-energy": ref.with_(species__c0_inf=0.15, species__delta=0.15, init__c_value=0.15,
                                        init__n_amp=0.9, run__t_end=30.0, run__dt_max=1e-3,
                                        run__report_every=1000, run__conditional=True),
        "stabilization": ref,
        "epsilon-family": ref.with_(run__t_end=5.0, run__snapshot_dt=0.05, run__track=False,
                                    run__eps_list=(1e-1, 1e-2, 1e-3, 1e-4)),
        "fluid-free-3d-proxy": ref.with_(fluid__mode="none", fluid__phi="zero", init__u="zero",
                                         run__t_end=5.0),
    }


PRESET_NAMES = tuple(_presets())


def preset(name: str) -> SimConfig:
    table = _presets()
    if name not in table:
        raise UnknownPresetError(f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")
    return table[name]


# time series -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def emit_timeseries(reports, path) -> Path:
    """CSV with one row per report and the report field order as header."""
    if hasattr(reports, "reports"):
        reports = reports.reports
    path = Path(path)
    cols = FunctionalReport.columns()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            w.writerow([_fmt(v) for v in r.row()])
    return path


def read_timeseries(path) -> list[FunctionalReport]:
    path = Path(path)
    cols = FunctionalReport.columns()
    types = {f.name: f.type for f in fields(FunctionalReport)}
    with path.open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None:
            raise ValueError(f"{path}: empty file (missing header)")
        if header[:len(cols)] != cols:
            raise ValueError(f"{path}: header does not match the report schema")
        out = []
        for row in rd:
            kw = {}
            for k, v in zip(cols, row):
                kw[k] = int(v) if types[k] in ("int", int) else float(v)
            out.append(FunctionalReport(**kw))
    return out


# heatmaps ----------------------------------------------------------------------

def emit_heatmap(field, path, value_range) -> Path:
    """16-bit binary PGM; pixel rows run from the top (largest y) down, columns along x."""
    values = np.asarray(getattr(field, "values", field), dtype=float)
    lo, hi = (float(v) for v in value_range)
    if not lo < hi:
        raise ValueError("heatmap range needs lo < hi")
    if not np.all(np.isfinite(values)):
        raise ValueError("heatmap field has non-finite values")
    nx, ny = values.shape
    scaled = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    pix = np.rint(scaled * 65535.0).astype(">u2")
    img = pix.T[::-1]
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def read_heatmap(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w)


# re-validation of a stored time series ----------------------------------------

def check_reports(reports: list[FunctionalReport], mass_tol: float = 1e-8) -> list[tuple[str, bool, str]]:
    """Re-check every inequality margin that a report stream carries."""
    if not reports:
        return [("nonempty", False, "no report rows")]
    res = []
    m0 = reports[0].mass_n
    drift = max(abs(r.mass_n - m0) for r in reports) / abs(m0)
    res.append(("mass conservation", drift <= mass_tol, f"max relative drift {drift:.3e}"))

    c0 = reports[0].sup_c
    worst = max(r.sup_c for r in reports)
    res.append(("max principle", worst <= c0 * (1 + 1e-12), f"sup c {worst:.17g} vs initial {c0:.17g}"))

    worst_qe = math.inf
    for r in reports:
        if math.isfinite(r.quasi_energy_margin) and math.isfinite(r.quasi_energy_slack):
            worst_qe = min(worst_qe, r.quasi_energy_margin + r.quasi_energy_slack)
    res.append(("quasi-energy", worst_qe >= 0, f"min margin + slack {worst_qe:.3e}"))

    worst_ck = min(r.ck_margin / max(r.mass_n ** 2, 1e-300) for r in reports)
    res.append(("Csiszar-Kullback", worst_ck >= -1e-10, f"min scaled margin {worst_ck:.3e}"))

    worst_ent = min(r.entropy_n for r in reports)
    res.append(("entropy nonnegative", worst_ent >= -1e-12 * abs(m0), f"min entropy {worst_ent:.3e}"))

    eta0 = reports[0].eta0
    if math.isfinite(eta0):
        start = next((k for k, r in enumerate(reports) if r.cond_F < 0.9 * eta0), None)
        if start is None:
            res.append(("conditional energy", True, "cond_F never below 0.9 eta0 (nothing asserted)"))
        else:
            ref = reports[start].cond_F
            excess = max(r.cond_F - ref for r in reports[start:])
            res.append(("conditional energy", excess <= 1e-3 * eta0,
                        f"t0 = {reports[start].t:.6g}, max excess {excess:.3e}"))
    return res


def check_csv(path) -> list[tuple[str, bool, str]]:
    return check_reports(read_timeseries(path))


__all__ = [
    "parse_config", "load_config", "format_config", "validate", "preset", "PRESET_NAMES",
    "emit_timeseries", "read_timeseries", "emit_heatmap", "read_heatmap", "check_reports",
    "check_csv", "ConfigSyntaxError", "UnknownKeyError", "DuplicateKeyError", "MissingKeyError",
    "InvalidValueError", "LowerBoundError", "SensitivityHypothesisError", "UnknownPresetError",
    "InitialDataError", "SLACK_KAPPA",
]
