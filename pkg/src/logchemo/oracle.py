"""Independent reference values for small problems.

The brute-force quadratures below are written as plain loops over cells and
faces and share no stencil or reduction code with the diagnostics module. They
are slow by design and meant for grids of about 8x8.
"""

from __future__ import annotations

import math

import numpy as np

from .config import SimConfig
from .driver import RunSummary, run
from .grid import GridSpec
from .state import State
from .taxis import SensitivitySpec

ORACLE_FLOOR = 1e-30


# homogeneous reduction ---------------------------------------------------------

def homogeneous_ode(n_bar: float, c0: float, spec: SensitivitySpec, t: float,
                    dt: float = 1e-6) -> float:
    """``c(t)`` for ``c' = -n_bar f(c)``, ``c(0) = c0``.

    Closed forms for power laws, classical RK4 at step ``dt`` otherwise.
    """
    if n_bar < 0 or c0 <= 0:
        raise ValueError("homogeneous_ode needs n_bar >= 0 and c0 > 0")
    if n_bar == 0.0 or t == 0.0:
        return float(c0)
    if spec.kind in ("power", "linear"):
        p = spec.p
        if p == 1.0:
            return c0 * math.exp(-n_bar * t)
        return (c0 ** (1.0 - p) + (p - 1.0) * n_bar * t) ** (1.0 / (1.0 - p))

    def rhs(c):
        return -n_bar * float(spec(max(c, 0.0)))

    steps = max(1, int(round(t / dt)))
    h = t / steps
    c = float(c0)
    for _ in range(steps):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * h * k1)
        k3 = rhs(c + 0.5 * h * k2)
        k4 = rhs(c + h * k3)
        c += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    return c


# brute-force functionals ------------------------------------------------------

def _loop_sum(values) -> float:
    s = 0.0
    for v in values:
        s += v
    return s


def _cells(a: np.ndarray):
    nx, ny = a.shape
    for i in range(nx):
        for j in range(ny):
            yield i, j, float(a[i, j])


def _face_pairs(a: np.ndarray, dx: float, dy: float):
    """``(left, right, h)`` for every interior face."""
    nx, ny = a.shape
    for i in range(nx - 1):
        for j in range(ny):
            yield float(a[i, j]), float(a[i + 1, j]), dx
    for i in range(nx):
        for j in range(ny - 1):
            yield float(a[i, j]), float(a[i, j + 1]), dy


def _face_energy(a, dx, dy) -> float:
    return _loop_sum(((r - l) / h) ** 2 for l, r, h in _face_pairs(a, dx, dy)) * dx * dy


def _entropy(n, ref, vol) -> float:
    return _loop_sum(v * math.log(v / ref) for _, _, v in _cells(n) if v > 0) * vol


def _fisher(n, dx, dy) -> float:
    terms = []
    for l, r, h in _face_pairs(n, dx, dy):
        l, r = max(l, ORACLE_FLOOR), max(r, ORACLE_FLOOR)
        terms.append((r - l) ** 2 / (h * h * l * r))
    return _loop_sum(terms) * dx * dy


def _velocity_dirichlet(ux, uy, dx, dy) -> float:
    """``int |grad u|^2`` from squared differences; wall differences use the mirrored ghost ``-u``."""
    nx = ux.shape[0] - 1
    ny = ux.shape[1]
    acc = []
    for j in range(ny):
        for i in range(nx):
            acc.append(((ux[i + 1, j] - ux[i, j]) / dx) ** 2)
    for i in range(1, nx):
        for j in range(ny - 1):
            acc.append(((ux[i, j + 1] - ux[i, j]) / dy) ** 2)
        # half of (2u/dy)^2 at each wall
        acc.append(2.0 * (ux[i, 0] / dy) ** 2)
        acc.append(2.0 * (ux[i, ny - 1] / dy) ** 2)
    for i in range(nx):
        for j in range(ny):
            acc.append(((uy[i, j + 1] - uy[i, j]) / dy) ** 2)
    for j in range(1, ny):
        for i in range(nx - 1):
            acc.append(((uy[i + 1, j] - uy[i, j]) / dx) ** 2)
        acc.append(2.0 * (uy[0, j] / dx) ** 2)
        acc.append(2.0 * (uy[nx - 1, j] / dx) ** 2)
    return _loop_sum(float(v) for v in acc) * dx * dy


def _laplacian_sq(w, dx, dy, vol) -> float:
    nx, ny = w.shape
    acc = []
    for i in range(nx):
        for j in range(ny):
            v = 0.0
            if i > 0:
                v += (w[i - 1, j] - w[i, j]) / dx ** 2
            if i < nx - 1:
                v += (w[i + 1, j] - w[i, j]) / dx ** 2
            if j > 0:
                v += (w[i, j - 1] - w[i, j]) / dy ** 2
            if j < ny - 1:
                v += (w[i, j + 1] - w[i, j]) / dy ** 2
            acc.append(float(v) ** 2)
    return _loop_sum(acc) * vol


def _quasi_terms(n, c, spec, chi, c0_inf, dx, dy):
    vol = dx * dy
    w = np.array([[-math.log(float(c[i, j]) / c0_inf) for j in range(c.shape[1])]
                  for i in range(c.shape[0])])
    rhs = _loop_sum(v * float(spec(float(c[i, j]))) / float(c[i, j]) for i, j, v in _cells(n))
    return {
        "neg_log_mass": -_loop_sum(math.log(max(v, ORACLE_FLOOR)) for _, _, v in _cells(n)) * vol,
        "w_mass": _loop_sum(v for _, _, v in _cells(w)) * vol,
        "fisher_n": _fisher(n, dx, dy),
        "dirichlet_w": _face_energy(w, dx, dy),
        "rhs": chi * chi * rhs * vol,
        "w": w,
    }


def brute_force_report(state: State, chi: float, c0_inf: float, nbar0: float,
                       spec: SensitivitySpec, conditional=None, prev: State | None = None,
                       dt: float | None = None) -> dict:
    """Every report entry recomputed with plain loops."""
    g = state.grid
    dx, dy = g.dx, g.dy
    vol = dx * dy
    n = np.asarray(state.n, dtype=float)
    c = np.asarray(state.c, dtype=float)
    ux = np.asarray(state.u.x, dtype=float)
    uy = np.asarray(state.u.y, dtype=float)

    q = _quasi_terms(n, c, spec, chi, c0_inf, dx, dy)
    mass = _loop_sum(v for _, _, v in _cells(n)) * vol
    mean = mass / (g.lx * g.ly)
    ent = _entropy(n, nbar0, vol)
    ent_mean = _entropy(n, mean, vol)
    kin = 0.5 * (_loop_sum(float(v) ** 2 for v in ux.ravel())
                 + _loop_sum(float(v) ** 2 for v in uy.ravel())) * vol
    c_l2 = _loop_sum(v * v for _, _, v in _cells(c)) * vol
    l1 = _loop_sum(abs(v - mean) for _, _, v in _cells(n)) * vol
    ui = []
    for i, j, v in _cells(n):
        s = v * float(spec(float(c[i, j])))
        ui.append(s * abs(math.log(s)) if s > 0 else 0.0)

    out = {
        "t": state.t,
        "mass_n": mass,
        "sup_c": max(v for _, _, v in _cells(c)),
        "entropy_n": ent,
        "neg_log_mass": q["neg_log_mass"],
        "w_mass": q["w_mass"],
        "fisher_n": q["fisher_n"],
        "dirichlet_w": q["dirichlet_w"],
        "kinetic": kin,
        "dirichlet_u": _velocity_dirichlet(ux, uy, dx, dy),
        "c_l2": c_l2,
        "dirichlet_c": _face_energy(c, dx, dy),
        "lap_w_l2": _laplacian_sq(q["w"], dx, dy, vol),
        "quasi_energy_lhs_rate": math.nan,
        "quasi_energy_rhs": q["rhs"],
        "cond_F": math.nan,
        "uniform_int": _loop_sum(ui) * vol,
        "ck_margin": 2.0 * mass * ent_mean - l1 * l1,
        "heihoff_ratio": (mass * q["fisher_n"] / ent_mean
                          if q["fisher_n"] > 0 and ent_mean > 0 and min(n.ravel()) > 0 else math.nan),
        "n_floored": sum(1 for _, _, v in _cells(n) if v < ORACLE_FLOOR),
    }
    if prev is not None and dt:
        p = _quasi_terms(np.asarray(prev.n), np.asarray(prev.c), spec, chi, c0_inf, dx, dy)
        dq = ((q["neg_log_mass"] + chi * chi * q["w_mass"])
              - (p["neg_log_mass"] + chi * chi * p["w_mass"])) / dt
        out["quasi_energy_lhs_rate"] = dq + 0.5 * q["fisher_n"] + 0.5 * chi * chi * q["dirichlet_w"]
    if conditional is not None:
        out["cond_F"] = (ent + 0.5 * conditional.K * q["dirichlet_w"] + kin / conditional.L
                         + 0.5 * conditional.M * c_l2)
    return out


def brute_force_functional(state: State, which: str, chi: float = 1.0, c0_inf: float | None = None,
                           nbar0: float | None = None, spec: SensitivitySpec | None = None,
                           conditional=None, prev: State | None = None, dt: float | None = None) -> float:
    """One named report entry by brute force; defaults follow the reference config."""
    spec = spec if spec is not None else SensitivitySpec.power(2.0)
    c0_inf = c0_inf if c0_inf is not None else float(np.max(state.c))
    if nbar0 is None:
        g = state.grid
        nbar0 = float(np.sum(state.n)) * g.cell_volume / g.area
    rep = brute_force_report(state, chi, c0_inf, nbar0, spec, conditional, prev, dt)
    if which not in rep:
        raise KeyError(f"unknown functional {which!r}; expected one of {sorted(rep)}")
    return rep[which]


def agreement(report, reference: dict) -> dict:
    """Relative disagreement per entry (NaN pairs count as agreement)."""
    out = {}
    for k, ref in reference.items():
        val = getattr(report, k)
        if isinstance(ref, float) and math.isnan(ref):
            out[k] = 0.0 if math.isnan(val) else math.inf
            continue
        denom = max(abs(ref), abs(val))
        out[k] = 0.0 if denom == 0 else abs(val - ref) / denom
    return out


# fine-grid reference -----------------------------------------------------------

def refine_config(config: SimConfig, factor: int) -> SimConfig:
    g = config.grid
    return config.with_(grid=GridSpec(g.nx * factor, g.ny * factor, g.lx, g.ly),
                        run__dt_max=config.run.dt_max / factor)


def fine_grid_reference(config: SimConfig, refine_factor: int) -> RunSummary:
    """Same physics with ``refine_factor`` times more cells per side and ``dt_max`` scaled down."""
    if refine_factor not in (2, 4):
        raise ValueError("refine_factor must be 2 or 4")
    return run(refine_config(config, refine_factor))


def restrict(a: np.ndarray, factor: int) -> np.ndarray:
    """Average ``factor x factor`` blocks of fine cells onto the coarse cell."""
    nx, ny = a.shape
    return a.reshape(nx // factor, factor, ny // factor, factor).mean(axis=(1, 3))


def l1_distance(coarse: State, fine: State, which: str = "n") -> float:
    r = fine.grid.nx // coarse.grid.nx
    a = getattr(coarse, which)
    b = restrict(np.asarray(getattr(fine, which)), r)
    return float(np.sum(np.abs(a - b))) * coarse.grid.cell_volume


def observed_order(d_coarse: float, d_fine: float, ratio: float = 2.0) -> float:
    return math.log(d_coarse / d_fine) / math.log(ratio)
