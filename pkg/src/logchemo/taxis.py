"""Cell density and oxygen updates with positivity built into the scheme.

Transport is first-order upwind in flux form on the total face velocity, diffusion
is backward Euler (or explicit, in flux form) and oxygen consumption is treated
with a Patankar factor, so ``n >= 0`` and ``c > 0`` hold without clipping. The
only exception is round-off: the spectral diffusion solve may return values of
order ``-1e-16 max(n)`` where ``n`` vanishes, and those are zeroed mass-neutrally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import FaceField, GridSpec, MacVelocity, ScalarField, div_faces, lap_neumann
from .solvers import NEUMANN, shifted_solve

ROUNDOFF_NEG = 1e-13


class PositivityError(ValueError):
    """A cell left the admissible range; ``suggested_dt`` is a safer step if known."""

    def __init__(self, message: str, cell=None, value=None, suggested_dt=None):
        self.cell = cell
        self.value = value
        self.suggested_dt = suggested_dt
        super().__init__(message)


class SensitivityRangeError(ValueError):
    pass


SENSITIVITY_KINDS = ("power", "linear", "table")


@dataclass(frozen=True)
class SensitivitySpec:
    """Consumption rate ``f`` with its derivative.

    ``kind='power'`` uses ``f(s) = s**p`` (``p >= 1``), ``'linear'`` is ``f(s) = s``
    and ``'table'`` interpolates ``(table_s, table_f)`` with a cubic spline.
    """

    kind: str = "power"
    p: float = 2.0
    c_max: float = math.inf
    table_s: tuple = ()
    table_f: tuple = ()
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SENSITIVITY_KINDS:
            raise ValueError(f"unknown sensitivity kind {self.kind!r}; expected one of {SENSITIVITY_KINDS}")
        if self.kind == "power" and not self.p >= 1.0:
            raise ValueError(f"power sensitivity needs p >= 1 for f in C^1, got p={self.p}")
        if self.kind == "linear":
            object.__setattr__(self, "p", 1.0)
        if self.kind == "table":
            s = np.asarray(self.table_s, dtype=float)
            fv = np.asarray(self.table_f, dtype=float)
            if s.ndim != 1 or s.shape != fv.shape or len(s) < 4:
                raise ValueError("table sensitivity needs >= 4 matching (s, f) samples")
            if s[0] != 0.0 or fv[0] != 0.0:
                raise ValueError("table sensitivity must start at f(0) = 0")
            if np.any(np.diff(s) <= 0) or np.any(fv[1:] <= 0):
                raise ValueError("table needs increasing s and f > 0 away from 0")
            object.__setattr__(self, "_spline", CubicSpline(s, fv))
            if not math.isfinite(self.c_max) or self.c_max > s[-1]:
                object.__setattr__(self, "c_max", float(s[-1]))

    @classmethod
    def power(cls, p: float) -> "SensitivitySpec":
        return cls("power", float(p))

    @classmethod
    def linear(cls) -> "SensitivitySpec":
        return cls("linear", 1.0)

    @classmethod
    def table(cls, s, f) -> "SensitivitySpec":
        return cls("table", table_s=tuple(map(float, s)), table_f=tuple(map(float, f)))

    @property
    def flat_at_origin(self) -> bool:
        """Whether ``f'(0) = 0``, the hypothesis the conditional-energy theory needs."""
        return self.derivative_at_zero() == 0.0

    def derivative_at_zero(self) -> float:
        if self.kind == "table":
            return float(self._spline(0.0, 1))
        return 1.0 if self.p == 1.0 else 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "table":
            return self._spline(s)
        if self.p == 2.0:
            return s * s
        return s ** self.p

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "table":
            return self._spline(s, 1)
        if self.p == 1.0:
            return np.ones_like(s)
        return self.p * s ** (self.p - 1.0)

    def ratio(self, s):
        """``f(s)/s`` continued by ``f'(0)`` at ``s = 0``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "power":
            if self.p == 2.0:
                return s.copy()
            return s ** (self.p - 1.0)
        if self.kind == "linear":
            return np.ones_like(s)
        out = np.full_like(s, self.derivative_at_zero())
        pos = s > 0
        out[pos] = self._spline(s[pos]) / s[pos]
        return out


def sensitivity_eval(spec: SensitivitySpec, s: float) -> tuple[float, float]:
    if not (0.0 <= s <= spec.c_max):
        raise SensitivityRangeError(f"s={s!r} outside [0, {spec.c_max}]")
    return float(spec(s)), float(spec.derivative(s))


@dataclass(frozen=True)
class SpeciesParams:
    chi: float = 1.0
    eps: float = 1e-3
    c0_inf: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if not self.chi > 0:
            raise ValueError("chi must be positive")
        if not (0.0 <= self.eps):
            raise ValueError("eps must be >= 0")
        if not (self.delta > 0):
            raise ValueError("delta must be positive (c_0 >= delta > 0)")
        if not (self.c0_inf >= self.delta):
            raise ValueError("need c0_inf >= delta")

    @property
    def classical_mode(self) -> bool:
        """Unregularised run (``eps == 0``)."""
        return self.eps == 0.0


# array kernels -------------------------------------------------------------

def _raise_nonpositive(a: np.ndarray, what: str):
    cell = tuple(int(k) for k in np.unravel_index(int(np.argmin(a)), a.shape))
    raise PositivityError(f"{what} must be > 0; found {a[cell]!r} at cell {cell}",
                          cell=cell, value=float(a[cell]))


def drift_faces(c: np.ndarray, n: np.ndarray, chi: float, eps: float,
                dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    """Face values of ``chi * grad c / ((1 + eps n) c)``; zero on boundary faces."""
    if not np.all(c > 0):
        _raise_nonpositive(c, "c")
    nx, ny = c.shape
    vx = np.zeros((nx + 1, ny))
    vy = np.zeros((nx, ny + 1))
    cl, cr = c[:-1], c[1:]
    hm = cl * (2.0 * cr / (cl + cr))  # harmonic mean without underflow
    nf = 0.5 * (n[:-1] + n[1:])
    vx[1:-1] = chi * (cr - cl) / (dx * (1.0 + eps * nf) * hm)
    cl, cr = c[:, :-1], c[:, 1:]
    hm = cl * (2.0 * cr / (cl + cr))  # harmonic mean without underflow
    nf = 0.5 * (n[:, :-1] + n[:, 1:])
    vy[:, 1:-1] = chi * (cr - cl) / (dy * (1.0 + eps * nf) * hm)
    return vx, vy


def upwind_flux(a: np.ndarray, vx: np.ndarray, vy: np.ndarray):
    fx = np.zeros_like(vx)
    fy = np.zeros_like(vy)
    v = vx[1:-1]
    fx[1:-1] = np.where(v > 0, v * a[:-1], v * a[1:])
    v = vy[:, 1:-1]
    fy[:, 1:-1] = np.where(v > 0, v * a[:, :-1], v * a[:, 1:])
    return fx, fy


def outflow_rate(vx: np.ndarray, vy: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Per-cell sum of outgoing face speeds over cell width; upwinding is positive iff ``dt * rate <= 1``."""
    return ((np.maximum(vx[1:], 0.0) - np.minimum(vx[:-1], 0.0)) / dx
            + (np.maximum(vy[:, 1:], 0.0) - np.minimum(vy[:, :-1], 0.0)) / dy)


def transport_diffuse(a: np.ndarray, vx: np.ndarray, vy: np.ndarray, dt: float,
                      dx: float, dy: float, implicit: bool = True) -> np.ndarray:
    """One conservative step of ``a_t + div(a v) = lap a``."""
    fx, fy = upwind_flux(a, vx, vy)
    if implicit:
        star = a - dt * div_faces(fx, fy, dx, dy)
        return shifted_solve(star, dt, (NEUMANN, NEUMANN), (dx, dy))
    return a - dt * div_faces(fx, fy, dx, dy) + dt * lap_neumann(a, dx, dy)


def advance_n_array(n, vx, vy, dt, dx, dy, implicit=True):
    out = transport_diffuse(n, vx, vy, dt, dx, dy, implicit)
    if implicit and np.any(out < 0):
        # the spectral solve can leave -1e-16-sized values where n vanishes; clip those
        # and rescale so the total is unchanged
        floor = -ROUNDOFF_NEG * float(np.max(np.abs(out)))
        if np.all(out >= floor):
            before = float(np.sum(out))
            out = np.maximum(out, 0.0)
            after = float(np.sum(out))
            if after > 0:
                out *= before / after
    if np.any(out < 0):
        cell = tuple(int(k) for k in np.unravel_index(int(np.argmin(out)), out.shape))
        rate = float(np.max(outflow_rate(vx, vy, dx, dy)))
        safe = 0.5 / rate if rate > 0 else 0.5 * dt
        raise PositivityError(f"n went negative ({out[cell]:.3e}) at cell {cell}",
                              cell=cell, value=float(out[cell]), suggested_dt=min(0.5 * dt, safe))
    return out


def advance_c_array(c, n, ux, uy, spec: SensitivitySpec, dt, dx, dy, implicit=True):
    if not np.all(c > 0):
        _raise_nonpositive(c, "c")
    star = transport_diffuse(c, ux, uy, dt, dx, dy, implicit)
    if not np.all(star > 0):
        cell = tuple(int(k) for k in np.unravel_index(int(np.argmin(star)), star.shape))
        raise PositivityError(f"c lost positivity in transport at cell {cell}",
                              cell=cell, value=float(star[cell]), suggested_dt=0.5 * dt)
    return star / (1.0 + dt * n * spec.ratio(star))


def log_transform_array(c: np.ndarray, c0_inf: float) -> np.ndarray:
    if not np.all(c > 0):
        _raise_nonpositive(c, "c")
    return -np.log(c / c0_inf)


# field-level API -----------------------------------------------------------

def taxis_drift(c: ScalarField, n: ScalarField, params: SpeciesParams) -> FaceField:
    g = c.grid
    vx, vy = drift_faces(c.values, n.values, params.chi, params.eps, g.dx, g.dy)
    return FaceField(g, vx, vy)


def _zero_velocity(grid: GridSpec) -> MacVelocity:
    return MacVelocity(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))


def advance_n(n: ScalarField, drift: FaceField, u: MacVelocity | None, dt: float,
              implicit: bool = True) -> ScalarField:
    """Conservative upwind step for ``n`` with face velocity ``drift + u``."""
    g = n.grid
    if np.any(n.values < 0):
        raise PositivityError("input n has negative cells")
    u = u if u is not None else _zero_velocity(g)
    vx = drift.x + u.x
    vy = drift.y + u.y
    return ScalarField(g, advance_n_array(n.values, vx, vy, dt, g.dx, g.dy, implicit))


def advance_c(c: ScalarField, n: ScalarField, u: MacVelocity | None, spec: SensitivitySpec,
              dt: float, implicit: bool = True) -> ScalarField:
    g = c.grid
    u = u if u is not None else _zero_velocity(g)
    return ScalarField(g, advance_c_array(c.values, n.values, u.x, u.y, spec, dt, g.dx, g.dy, implicit))


def log_transform(c: ScalarField, c0_inf: float, tol: float = 1e-12) -> ScalarField:
    if np.any(c.values > c0_inf * (1.0 + tol)):
        raise ValueError(f"c exceeds c0_inf={c0_inf} beyond tolerance")
    return ScalarField(c.grid, log_transform_array(c.values, c0_inf))
