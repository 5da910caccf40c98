"""Incompressible flow on the MAC grid with buoyancy ``n grad(phi)``.

Each step forms a provisional velocity (upwind conservative advection, viscous
term by Crank-Nicolson or explicitly, buoyancy at faces) and projects it with a
pure-Neumann pressure solve. Walls are no-slip: normal components sit on the
boundary faces and stay zero, tangential components use an antisymmetric halo.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import (GridSpec, MacVelocity, ScalarField, div_faces, grad_x, grad_y,
                   lap_neumann, total)
from .solvers import (DIRICHLET_CELL, DIRICHLET_NODE, NEUMANN, SolverError,
                      conjugate_gradient, neumann_poisson_direct, shifted_solve)

FLUID_MODES = ("navier_stokes", "stokes", "none")


class CompatibilityWarning(UserWarning):
    """Pure-Neumann right-hand side had a nonzero mean; it was removed."""


@dataclass(frozen=True)
class FluidParams:
    mode: str = "navier_stokes"
    phi: ScalarField | None = None
    poisson_tol: float = 1e-10
    viscous: str = "crank_nicolson"

    def __post_init__(self):
        if self.mode not in FLUID_MODES:
            raise ValueError(f"unknown fluid mode {self.mode!r}; expected one of {FLUID_MODES}")
        if not (0.0 < self.poisson_tol <= 1e-6):
            raise ValueError("poisson_tol must lie in (0, 1e-6]")
        if self.viscous not in ("crank_nicolson", "explicit"):
            raise ValueError(f"unknown viscous treatment {self.viscous!r}")


# velocity operators --------------------------------------------------------

def _lap_tangential(a: np.ndarray, h_par: float, h_perp: float, axis: int) -> np.ndarray:
    """Laplacian of interior face values: node-Dirichlet along ``axis``, antisymmetric halo across it."""
    if axis == 1:
        return _lap_tangential(a.T, h_par, h_perp, 0).T
    out = np.empty_like(a)
    # along the normal direction: neighbours beyond the ends are the zero wall faces
    out[:] = -2.0 * a
    out[1:] += a[:-1]
    out[:-1] += a[1:]
    out /= h_par * h_par
    across = -2.0 * a
    across[:, 1:] += a[:, :-1]
    across[:, :-1] += a[:, 1:]
    across[:, 0] -= a[:, 0]
    across[:, -1] -= a[:, -1]
    out += across / (h_perp * h_perp)
    return out


def velocity_laplacian(ux: np.ndarray, uy: np.ndarray, dx: float, dy: float):
    lx = np.zeros_like(ux)
    ly = np.zeros_like(uy)
    lx[1:-1] = _lap_tangential(ux[1:-1], dx, dy, 0)
    ly[:, 1:-1] = _lap_tangential(uy[:, 1:-1], dy, dx, 1)
    return lx, ly


def advection(ux: np.ndarray, uy: np.ndarray, dx: float, dy: float):
    """Conservative upwind ``div(u u)`` on the MAC faces (interior faces only)."""
    nx, ny = ux.shape[0] - 1, ux.shape[1]
    ax = np.zeros_like(ux)
    ay = np.zeros_like(uy)

    a = 0.5 * (ux[:-1] + ux[1:])
    fxx = a * np.where(a > 0, ux[:-1], ux[1:])
    b = 0.5 * (uy[:-1, 1:-1] + uy[1:, 1:-1])
    q = np.where(b > 0, ux[1:-1, :-1], ux[1:-1, 1:])
    fxy = np.zeros((nx - 1, ny + 1))
    fxy[:, 1:-1] = b * q
    ax[1:-1] = (fxx[1:] - fxx[:-1]) / dx + (fxy[:, 1:] - fxy[:, :-1]) / dy

    a = 0.5 * (uy[:, :-1] + uy[:, 1:])
    fyy = a * np.where(a > 0, uy[:, :-1], uy[:, 1:])
    b = 0.5 * (ux[1:-1, :-1] + ux[1:-1, 1:])
    q = np.where(b > 0, uy[:-1, 1:-1], uy[1:, 1:-1])
    fyx = np.zeros((nx + 1, ny - 1))
    fyx[1:-1] = b * q
    ay[:, 1:-1] = (fyy[:, 1:] - fyy[:, :-1]) / dy + (fyx[1:] - fyx[:-1]) / dx
    return ax, ay


def buoyancy(n: np.ndarray, phi: np.ndarray, dx: float, dy: float):
    """Face values of ``n grad(phi)`` with ``n`` averaged onto the face."""
    fx = grad_x(phi, dx)
    fy = grad_y(phi, dy)
    fx[1:-1] *= 0.5 * (n[:-1] + n[1:])
    fy[:, 1:-1] *= 0.5 * (n[:, :-1] + n[:, 1:])
    return fx, fy


def kinetic_energy(ux: np.ndarray, uy: np.ndarray, cell_volume: float) -> float:
    return 0.5 * (total(ux * ux) + total(uy * uy)) * cell_volume


def dissipation(ux: np.ndarray, uy: np.ndarray, dx: float, dy: float) -> float:
    """``-<lap u, u>``: the discrete ``int |grad u|^2`` matching the wall closure."""
    lx, ly = velocity_laplacian(ux, uy, dx, dy)
    return -(total(lx * ux) + total(ly * uy)) * dx * dy


def forcing_power(ux, uy, fx, fy, cell_volume: float) -> float:
    return (total(fx * ux) + total(fy * uy)) * cell_volume


# pressure ------------------------------------------------------------------

def _poisson_array(rhs: np.ndarray, dx: float, dy: float, tol: float,
                   precondition: bool = True, maxiter: int = 5000,
                   warn: bool = True) -> tuple[np.ndarray, list]:
    mean = total(rhs) / rhs.size
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if warn and abs(mean) > 1e-12 * max(scale, 1e-300):
        warnings.warn(f"Poisson right-hand side has mean {mean:.3e}; removing it",
                      CompatibilityWarning, stacklevel=3)
    b = -(rhs - mean)

    def apply_a(x):
        return -lap_neumann(x, dx, dy)

    def project(x):
        return x - total(x) / x.size

    precond = (lambda r: -neumann_poisson_direct(r, (dx, dy))) if precondition else None
    x, hist = conjugate_gradient(apply_a, b, tol, maxiter=maxiter, precond=precond, project=project)
    return project(x), hist


def pressure_poisson(rhs: ScalarField, tol: float = 1e-10, precondition: bool = True,
                     maxiter: int = 5000) -> ScalarField:
    """Mean-zero ``P`` with ``lap P = rhs - mean(rhs)`` under homogeneous Neumann closure.

    Raises :class:`~logchemo.solvers.SolverError` (with residual history) if CG stalls.
    """
    g = rhs.grid
    p, _ = _poisson_array(rhs.values, g.dx, g.dy, tol, precondition, maxiter)
    return ScalarField(g, p)


def project(ux: np.ndarray, uy: np.ndarray, dt: float, dx: float, dy: float, tol: float):
    """Chorin projection; returns the divergence-free faces and the pressure."""
    rhs = div_faces(ux, uy, dx, dy) / dt
    # the divergence of wall-bounded faces sums to zero, so any mean is round-off
    p, _ = _poisson_array(rhs, dx, dy, tol, warn=False)
    return ux - dt * grad_x(p, dx), uy - dt * grad_y(p, dy), p


# step ----------------------------------------------------------------------

def _cn_component(rhs: np.ndarray, dt: float, kinds, spacing) -> np.ndarray:
    return shifted_solve(rhs, 0.5 * dt, kinds, spacing)


def advance_u_array(ux, uy, n, phi, mode: str, dt: float, dx: float, dy: float,
                    tol: float = 1e-10, viscous: str = "crank_nicolson"):
    if mode == "none":
        return np.zeros_like(ux), np.zeros_like(uy), np.zeros_like(n)
    rx = np.zeros_like(ux)
    ry = np.zeros_like(uy)
    if mode == "navier_stokes":
        ax, ay = advection(ux, uy, dx, dy)
        rx -= ax
        ry -= ay
    lx, ly = velocity_laplacian(ux, uy, dx, dy)
    if viscous == "explicit":
        sx = ux + dt * (lx + rx)
        sy = uy + dt * (ly + ry)
    else:
        sx = np.zeros_like(ux)
        sy = np.zeros_like(uy)
        sx[1:-1] = _cn_component(ux[1:-1] + dt * (0.5 * lx[1:-1] + rx[1:-1]), dt,
                                 (DIRICHLET_NODE, DIRICHLET_CELL), (dx, dy))
        sy[:, 1:-1] = _cn_component(uy[:, 1:-1] + dt * (0.5 * ly[:, 1:-1] + ry[:, 1:-1]), dt,
                                    (DIRICHLET_CELL, DIRICHLET_NODE), (dx, dy))
    if phi is not None:
        # added after the viscous solve so a gradient force is removed exactly by the projection
        fx, fy = buoyancy(n, phi, dx, dy)
        sx += dt * fx
        sy += dt * fy
    sx[0] = sx[-1] = 0.0
    sy[:, 0] = sy[:, -1] = 0.0
    return project(sx, sy, dt, dx, dy, tol)


def advance_u(u: MacVelocity, n: ScalarField, params: FluidParams, dt: float):
    """One projected momentum step; returns ``(u_new, P)``."""
    g = n.grid
    phi = params.phi.values if params.phi is not None else None
    ux, uy, p = advance_u_array(u.x, u.y, n.values, phi, params.mode, dt, g.dx, g.dy,
                                params.poisson_tol, params.viscous)
    return MacVelocity(g, ux, uy), ScalarField(g, p)


def interpolate_to_cells(u: MacVelocity) -> tuple[np.ndarray, np.ndarray]:
    return 0.5 * (u.x[:-1] + u.x[1:]), 0.5 * (u.y[:, :-1] + u.y[:, 1:])


def divergence_max(u: MacVelocity) -> float:
    g = u.grid
    return float(np.max(np.abs(div_faces(u.x, u.y, g.dx, g.dy))))


def velocity_from_streamfunction(grid: GridSpec, psi) -> MacVelocity:
    """Discretely divergence-free faces from a vertex stream function vanishing on the walls."""
    xv, yv = grid.vertices()
    s = np.asarray(psi(xv, yv), dtype=float)
    s[0, :] = s[-1, :] = 0.0
    s[:, 0] = s[:, -1] = 0.0
    ux = (s[:, 1:] - s[:, :-1]) / grid.dy
    uy = -(s[1:, :] - s[:-1, :]) / grid.dx
    return MacVelocity(grid, ux, uy)


__all__ = [
    "FluidParams", "CompatibilityWarning", "SolverError", "advance_u", "pressure_poisson",
    "interpolate_to_cells", "kinetic_energy", "dissipation", "forcing_power",
    "velocity_from_streamfunction", "divergence_max",
]
