"""Uniform rectangular grid, cell/face containers and discrete calculus.

Scalars live at cell centres with a one-cell Neumann halo; vector fluxes and
velocities live on cell faces (MAC layout). Arrays are indexed ``[i, j]`` with
``i`` running along x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    pass


class NonFiniteFieldError(GridError):
    def __init__(self, location: tuple[int, int], value: float):
        self.location = location
        self.value = value
        super().__init__(f"non-finite value {value!r} at cell {location}")


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise GridError(f"need nx, ny >= 4, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise GridError("domain edge lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinate arrays of shape ``(nx, ny)``."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def x_faces(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx + 1) * self.dx
        y = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def y_faces(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) + 0.5) * self.dx
        y = np.arange(self.ny + 1) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def vertices(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.nx + 1) * self.dx
        y = np.arange(self.ny + 1) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def refined(self, factor: int) -> "GridSpec":
        return GridSpec(self.nx * factor, self.ny * factor, self.lx, self.ly)


def _first_bad(values: np.ndarray):
    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        loc = tuple(int(k) for k in bad[0])
        return loc, float(values[loc])
    return None


def check_finite(values: np.ndarray) -> None:
    bad = _first_bad(values)
    if bad is not None:
        raise NonFiniteFieldError(*bad)


@dataclass(frozen=True)
class ScalarField:
    """Cell-averaged scalar; ``ghosted`` is the ``(nx+2, ny+2)`` haloed copy once filled."""

    grid: GridSpec
    values: np.ndarray
    ghosted: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise GridError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: GridSpec, func) -> "ScalarField":
        x, y = grid.centers()
        return cls(grid, np.broadcast_to(func(x, y), grid.shape).astype(float))


@dataclass(frozen=True)
class FaceField:
    """Face-centred vector field: ``x`` on x-faces ``(nx+1, ny)``, ``y`` on y-faces ``(nx, ny+1)``."""

    grid: GridSpec
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        g = self.grid
        fx = np.asarray(self.x, dtype=float)
        fy = np.asarray(self.y, dtype=float)
        if fx.shape != (g.nx + 1, g.ny) or fy.shape != (g.nx, g.ny + 1):
            raise GridError(f"bad face shapes {fx.shape}, {fy.shape} for grid {g.shape}")
        object.__setattr__(self, "x", fx)
        object.__setattr__(self, "y", fy)

    @classmethod
    def zeros(cls, grid: GridSpec):
        return cls(grid, np.zeros((grid.nx + 1, grid.ny)), np.zeros((grid.nx, grid.ny + 1)))

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(self.x))), float(np.max(np.abs(self.y))))


@dataclass(frozen=True)
class MacVelocity(FaceField):
    """Staggered velocity with no-slip walls: boundary-face normal components are zero."""

    def __post_init__(self):
        super().__post_init__()
        if (np.any(self.x[0] != 0.0) or np.any(self.x[-1] != 0.0)
                or np.any(self.y[:, 0] != 0.0) or np.any(self.y[:, -1] != 0.0)):
            raise GridError("no-slip violated: boundary-face velocity must be exactly zero")

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.x) or np.any(self.y))


# array kernels -------------------------------------------------------------

def pad_neumann(a: np.ndarray) -> np.ndarray:
    return np.pad(a, 1, mode="edge")


def grad_x(a: np.ndarray, dx: float) -> np.ndarray:
    nx, ny = a.shape
    g = np.zeros((nx + 1, ny))
    g[1:-1] = (a[1:] - a[:-1]) / dx
    return g


def grad_y(a: np.ndarray, dy: float) -> np.ndarray:
    nx, ny = a.shape
    g = np.zeros((nx, ny + 1))
    g[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / dy
    return g


def div_faces(fx: np.ndarray, fy: np.ndarray, dx: float, dy: float) -> np.ndarray:
    return (fx[1:] - fx[:-1]) / dx + (fy[:, 1:] - fy[:, :-1]) / dy


def lap_neumann(a: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """5-point Laplacian with mirrored (zero-flux) halo."""
    out = np.zeros_like(a)
    d = (a[1:] - a[:-1]) / (dx * dx)
    out[:-1] += d
    out[1:] -= d
    d = (a[:, 1:] - a[:, :-1]) / (dy * dy)
    out[:, :-1] += d
    out[:, 1:] -= d
    return out


def total(a: np.ndarray) -> float:
    # np.add.reduce over a contiguous 1-D buffer is pairwise and order-fixed
    return float(np.add.reduce(np.ascontiguousarray(a).ravel()))


# public operators ----------------------------------------------------------

def fill_ghost_neumann(f: ScalarField) -> ScalarField:
    check_finite(f.values)
    return ScalarField(f.grid, f.values, pad_neumann(f.values))


def gradient(f: ScalarField) -> FaceField:
    g = f.grid
    if f.ghosted is not None:
        a = f.ghosted
        gx = (a[1:, 1:-1] - a[:-1, 1:-1]) / g.dx
        gy = (a[1:-1, 1:] - a[1:-1, :-1]) / g.dy
        return FaceField(g, gx, gy)
    return FaceField(g, grad_x(f.values, g.dx), grad_y(f.values, g.dy))


def divergence(flux: FaceField) -> ScalarField:
    g = flux.grid
    return ScalarField(g, div_faces(flux.x, flux.y, g.dx, g.dy))


def laplacian(f: ScalarField) -> ScalarField:
    return divergence(gradient(f))


def integrate(f: ScalarField | np.ndarray, grid: GridSpec | None = None) -> float:
    """Midpoint quadrature with pairwise summation."""
    if isinstance(f, ScalarField):
        return total(f.values) * f.grid.cell_volume
    if grid is None:
        raise GridError("grid required when integrating a raw array")
    return total(f) * grid.cell_volume


def face_inner(a: FaceField, b: FaceField) -> float:
    """Sum over faces of ``a.b`` times the cell volume (boundary faces carry zero weight here)."""
    g = a.grid
    return (total(a.x * b.x) + total(a.y * b.y)) * g.cell_volume
