"""Simulation configuration and the named initial-data generators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fluid import FLUID_MODES, FluidParams, project, velocity_from_streamfunction
from .grid import GridSpec, MacVelocity, ScalarField
from .state import State
from .taxis import SensitivitySpec, SpeciesParams

N_PROFILES = ("cosine", "constant", "bump", "random")
C_PROFILES = ("constant", "cosine", "bump", "random")
U_PROFILES = ("zero", "vortex")
PHI_PROFILES = ("zero", "linear_y", "linear_x")


class ConfigError(ValueError):
    pass


class InitialDataError(ConfigError):
    pass


@dataclass(frozen=True)
class FluidConfig:
    mode: str = "navier_stokes"
    phi: str = "linear_y"
    gravity: float = 0.1
    poisson_tol: float = 1e-10
    viscous: str = "crank_nicolson"

    def __post_init__(self):
        if self.mode not in FLUID_MODES:
            raise ConfigError(f"fluid.mode must be one of {FLUID_MODES}")
        if self.phi not in PHI_PROFILES:
            raise ConfigError(f"fluid.phi must be one of {PHI_PROFILES}")

    def phi_field(self, grid: GridSpec) -> ScalarField | None:
        if self.phi == "zero" or self.gravity == 0.0:
            return None
        x, y = grid.centers()
        return ScalarField(grid, self.gravity * (y if self.phi == "linear_y" else x))

    def phi_grad_sup(self) -> float:
        return 0.0 if self.phi == "zero" else abs(self.gravity)

    def params(self, grid: GridSpec) -> FluidParams:
        return FluidParams(self.mode, self.phi_field(grid), self.poisson_tol, self.viscous)


@dataclass(frozen=True)
class InitConfig:
    n: str = "cosine"
    n_mean: float = 1.0
    n_amp: float = 0.5
    n_mode: int = 1
    c: str = "constant"
    c_value: float = 1.0
    c_amp: float = 0.5
    u: str = "vortex"
    u_amp: float = 0.1
    u_mode: int = 1
    bump_width: float = 0.1

    def __post_init__(self):
        if self.n not in N_PROFILES:
            raise ConfigError(f"init.n must be one of {N_PROFILES}")
        if self.c not in C_PROFILES:
            raise ConfigError(f"init.c must be one of {C_PROFILES}")
        if self.u not in U_PROFILES:
            raise ConfigError(f"init.u must be one of {U_PROFILES}")


@dataclass(frozen=True)
class RunConfig:
    t_end: float = 50.0
    dt_max: float = 5e-4
    cfl_safety: float = 0.5
    report_every: int = 100
    seed: int = 0
    implicit_diffusion: bool = True
    snapshot_dt: float = 0.0
    stop_on_stabilization: bool = False
    stabilization_fraction: float = 0.01
    grace: float = 0.0
    conditional: bool = False
    track: bool = True
    max_halvings: int = 6
    eps_list: tuple = ()

    def __post_init__(self):
        if not (0.0 < self.cfl_safety < 1.0):
            raise ConfigError("run.cfl_safety must lie in (0, 1)")
        if not (self.t_end >= 0.0):
            raise ConfigError("run.t_end must be >= 0")
        if not (self.dt_max > 0.0):
            raise ConfigError("run.dt_max must be > 0")
        if self.report_every < 1:
            raise ConfigError("run.report_every must be >= 1")
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))


@dataclass(frozen=True)
class SimConfig:
    grid: GridSpec = field(default_factory=lambda: GridSpec(64, 64))
    species: SpeciesParams = field(default_factory=SpeciesParams)
    sensitivity: SensitivitySpec = field(default_factory=lambda: SensitivitySpec.power(2.0))
    fluid: FluidConfig = field(default_factory=FluidConfig)
    init: InitConfig = field(default_factory=InitConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def with_(self, **sections) -> "SimConfig":
        """Copy with whole sections or ``section__key=value`` overrides."""
        direct = {k: v for k, v in sections.items() if "__" not in k}
        cfg = replace(self, **direct)
        nested: dict[str, dict] = {}
        for k, v in sections.items():
            if "__" in k:
                sec, key = k.split("__", 1)
                nested.setdefault(sec, {})[key] = v
        for sec, kv in nested.items():
            cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **kv)})
        return cfg


# initial data --------------------------------------------------------------

def _smooth_random(grid: GridSpec, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    x, y = grid.centers()
    X, Y = x / grid.lx, y / grid.ly
    out = np.zeros(grid.shape)
    for k in range(modes):
        for l in range(modes):
            if k + l == 0:
                continue
            out += rng.standard_normal() / (k + l) ** 2 * np.cos(k * np.pi * X) * np.cos(l * np.pi * Y)
    return out / max(float(np.max(np.abs(out))), 1e-300)


def initial_n(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    g, ini = cfg.grid, cfg.init
    x, y = g.centers()
    X, Y = x / g.lx, y / g.ly
    k = ini.n_mode
    if ini.n == "constant":
        return np.full(g.shape, ini.n_mean)
    if ini.n == "cosine":
        return ini.n_mean + ini.n_amp * np.cos(2 * np.pi * k * X) * np.cos(2 * np.pi * k * Y)
    if ini.n == "bump":
        b = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / (2 * ini.bump_width ** 2))
        b = (1.0 - ini.n_amp) + ini.n_amp * b / b.mean()
        return ini.n_mean * b
    return ini.n_mean * (1.0 + ini.n_amp * _smooth_random(g, rng))


def initial_c(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    g, ini = cfg.grid, cfg.init
    x, y = g.centers()
    X, Y = x / g.lx, y / g.ly
    if ini.c == "constant":
        return np.full(g.shape, ini.c_value)
    if ini.c == "cosine":
        prof = (1.0 + ini.c_amp * np.cos(2 * np.pi * X) * np.cos(2 * np.pi * Y)) / (1.0 + ini.c_amp)
        return ini.c_value * prof
    if ini.c == "bump":
        b = np.exp(-((X - 0.5) ** 2 + (Y - 0.5) ** 2) / (2 * ini.bump_width ** 2))
        return ini.c_value * ((1.0 - ini.c_amp) + ini.c_amp * b)
    r = _smooth_random(g, rng)
    return ini.c_value * (1.0 + ini.c_amp * r) / (1.0 + ini.c_amp)


def initial_u(cfg: SimConfig) -> MacVelocity:
    g, ini = cfg.grid, cfg.init
    if ini.u == "zero" or ini.u_amp == 0.0 or cfg.fluid.mode == "none":
        return MacVelocity(g, np.zeros((g.nx + 1, g.ny)), np.zeros((g.nx, g.ny + 1)))
    m = ini.u_mode

    def psi(x, y):
        return np.sin(m * np.pi * x / g.lx) ** 2 * np.sin(m * np.pi * y / g.ly) ** 2

    u = velocity_from_streamfunction(g, psi)
    scale = ini.u_amp / u.max_abs()
    ux, uy = u.x * scale, u.y * scale
    # project at load so u0 is divergence-free to solver precision
    ux, uy, _ = project(ux, uy, 1.0, g.dx, g.dy, cfg.fluid.poisson_tol)
    return MacVelocity(g, ux, uy)


def initial_state(cfg: SimConfig) -> State:
    """Build ``(n0, c0, u0)`` and enforce the admissibility conditions on the data."""
    rng = np.random.default_rng(cfg.run.seed)
    n = initial_n(cfg, rng)
    c = initial_c(cfg, rng)
    if not np.all(np.isfinite(n)) or not np.all(n > 0):
        raise InitialDataError("n_0 must be positive with finite int ln n_0")
    delta = cfg.species.delta
    if float(np.min(c)) < delta * (1.0 - 1e-12):
        raise InitialDataError(
            f"c_0 >= delta violated: min c_0 = {float(np.min(c)):.6g} < delta = {delta:.6g}")
    if float(np.max(c)) > cfg.species.c0_inf * (1.0 + 1e-12):
        raise InitialDataError(
            f"c0_inf = {cfg.species.c0_inf} is below sup c_0 = {float(np.max(c)):.6g}")
    return State(cfg.grid, 0.0, n, c, initial_u(cfg))


def initial_mass(cfg: SimConfig) -> float:
    s = initial_state(cfg)
    return float(np.add.reduce(s.n.ravel())) * cfg.grid.cell_volume


def reference_config() -> SimConfig:
    """Unit square, 64^2, chi = 1, f(s) = s^2, eps = 1e-3, t_end = 50."""
    return SimConfig()


__all__ = ["SimConfig", "FluidConfig", "InitConfig", "RunConfig", "ConfigError",
           "InitialDataError", "initial_state", "reference_config"]
