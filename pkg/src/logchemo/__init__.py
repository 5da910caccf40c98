"""Positivity-preserving finite-volume solver for log-sensitivity chemotaxis coupled to incompressible flow."""

from .config import (ConfigError, FluidConfig, InitConfig, InitialDataError, RunConfig,
                     SimConfig, initial_state, reference_config)
from .driver import (RunSummary, SimulationAborted, Simulator, cfl_dt, epsilon_family,
                     eventual_smallness_search, run, step)
from .grid import GridSpec, MacVelocity, ScalarField
from .state import State
from .taxis import SensitivitySpec, SpeciesParams

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FluidConfig", "InitConfig", "InitialDataError", "RunConfig", "SimConfig",
    "initial_state", "reference_config", "RunSummary", "SimulationAborted", "Simulator",
    "cfl_dt", "epsilon_family", "eventual_smallness_search", "run", "step", "GridSpec",
    "MacVelocity", "ScalarField", "State", "SensitivitySpec", "SpeciesParams",
]
