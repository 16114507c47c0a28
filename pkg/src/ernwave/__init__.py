"""Characteristic evolution of a nonlinear wave equation on extremal Reissner-Nordstrom."""

__version__ = "0.1.0"

from .backend import BACKEND, available_backends  # noqa: E402
from .config import RunConfig, load_config, parse_config, serialize_config  # noqa: E402
from .data import InitialData  # noqa: E402
from .diagnostics import (  # noqa: E402
    epsilon_scaling_report,
    fit_power_law,
    horizon_series,
    weighted_flux,
)
from .evolution import NonlinearityConfig, evolve, evolve_linear  # noqa: E402
from .geometry import BackgroundERN  # noqa: E402
from .grid import EvolutionGrid, GridSpec  # noqa: E402
from .modes import ConfigurationError, build_angular_grid  # noqa: E402

__all__ = [
    "BACKEND",
    "BackgroundERN",
    "ConfigurationError",
    "EvolutionGrid",
    "GridSpec",
    "InitialData",
    "NonlinearityConfig",
    "RunConfig",
    "__version__",
    "available_backends",
    "build_angular_grid",
    "epsilon_scaling_report",
    "evolve",
    "evolve_linear",
    "fit_power_law",
    "horizon_series",
    "load_config",
    "parse_config",
    "serialize_config",
    "weighted_flux",
]
