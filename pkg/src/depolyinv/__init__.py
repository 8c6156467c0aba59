"""Continuum approximations and initial-condition inversion for depolymerization.

Submodules
----------
config          parameters, grids, time series, initial data
becker_doring   discrete depolymerization system
asymptotic      transport and advection-diffusion models
observation     boundary and moment observations, noise
estimation      Kalman filter, variational oracle, involution map
experiments     convergence, observability and reconstruction drivers
"""

from .config import (ConfigError, Grid, GridFunction, ModelConfig, NumericalError, TimeSeries,
                     discrete_norm_2eps, gaussian_initial_condition, make_grid)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "Grid",
    "GridFunction",
    "ModelConfig",
    "NumericalError",
    "TimeSeries",
    "discrete_norm_2eps",
    "gaussian_initial_condition",
    "make_grid",
]
