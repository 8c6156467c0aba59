"""Constant-rate depolymerization (Becker-Doring without polymerization).

Sizes run from ``i0`` to ``n_poly``; a polymer of size ``i > i0`` sheds one
monomer at rate ``b``. Polymers of size ``i0`` are inert and not observed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .config import (ConfigError, Grid, GridFunction, ModelConfig, TimeSeries,
                     _readonly, make_grid)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Concentrations ``C_i`` for ``i = i0..i0+len-1`` plus the monomer pool."""

    i0: int
    concentrations: np.ndarray
    monomer: float = 0.0

    def __post_init__(self):
        c = _readonly(self.concentrations)
        if c.ndim != 1 or c.size < 2:
            raise ConfigError("need at least two polymer sizes")
        if np.any(c < 0) or self.monomer < 0:
            raise ConfigError("concentrations must be nonnegative")
        object.__setattr__(self, "concentrations", c)

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(self.i0, self.i0 + self.concentrations.size)

    @property
    def n_poly(self) -> int:
        return self.i0 + self.concentrations.size - 1

    @property
    def polymer_count(self) -> float:
        return float(self.concentrations.sum())

    @property
    def total_mass(self) -> float:
        return float(self.monomer + np.dot(self.sizes, self.concentrations))

    @classmethod
    def zeros(cls, config: ModelConfig) -> "DiscreteDistribution":
        return cls(config.i0, np.zeros(config.n_poly - config.i0 + 1))


def distribution_from_profile(u0, config: ModelConfig) -> DiscreteDistribution:
    """Sample a size profile onto the discrete sizes: ``C_{i0+1+j} = u0(j eps)``.

    ``u0`` is a :class:`GridFunction` (linearly interpolated) or a callable of
    the scaled size ``x``. ``C_{i0}`` and the monomer pool start empty.
    """
    if config.eps <= 0:
        raise ConfigError("sampling a profile onto sizes needs eps > 0")
    n_cells = config.n_poly - config.i0
    x = config.eps * np.arange(n_cells)
    vals = np.asarray(u0(x), dtype=np.float64)
    conc = np.concatenate([[0.0], np.clip(vals, 0.0, None)])
    return DiscreteDistribution(config.i0, conc)


@dataclass(frozen=True)
class BDTrajectory:
    """Snapshots every ``store_every`` steps of size ``dtau``."""

    config: ModelConfig
    initial: DiscreteDistribution
    concentrations: np.ndarray  # (n_snap, n_species)
    monomer: np.ndarray
    store_every: int = 1
    n_steps: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "concentrations", _readonly(self.concentrations))
        object.__setattr__(self, "monomer", _readonly(self.monomer))

    @property
    def dtau_stored(self) -> float:
        return self.config.dtau * self.store_every

    @property
    def times(self) -> np.ndarray:
        return self.dtau_stored * np.arange(self.concentrations.shape[0])

    @property
    def sizes(self) -> np.ndarray:
        return self.initial.sizes

    def __len__(self):
        return self.concentrations.shape[0]

    def snapshot(self, n: int) -> DiscreteDistribution:
        return DiscreteDistribution(self.initial.i0, np.clip(self.concentrations[n], 0, None),
                                    max(float(self.monomer[n]), 0.0))

    def polymer_counts(self) -> np.ndarray:
        return self.concentrations.sum(axis=1)

    def total_masses(self) -> np.ndarray:
        return self.monomer + self.concentrations @ self.sizes

    def to_csv(self, path) -> Path:
        """Columns ``tau, C, C_{i0}, ..., C_{n_poly}``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "C"] + [f"C_{i}" for i in self.sizes])
            for t, m, row in zip(self.times, self.monomer, self.concentrations):
                w.writerow([repr(float(t)), repr(float(m))] + [repr(float(v)) for v in row])
        return path


def default_store_every(config: ModelConfig) -> int:
    """Steps between snapshots so the stored cadence equals ``dt`` after rescaling."""
    if config.eps <= 0:
        return 1
    m = config.dt / (config.eps * config.dtau)
    return max(1, int(round(m)))


def simulate_bd(config: ModelConfig, init: DiscreteDistribution, store_every: int | None = None,
                n_steps: int | None = None) -> BDTrajectory:
    """Explicit Euler integration of the depolymerization system over ``[0, calT]``."""
    rate = config.b * config.dtau
    if rate > 1.0 + 1e-12:
        raise ConfigError(f"b*dtau = {rate:g} exceeds 1; the scheme would lose positivity")
    if init.i0 != config.i0 or init.n_poly != config.n_poly:
        raise ConfigError("initial distribution does not match config sizes")
    if store_every is None:
        store_every = default_store_every(config)
    if store_every < 1:
        raise ConfigError("store_every must be >= 1")
    if n_steps is None:
        n_steps = config.n_bd_steps
    snaps, mono = kernels.bd_run(np.ascontiguousarray(init.concentrations), float(init.monomer),
                                 float(rate), int(n_steps), int(store_every))
    return BDTrajectory(config, init, snaps, mono, int(store_every), int(n_steps))


def bd_exact(init: DiscreteDistribution, b: float, tau: float) -> np.ndarray:
    """Closed-form solution of the time-continuous system at ``tau`` (sizes above ``i0``).

    With constant rates each polymer performs a Poisson walk down in size, so
    ``C_i(tau) = sum_j C_{i+j}(0) P[Poisson(b tau) = j]``.
    """
    c0 = np.asarray(init.concentrations[1:], dtype=np.float64)
    n = c0.size
    lam = b * tau
    j = np.arange(n)
    if lam == 0:
        return c0.copy()
    from scipy.special import gammaln
    w = np.exp(-lam + j * math.log(lam) - gammaln(j + 1))
    return np.array([np.dot(c0[i:], w[: n - i]) for i in range(n)])


def bd_moments(traj: BDTrajectory, k: int) -> TimeSeries:
    """``M_k = sum_{i >= i0+1} i**k C_i`` at every snapshot (time in ``tau``)."""
    if k not in (0, 1, 2):
        raise ConfigError(f"moment order {k} unsupported (use 0, 1 or 2)")
    if len(traj) == 0:
        raise ConfigError("empty trajectory")
    sizes = traj.sizes[1:].astype(np.float64)
    vals = traj.concentrations[:, 1:] @ sizes**k
    return TimeSeries(0.0, traj.dtau_stored, vals, "moment", k)


def bd_boundary_trace(traj: BDTrajectory) -> TimeSeries:
    """Smallest observed size ``C_{i0+1}`` at every snapshot (time in ``tau``)."""
    return TimeSeries(0.0, traj.dtau_stored, traj.concentrations[:, 1], "boundary")


def rescale_moments(series: TimeSeries, config: ModelConfig, k: int) -> TimeSeries:
    """``M_k^eps(t) = eps**(k+1) M_k(t / eps)``."""
    if config.eps <= 0:
        raise ConfigError("rescaling needs eps > 0")
    e = config.eps
    return TimeSeries(series.t0 * e, series.dt * e, series.values * e ** (k + 1),
                      series.kind, series.order)


def rescale_boundary(series: TimeSeries, config: ModelConfig) -> TimeSeries:
    """Boundary trace on the rescaled time axis; values are unchanged."""
    if config.eps <= 0:
        raise ConfigError("rescaling needs eps > 0")
    e = config.eps
    return TimeSeries(series.t0 * e, series.dt * e, series.values, series.kind, series.order)


def rescale_interpolant(dist: DiscreteDistribution, config: ModelConfig,
                        grid: Grid | None = None) -> GridFunction:
    """Cell values of the piecewise constant interpolant: node ``j`` carries ``C_{i0+1+j}``.

    The grid spacing must equal ``eps`` so that cells coincide with sizes.
    """
    if config.n_poly * config.eps > config.L * (1 + 1e-12):
        raise ConfigError(f"n_poly*eps = {config.n_poly * config.eps:g} overflows L = {config.L:g}")
    grid = grid or make_grid(config)
    if not math.isclose(grid.h, config.eps, rel_tol=1e-12):
        raise ConfigError("interpolant grid spacing must equal eps")
    vals = np.zeros(grid.n_nodes)
    cells = dist.concentrations[1:]
    n = min(cells.size, grid.n_nodes - 1)
    vals[:n] = cells[:n]
    return GridFunction(grid, vals)
