"""Continuum approximations on ``[0, L]``.

First order: backward transport ``u_t - b u_x = 0``. Second order:
``u_t - b u_x - (b eps / 2) u_xx = 0`` with the absorbing boundary law
``u_t(t, 0) = b u_x(t, 0)`` and ``u(t, L) = 0``. Both are advanced with the
explicit upwind scheme; ``eps = 0`` gives the transport model.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.special
from scipy.sparse.linalg import expm_multiply

from . import kernels
from .config import (ConfigError, Grid, GridFunction, ModelConfig, NumericalError,
                     TimeSeries, _readonly, make_grid)

MODEL_KINDS = ("transport", "advection-diffusion")


class UnstableSchemeWarning(RuntimeWarning):
    pass


def model_config(config: ModelConfig, model_kind: str) -> ModelConfig:
    """Config for the requested model; the transport model drops diffusion."""
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    if model_kind == "transport" and config.eps != 0:
        return config.replace(eps=0.0)
    return config


def stable_dt(config: ModelConfig) -> float:
    """Largest step keeping every update a convex combination: ``h / (b (1 + eps/h))``."""
    return config.h / (config.b * (1.0 + config.eps / config.h))


def stencil_coefficients(config: ModelConfig, dt: float | None = None):
    """``(sub, diag, sup, diag0, sup0)`` of the explicit scheme."""
    dt = config.dt if dt is None else dt
    b, h, e = config.b, config.h, config.eps
    nu = b * dt / h
    kappa = b * e * dt / (2.0 * h * h)
    return kappa, 1.0 - nu - 2.0 * kappa, nu + kappa, 1.0 - nu, nu


@dataclass(frozen=True)
class TransitionMatrix:
    """Dense one-step map ``u^{n+1} = Phi u^n`` (last row zero: Dirichlet at ``L``)."""

    matrix: np.ndarray
    config: ModelConfig
    dt: float
    stable: bool

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(self.matrix))

    @property
    def shape(self):
        return self.matrix.shape

    def to_csv(self, path) -> Path:
        path = Path(path)
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")
        return path


def build_transition(config: ModelConfig, dt: float | None = None) -> TransitionMatrix:
    """Assemble the explicit scheme as a dense matrix.

    A step above :func:`stable_dt` still builds but is flagged unstable.
    """
    dt = config.dt if dt is None else float(dt)
    if dt < 0:
        raise ConfigError("dt must be >= 0")
    n = config.n_nodes
    if n < 2:
        raise ConfigError("need at least two nodes")
    bound = stable_dt(config)
    stable = dt <= bound * (1 + 1e-12)
    if not stable:
        warnings.warn(f"dt = {dt:g} exceeds the stability bound {bound:g}", UnstableSchemeWarning,
                      stacklevel=2)
    sub, diag, sup, diag0, sup0 = stencil_coefficients(config, dt)
    phi = np.zeros((n, n))
    phi[0, 0] = diag0
    phi[0, 1] = sup0
    idx = np.arange(1, n - 1)
    phi[idx, idx - 1] = sub
    phi[idx, idx] = diag
    phi[idx, idx + 1] = sup
    return TransitionMatrix(phi, config, dt, stable)


def step_model(u: GridFunction, phi: TransitionMatrix) -> GridFunction:
    v = np.asarray(u.values)
    if phi.matrix.shape[1] != v.size:
        raise ConfigError(f"state has {v.size} nodes, transition expects {phi.matrix.shape[1]}")
    return GridFunction(u.grid, phi.matrix @ v, dirichlet=True)


@dataclass(frozen=True)
class ModelTrajectory:
    """States stored every ``store_every`` steps; ``dt`` is the stored cadence."""

    grid: Grid
    states: np.ndarray  # (n_snap, n_nodes)
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "states", _readonly(self.states))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.states.shape[0])

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, n) -> GridFunction:
        return GridFunction(self.grid, self.states[n], dirichlet=False)

    def to_csv(self, path) -> Path:
        """Columns ``t, u_0, ..., u_N``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"u_{i}" for i in range(self.grid.n_nodes)])
            for t, row in zip(self.times, self.states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return path


def simulate_model(config: ModelConfig, u0: GridFunction, n_steps: int | None = None,
                   store_every: int = 1, dt: float | None = None) -> ModelTrajectory:
    """Run the explicit scheme with the stencil kernel (no dense matrix)."""
    dt = config.dt if dt is None else dt
    if n_steps is None:
        n_steps = int(math.floor(config.T / dt + 1e-9))
    if u0.grid.n_nodes != config.n_nodes:
        raise ConfigError("initial condition grid does not match config")
    if dt > stable_dt(config) * (1 + 1e-12):
        warnings.warn(f"dt = {dt:g} exceeds the stability bound {stable_dt(config):g}",
                      UnstableSchemeWarning, stacklevel=2)
    coeffs = stencil_coefficients(config, dt)
    init = np.array(u0.values, dtype=np.float64)
    init[-1] = 0.0
    states = kernels.stencil_run(init, *map(float, coeffs), int(n_steps), int(store_every))
    if not np.all(np.isfinite(states)):
        raise NumericalError("explicit scheme produced non-finite values")
    return ModelTrajectory(u0.grid, states, dt * store_every)


def exact_transport_trace(u0: GridFunction, t: float, b: float) -> float:
    """Characteristics: ``u(t, 0) = u0(b t)``, zero once ``b t`` leaves the domain."""
    s = b * t
    if s > u0.grid.L:
        return 0.0
    return float(np.interp(s, u0.grid.x, u0.values))


def transport_solution(u0, t: float, b: float, x) -> np.ndarray:
    """``u(t, x) = u0(x + b t)`` for a callable profile vanishing beyond ``L``."""
    return np.asarray(u0(np.asarray(x) + b * t), dtype=np.float64)


def reference_operator(config: ModelConfig) -> sp.csr_matrix:
    """Second-order accurate semi-discretization of the advection-diffusion model.

    Central differences inside, a second-order one-sided derivative in the
    boundary law at ``x = 0``; unknowns are nodes ``0..N-1``.
    """
    b, h, e = config.b, config.h, config.eps
    n = config.n_intervals
    if n < 3:
        raise ConfigError("reference operator needs at least 3 intervals")
    d = b * e / 2.0
    lower = np.full(n - 1, d / h**2 - b / (2 * h))
    main = np.full(n, -2 * d / h**2)
    upper = np.full(n - 1, d / h**2 + b / (2 * h))
    a = sp.diags([lower, main, upper], [-1, 0, 1], format="lil")
    a[0, 0] = -1.5 * b / h
    a[0, 1] = 2.0 * b / h
    a[0, 2] = -0.5 * b / h
    return a.tocsr()


def reference_solution(config: ModelConfig, u0, t: float) -> np.ndarray:
    """Accurate advection-diffusion solution at time ``t`` on the config grid.

    ``u0`` is a callable profile; time integration uses the action of the
    matrix exponential, so only the spatial error ``O(h^2)`` remains.
    """
    grid = make_grid(config)
    a = reference_operator(config)
    init = np.asarray(u0(grid.x[:-1]), dtype=np.float64)
    u = expm_multiply(a * t, init) if t > 0 else init
    return np.append(u, 0.0)


@dataclass(frozen=True)
class SymmetrizedOperator:
    """Operator of the weighted unknown ``e^{x/eps} u`` in orthonormal coordinates.

    ``stiffness`` assembles the bilinear form and ``mass`` the lumped state
    norm (``h`` per node, plus ``eps/2`` at ``x = 0`` for the boundary
    component). ``matrix = mass^{-1/2} stiffness mass^{-1/2}``.
    """

    matrix: np.ndarray
    stiffness: np.ndarray
    mass: np.ndarray
    config: ModelConfig

    def __post_init__(self):
        for name in ("matrix", "stiffness", "mass"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    def to_coords(self, z) -> np.ndarray:
        return np.sqrt(self.mass) * np.asarray(z, dtype=np.float64)

    def from_coords(self, y) -> np.ndarray:
        return np.asarray(y) / np.sqrt(self.mass)


def symmetrized_forms(config: ModelConfig):
    """Stiffness matrix and lumped mass vector of the symmetrized problem."""
    b, h, e = config.b, config.h, config.eps
    n = config.n_nodes
    k = np.zeros((n, n))
    c = b * e / (2.0 * h)
    for j in range(n - 1):
        k[j, j] += c
        k[j + 1, j + 1] += c
        k[j, j + 1] -= c
        k[j + 1, j] -= c
    mass = np.full(n, h)
    k += np.diag(b / (2.0 * e) * mass)
    k[0, 0] += b / 2.0  # (b/eps) v k with v = sqrt(eps/2) u(0)
    mass[0] += e / 2.0
    # decouple the Dirichlet node
    k[-1, :-1] = 0.0
    k[:-1, -1] = 0.0
    return k, mass


def build_symmetrized(config: ModelConfig) -> SymmetrizedOperator:
    if config.eps <= 0:
        raise ConfigError("symmetrization needs eps > 0")
    k, mass = symmetrized_forms(config)
    s = 1.0 / np.sqrt(mass)
    a = (s[:, None] * k) * s[None, :]
    a = 0.5 * (a + a.T)
    return SymmetrizedOperator(a, k, mass, config)


def weighted_state(u, config: ModelConfig) -> np.ndarray:
    """Nodal ``e^{x/eps} u``; restricted to ``eps >= 0.1`` to stay far from overflow."""
    if config.eps < 0.1:
        raise ConfigError("exponential weights are only formed for eps >= 0.1")
    grid = make_grid(config)
    return np.exp(grid.x / config.eps) * np.asarray(u, dtype=np.float64)


def weighted_log_norm(u, config: ModelConfig) -> float:
    """``log ||e^{x/eps} u||`` in the lumped state norm, computed in log space."""
    if config.eps < 0.1:
        raise ConfigError("exponential weights are only formed for eps >= 0.1")
    grid = make_grid(config)
    _, mass = symmetrized_forms(config)
    u = np.asarray(u, dtype=np.float64)
    nz = u != 0
    if not np.any(nz):
        return -math.inf
    logs = np.log(mass[nz]) + 2.0 * (grid.x[nz] / config.eps + np.log(np.abs(u[nz])))
    return 0.5 * float(scipy.special.logsumexp(logs))


@dataclass(frozen=True)
class LogConvexityResult:
    rayleigh: TimeSeries
    norm: TimeSeries


def log_convexity_series(op: SymmetrizedOperator, z0, T: float, substeps: int) -> LogConvexityResult:
    """Rayleigh quotient ``(A z, z) / |z|^2`` along ``dz/dt = -A z``.

    ``z0`` holds nodal values of the weighted unknown. Each substep applies
    the exact propagator ``expm(-dt A)``, built once.
    """
    y = op.to_coords(z0)
    if not np.any(y):
        raise ConfigError("initial state must be nonzero")
    if substeps < 1 or T <= 0:
        raise ConfigError("need T > 0 and at least one substep")
    dt = T / substeps
    prop = scipy.linalg.expm(-dt * op.matrix)
    a = op.matrix
    f = np.empty(substeps + 1)
    norms = np.empty(substeps + 1)
    for n in range(substeps + 1):
        nn = float(np.dot(y, y))
        f[n] = float(y @ (a @ y)) / nn
        norms[n] = math.sqrt(nn)
        if n < substeps:
            y = prop @ y
    return LogConvexityResult(TimeSeries(0.0, dt, f, "other"), TimeSeries(0.0, dt, norms, "norm"))

