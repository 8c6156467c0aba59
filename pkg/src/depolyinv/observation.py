"""Linear observations of continuum states, noise models and moment-ODE checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .asymptotic import MODEL_KINDS, ModelTrajectory
from .config import ConfigError, Grid, ModelConfig, TimeSeries, _readonly


@dataclass(frozen=True)
class ObservationOperator:
    """Row ``w`` with ``y = w . u``."""

    kind: str
    weights: np.ndarray
    order: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))

    def __call__(self, u) -> float:
        return float(self.weights @ np.asarray(u))

    @property
    def tag(self) -> str:
        return f"moment{self.order}" if self.kind == "moment" else self.kind


def observation_row(kind: str, k: int | None, grid: Grid) -> ObservationOperator:
    """Boundary trace ``u(0)`` or rectangle-rule moment ``sum h x_i**k u_i``.

    The moment rule uses left nodes, matching the cell interpolant of the
    discrete sizes; the Dirichlet node gets weight zero.
    """
    n = grid.n_nodes
    if kind == "boundary":
        w = np.zeros(n)
        w[0] = 1.0
        return ObservationOperator("boundary", w)
    if kind == "moment":
        if k not in (0, 1, 2):
            raise ConfigError(f"moment order {k!r} unsupported (use 0, 1 or 2)")
        w = grid.h * grid.x**k
        w[-1] = 0.0
        return ObservationOperator("moment", w, k)
    raise ConfigError(f"unknown observation kind {kind!r}")


def observe_trajectory(traj: ModelTrajectory, op: ObservationOperator) -> TimeSeries:
    states = np.asarray(traj.states)
    if states.shape[1] != op.weights.size:
        raise ConfigError("observation row and states have different sizes")
    return TimeSeries(traj.t0, traj.dt, states @ op.weights, op.kind, op.order)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise with std ``relative_amplitude * max|y|``."""

    relative_amplitude: float = 0.0
    seed: int = 0
    clip_negative: bool = False

    def __post_init__(self):
        if self.relative_amplitude < 0:
            raise ConfigError("noise amplitude must be >= 0")


def add_noise(series: TimeSeries, spec: NoiseSpec) -> TimeSeries:
    """Seeded additive noise; clipped samples are set to zero, not dropped."""
    y = np.asarray(series.values)
    if spec.relative_amplitude == 0:
        out = y.copy()
    else:
        rng = np.random.default_rng(spec.seed)
        scale = spec.relative_amplitude * (np.max(np.abs(y)) if y.size else 0.0)
        out = y + scale * rng.standard_normal(y.size)
    if spec.clip_negative:
        out = np.where(out < 0, 0.0, out)
    return series.with_values(out)


def moment_ode_residual(traj: ModelTrajectory, config: ModelConfig, model_kind: str,
                        k: int) -> TimeSeries:
    """Residual of the closed moment equation satisfied by the continuum model.

    Time derivatives are centered, second-order one-sided at the ends.
    """
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    states = np.asarray(traj.states)
    if states.shape[0] < 3:
        raise ConfigError("need at least 3 snapshots")
    grid = traj.grid
    b, e = config.b, config.eps
    mu = {j: states @ observation_row("moment", j, grid).weights for j in (0, 1, 2)}
    trace = states[:, 0]

    def ddt(v):
        return np.gradient(v, traj.dt, edge_order=2)

    if model_kind == "transport":
        if k == 0:
            r = ddt(mu[0]) + b * trace
        elif k == 1:
            r = ddt(mu[1]) + b * mu[0]
        else:
            raise ConfigError(f"no transport moment equation for k={k}")
    else:
        if k == 0:
            r = ddt(mu[0]) + b * trace + 0.5 * e * ddt(trace)
        elif k == 1:
            r = ddt(mu[1]) + b * mu[0] - 0.5 * e * b * trace
        elif k == 2:
            r = ddt(mu[2]) + 2 * b * mu[1] - e * b * mu[0]
        else:
            raise ConfigError(f"no advection-diffusion moment equation for k={k}")
    return TimeSeries(traj.t0, traj.dt, r, "other")


def series_to_csv(series: TimeSeries, path) -> Path:
    """Columns ``t, value, kind``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "kind"])
        for t, v in zip(series.times, series.values):
            w.writerow([repr(float(t)), repr(float(v)), series.tag])
    return path


def series_from_csv(path) -> TimeSeries:
    """Read a ``t, value, kind`` file; samples must be uniformly spaced."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no samples")
    missing = {"t", "value"} - set(rows[0])
    if missing:
        raise ConfigError(f"{path}: missing columns {sorted(missing)}")
    t = np.array([float(r["t"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    tags = {r.get("kind") or "other" for r in rows}
    if len(tags) != 1:
        raise ConfigError(f"{path}: mixed series kinds {sorted(tags)}")
    kind, order = TimeSeries.parse_tag(tags.pop())
    if t.size < 2:
        raise ConfigError(f"{path}: need at least two samples")
    dt = (t[-1] - t[0]) / (t.size - 1)
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=1e-12):
        raise ConfigError(f"{path}: samples are not uniformly spaced")
    return TimeSeries(float(t[0]), float(dt), v, kind, order)
