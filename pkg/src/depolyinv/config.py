"""Shared configuration, grids, time series and canonical initial data."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid model or discretization parameters."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values."""


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelConfig:
    """Physical and discretization parameters.

    ``t`` is the rescaled time ``t = eps * tau``; ``dtau`` and ``calT`` are
    the step and horizon of the discrete (Becker-Doring) model in ``tau``.
    Defaults are the standard advection-diffusion parameter set
    with ``i0 = 2``.
    """

    b: float = 1.0
    eps: float = 1e-2
    L: float = 1.0
    T: float = 1.0
    h: float = 1e-2
    dt: float = 5e-3
    i0: int = 2
    n_poly: int = 100
    dtau: float = 1e-3
    calT: float = 100.0

    def __post_init__(self):
        for name in ("b", "L", "h", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if not (math.isfinite(self.eps) and self.eps >= 0):
            raise ConfigError(f"eps must be >= 0, got {self.eps!r}")
        if self.T < 0 or self.calT < 0 or self.dtau <= 0:
            raise ConfigError("T, calT must be >= 0 and dtau > 0")
        if int(self.i0) != self.i0 or self.i0 < 1:
            raise ConfigError(f"i0 must be an integer >= 1, got {self.i0!r}")
        if int(self.n_poly) != self.n_poly or self.n_poly <= self.i0:
            raise ConfigError(f"n_poly must be an integer > i0, got {self.n_poly!r}")
        ratio = self.L / self.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"L/h must be an integer, got L={self.L}, h={self.h}")
        if self.b * self.dtau > 1.0 + 1e-12:
            raise ConfigError(
                f"b*dtau = {self.b * self.dtau:g} > 1 breaks positivity of the discrete model"
            )

    @property
    def n_intervals(self) -> int:
        return int(round(self.L / self.h))

    @property
    def n_nodes(self) -> int:
        return self.n_intervals + 1

    @property
    def n_steps(self) -> int:
        """Number of continuum time steps on ``[0, T]``."""
        return _count_steps(self.T, self.dt)

    @property
    def n_bd_steps(self) -> int:
        return _count_steps(self.calT, self.dtau)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("i0", "n_poly"):
            if key in kwargs:
                v = kwargs[key]
                if isinstance(v, float) and v.is_integer():
                    kwargs[key] = int(v)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, source) -> "ModelConfig":
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            text = Path(source).read_text()
        else:
            text = source
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        """Short stable hash identifying this configuration."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]


def _count_steps(horizon: float, step: float) -> int:
    n = horizon / step
    return int(math.floor(n + 1e-9))


@dataclass(frozen=True)
class Grid:
    """Uniform nodes ``x_i = i h``, ``i = 0..N``."""

    h: float
    n_intervals: int
    x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.arange(self.n_intervals + 1) * self.h))

    @property
    def n_nodes(self) -> int:
        return self.n_intervals + 1

    @property
    def L(self) -> float:
        return self.n_intervals * self.h


def make_grid(config: ModelConfig) -> Grid:
    """Uniform grid over ``[0, L]`` with ``L/h + 1`` nodes."""
    return Grid(config.h, config.n_intervals)


@dataclass(frozen=True)
class GridFunction:
    """Nodal values on a grid; ``dirichlet`` marks ``u_N = 0``."""

    grid: Grid
    values: np.ndarray
    dirichlet: bool = True

    def __post_init__(self):
        v = _readonly(self.values)
        if v.shape != (self.grid.n_nodes,):
            raise ConfigError(f"expected {self.grid.n_nodes} nodal values, got shape {v.shape}")
        if self.dirichlet and v[-1] != 0.0:
            raise ConfigError("Dirichlet grid function must vanish at x = L")
        object.__setattr__(self, "values", v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def __call__(self, x):
        """Linear interpolation, zero outside ``[0, L]``."""
        return np.interp(x, self.grid.x, self.values, left=0.0, right=0.0)


TIME_SERIES_KINDS = ("boundary", "moment", "norm", "other")


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar series ``v_n`` at ``t0 + n dt``.

    ``order`` is the moment order when ``kind == "moment"``.
    """

    t0: float
    dt: float
    values: np.ndarray
    kind: str = "other"
    order: int | None = None

    def __post_init__(self):
        if self.kind not in TIME_SERIES_KINDS:
            raise ConfigError(f"unknown series kind {self.kind!r}")
        if self.kind == "moment" and self.order is None:
            raise ConfigError("moment series need an order")
        if not self.dt > 0:
            raise ConfigError("series step must be positive")
        v = _readonly(self.values)
        if v.ndim != 1:
            raise ConfigError("series values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise NumericalError("series contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    @property
    def tag(self) -> str:
        return f"moment{self.order}" if self.kind == "moment" else self.kind

    def __len__(self):
        return self.values.size

    def with_values(self, values) -> "TimeSeries":
        return dataclasses.replace(self, values=values)

    @staticmethod
    def parse_tag(tag: str) -> tuple[str, int | None]:
        if tag.startswith("moment"):
            return "moment", int(tag[len("moment"):])
        return tag, None


def discrete_norm_2eps(values, eps: float) -> float:
    """``sqrt(sum eps * v_i**2)``; equals the L2 norm of the cell interpolant."""
    if not eps > 0:
        raise ConfigError("eps must be positive")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return 0.0
    if not np.all(np.isfinite(v)):
        raise NumericalError("non-finite value in discrete norm")
    m = float(np.max(np.abs(v)))
    if m == 0.0:
        return 0.0
    w = v / m  # scale first so squares neither underflow nor overflow
    return m * float(np.sqrt(eps * np.dot(w, w)))


def truncated_gaussian(x, L: float, center: float, sd: float) -> np.ndarray:
    """Gaussian shifted to vanish at ``L`` and scaled by ``1 - g(L)``; zero beyond ``L``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.exp(-((x - center) ** 2) / (2.0 * sd * sd))
    gL = math.exp(-((L - center) ** 2) / (2.0 * sd * sd))
    out = (g - gL) / (1.0 - gL)
    return np.where(x <= L, out, 0.0)


def gaussian_initial_condition(config: ModelConfig, center_index: float,
                               variance_index_units: float) -> GridFunction:
    """Gaussian bump centered at ``eps * center_index``, normalized to sup 1 and zero at ``L``.

    The variance is given in index units, i.e. ``sigma**2 = variance * eps**2``.
    """
    if variance_index_units <= 0:
        raise ConfigError("variance must be positive")
    xc = config.eps * center_index
    if not 0 < xc < config.L:
        raise ConfigError(f"center eps*i = {xc:g} must lie inside (0, L)")
    grid = make_grid(config)
    sigma2 = variance_index_units * config.eps**2
    g = np.exp(-((grid.x - xc) ** 2) / (2.0 * sigma2))
    shifted = g - g[-1]
    if np.any(shifted < 0):
        raise ConfigError("Gaussian dips below its value at L; shift the center left")
    values = shifted / shifted.max()
    values[-1] = 0.0
    return GridFunction(grid, values)
