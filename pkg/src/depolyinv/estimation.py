"""Initial-condition reconstruction for the continuum models.

The sequential estimator is a discrete-time Kalman filter whose state is
augmented with the initial-condition estimate ``zeta`` and its sensitivity
``Lambda``. With unit observation covariance it minimizes

    J(zeta) = 1/2 zeta' Pi0^{-1} zeta + 1/2 sum_n dt |y_n - H z_n(zeta)|^2

over the observations ``n = 0..N_T``; :func:`variational_oracle` solves the
same problem by dense normal equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .asymptotic import (MODEL_KINDS, TransitionMatrix, build_transition, model_config)
from .config import (ConfigError, GridFunction, ModelConfig, NumericalError, TimeSeries,
                     _readonly, make_grid)
from .observation import ObservationOperator, observation_row

REGULARIZER_KINDS = ("h1", "l2")


@dataclass(frozen=True)
class Regularizer:
    """Prior covariance ``Pi0`` on the free nodes ``0..N-1``.

    ``precision`` is ``Pi0^{-1}`` on the free nodes; ``pi0`` embeds ``Pi0``
    in the full state with a zero Dirichlet row and column.
    """

    kind: str
    M: float
    delta: float
    alpha: float
    pi0_free: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi0_free", _readonly(self.pi0_free))
        object.__setattr__(self, "precision", _readonly(self.precision))

    @property
    def n_free(self) -> int:
        return self.pi0_free.shape[0]

    @property
    def pi0(self) -> np.ndarray:
        n = self.n_free
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = self.pi0_free
        return out

    @property
    def scale(self) -> float:
        """``M**2 / (alpha delta**2)``."""
        return self.M**2 / (self.alpha * self.delta**2)


def stiffness_a0(config: ModelConfig) -> np.ndarray:
    """``(1/h) tridiag(-1, 2, -1)`` on the free nodes with ``(0,0) = 1/h + eps/2``."""
    n = config.n_intervals
    h = config.h
    a = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
    a[0, 0] = 1.0 / h + 0.5 * config.eps
    return a


def build_regularizer(config: ModelConfig, M: float, delta: float, alpha: float,
                      kind: str | None = None) -> Regularizer:
    """Prior covariance ``(M**2 / (alpha delta**2)) A0^{-1}``.

    ``kind=None`` picks ``h1`` for ``eps > 0`` and ``l2`` otherwise; the
    ``l2`` form uses ``A0 = h Id`` so ``Pi0 = scale / h``.
    """
    for name, v in (("M", M), ("delta", delta), ("alpha", alpha)):
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(f"{name} must be positive, got {v!r}")
    if kind is None:
        kind = "h1" if config.eps > 0 else "l2"
    if kind not in REGULARIZER_KINDS:
        raise ConfigError(f"unknown regularizer kind {kind!r}")
    n = config.n_intervals
    scale = M**2 / (alpha * delta**2)
    if kind == "l2":
        prec = np.eye(n) * (config.h / scale)
        pi0 = np.eye(n) * (scale / config.h)
    else:
        a0 = stiffness_a0(config)
        c, lower = scipy.linalg.cho_factor(a0)  # raises if not SPD
        pi0 = scale * scipy.linalg.cho_solve((c, lower), np.eye(n))
        pi0 = 0.5 * (pi0 + pi0.T)
        prec = a0 / scale
    return Regularizer(kind, float(M), float(delta), float(alpha), pi0, prec)


@dataclass
class KalmanState:
    """Mutable filter state owned by one run."""

    n: int
    z: np.ndarray
    zeta: np.ndarray
    Pi: np.ndarray
    Lam: np.ndarray

    @classmethod
    def initial(cls, reg: Regularizer, prior) -> "KalmanState":
        pi0 = reg.pi0
        return cls(0, np.array(prior, dtype=np.float64), np.zeros(pi0.shape[0]), pi0.copy(),
                   pi0.copy())


@dataclass(frozen=True)
class EstimationResult:
    """Reconstruction ``u0_hat = prior + zeta_hat`` with per-step diagnostics."""

    u0_hat: GridFunction
    zeta: np.ndarray
    innovations: TimeSeries
    criterion: float
    diagnostics: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "zeta", _readonly(self.zeta))


def _symmetrize(P: np.ndarray, n: int, what: str) -> np.ndarray:
    scale = max(np.max(np.abs(P)), 1.0)
    drift = np.max(np.abs(P - P.T)) / scale
    if drift > 1e-10:
        raise NumericalError(f"{what} lost symmetry at step {n} (drift {drift:.3e})")
    return 0.5 * (P + P.T)


def _weights(H) -> np.ndarray:
    return np.asarray(H.weights if isinstance(H, ObservationOperator) else H, dtype=np.float64)


def _phi(phi) -> np.ndarray:
    return np.asarray(phi.matrix if isinstance(phi, TransitionMatrix) else phi, dtype=np.float64)


def _values(y) -> np.ndarray:
    return np.asarray(y.values if isinstance(y, TimeSeries) else y, dtype=np.float64)


def kalman_filter_run(phi, H, reg: Regularizer, y, prior=None, dt: float | None = None,
                      check_psd: bool = False, record: bool = False) -> EstimationResult:
    """Sequential estimate of the initial condition from ``y_0..y_{N_T}``.

    Parameters
    ----------
    phi : TransitionMatrix or ndarray
        One-step map of the model.
    H : ObservationOperator or ndarray
        Observation row.
    reg : Regularizer
    y : TimeSeries or ndarray
        Observations on the model time grid, one per step including ``t = 0``.
    prior : array_like, optional
        Prior initial condition (defaults to zero).
    dt : float, optional
        Step; read from ``phi`` or ``y`` when omitted.
    check_psd : bool
        Verify the smallest eigenvalue of ``Pi`` at every step.
    record : bool
        Keep the corrected ``zeta`` of every step in ``diagnostics["zeta_history"]``.
    """
    P = _phi(phi)
    w = _weights(H)
    yv = _values(y)
    n_state = P.shape[0]
    if P.shape != (n_state, n_state) or w.size != n_state or reg.n_free + 1 != n_state:
        raise ConfigError("transition, observation row and regularizer sizes disagree")
    if dt is None:
        dt = phi.dt if isinstance(phi, TransitionMatrix) else getattr(y, "dt", None)
        if dt is None:
            raise ConfigError("time step unknown; pass dt")
    prior = np.zeros(n_state) if prior is None else np.asarray(
        prior.values if isinstance(prior, GridFunction) else prior, dtype=np.float64)
    st = KalmanState.initial(reg, prior)

    n_obs = yv.size
    innov = np.empty(n_obs)
    hph_pred = np.empty(n_obs)
    hph_corr = np.empty(n_obs)
    gain_norm = np.empty(n_obs)
    min_eig = math.inf
    history = np.empty((n_obs, n_state)) if record else None
    for n in range(n_obs):
        st.n = n
        piH = st.Pi @ w
        hph = float(w @ piH)
        s = dt * hph + 1.0
        if not (math.isfinite(s) and s > 0):
            raise NumericalError(f"innovation covariance {s!r} invalid at step {n}")
        lamH = st.Lam.T @ w
        K = dt * piH / s
        Lg = dt * lamH / s
        r = yv[n] - float(w @ st.z)
        if not math.isfinite(r):
            raise NumericalError(f"non-finite innovation at step {n}")
        innov[n] = r
        hph_pred[n] = hph
        gain_norm[n] = float(np.linalg.norm(K))
        st.z = st.z + K * r
        st.zeta = st.zeta + Lg * r
        if record:
            history[n] = st.zeta
        st.Pi = _symmetrize(st.Pi - np.outer(K, piH), n, "Pi")
        st.Lam = st.Lam - np.outer(K, w @ st.Lam)
        hph_corr[n] = float(w @ st.Pi @ w)
        if check_psd or n == n_obs - 1:
            ev = float(np.linalg.eigvalsh(st.Pi)[0])
            min_eig = min(min_eig, ev / max(np.linalg.norm(st.Pi, 2), 1e-300))
        if n < n_obs - 1:
            st.z = P @ st.z
            st.Pi = _symmetrize(P @ st.Pi @ P.T, n, "Pi")
            st.Lam = P @ st.Lam
    if not np.all(np.isfinite(st.zeta)):
        raise NumericalError("non-finite initial-condition estimate")
    zeta = st.zeta
    u0 = prior + zeta
    u0[-1] = 0.0
    grid_n = n_state - 1
    crit = criterion_value(P, w, reg, yv, prior, zeta, dt)
    diag = {
        "hph_predicted": hph_pred,
        "hph_corrected": hph_corr,
        "gain_norm": gain_norm,
        "min_rel_eig_pi": min_eig,
        "n_obs": n_obs,
    }
    if record:
        diag["zeta_history"] = history
    grid = _grid_like(phi, grid_n)
    return EstimationResult(GridFunction(grid, u0), zeta, TimeSeries(0.0, dt, innov, "other"),
                            crit, diag)


def _grid_like(phi, n_intervals: int):
    from .config import Grid
    if isinstance(phi, TransitionMatrix):
        return make_grid(phi.config)
    return Grid(1.0 / n_intervals, n_intervals)


def observation_matrix(phi, H, n_rows: int) -> np.ndarray:
    """Rows ``H Phi^k`` for ``k = 0..n_rows-1``."""
    P = _phi(phi)
    w = _weights(H).copy()
    psi = np.empty((n_rows, w.size))
    for k in range(n_rows):
        psi[k] = w
        w = w @ P
    return psi


def criterion_value(phi, H, reg: Regularizer, y, prior, zeta, dt: float) -> float:
    """``1/2 zeta' Pi0^{-1} zeta + 1/2 sum dt |y_n - H z_n|^2``."""
    P = _phi(phi)
    w = _weights(H)
    yv = _values(y)
    z = np.asarray(prior, dtype=np.float64) + np.asarray(zeta)
    zf = np.asarray(zeta)[:-1]
    j = 0.5 * float(zf @ reg.precision @ zf)
    for n in range(yv.size):
        j += 0.5 * dt * (yv[n] - float(w @ z)) ** 2
        z = P @ z
    return j


def variational_oracle(phi, H, reg: Regularizer, y, prior=None, dt: float | None = None,
                       max_nodes: int = 200) -> np.ndarray:
    """Dense normal-equation minimizer ``zeta*`` of the filter criterion."""
    P = _phi(phi)
    n_state = P.shape[0]
    if n_state - 1 > max_nodes:
        raise ConfigError(f"{n_state - 1} free nodes exceeds the dense cap {max_nodes}")
    if dt is None:
        dt = phi.dt if isinstance(phi, TransitionMatrix) else getattr(y, "dt", None)
        if dt is None:
            raise ConfigError("time step unknown; pass dt")
    yv = _values(y)
    prior = np.zeros(n_state) if prior is None else np.asarray(
        prior.values if isinstance(prior, GridFunction) else prior, dtype=np.float64)
    psi = observation_matrix(P, H, yv.size)
    resid = yv - psi @ prior
    pf = psi[:, :-1]
    A = reg.precision + dt * pf.T @ pf
    rhs = dt * pf.T @ resid
    sol = scipy.linalg.solve(A, rhs, assume_a="pos")
    check = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(rhs) > 0 and check > 1e-10:
        raise NumericalError(f"normal equations residual {check:.2e}")
    return np.append(sol, 0.0)


def align_series(series: TimeSeries, dt: float, n_obs: int) -> TimeSeries:
    """Linear interpolation of ``series`` onto ``t_n = n dt``, ``n < n_obs``."""
    t = dt * np.arange(n_obs)
    ts = series.times
    tol = 1e-9 * max(1.0, abs(t[-1]))
    if t[-1] > ts[-1] + tol or t[0] < ts[0] - tol:
        raise ConfigError(f"observations cover [{ts[0]:g}, {ts[-1]:g}], model needs "
                          f"[0, {t[-1]:g}]")
    if series.values.size == n_obs and math.isclose(series.dt, dt, rel_tol=1e-9) \
            and abs(series.t0) <= tol:
        return series
    return TimeSeries(0.0, dt, np.interp(t, ts, series.values), series.kind, series.order)


@dataclass(frozen=True)
class Scenario:
    """One reconstruction problem.

    ``config`` carries the model discretization; for ``transport`` its
    ``eps`` is ignored. ``truth`` enables error metrics.
    """

    model_kind: str
    obs_kind: str
    y: TimeSeries
    config: ModelConfig
    M: float = 1.0
    delta: float = 0.1
    alpha: float = 1.0
    moment_order: int | None = None
    reg_kind: str | None = None
    prior: GridFunction | None = None
    truth: GridFunction | None = None


def relative_l2_error(u_hat, u_true, h: float) -> float:
    a = np.asarray(u_hat, dtype=np.float64)
    b = np.asarray(u_true, dtype=np.float64)
    nb = math.sqrt(h * float(b @ b))
    if nb == 0:
        return math.sqrt(h * float(a @ a))
    return math.sqrt(h * float((a - b) @ (a - b))) / nb


def estimate_initial(sc: Scenario) -> EstimationResult:
    """Build ``Phi``, ``H`` and ``Pi0`` for the scenario and run the filter."""
    if sc.model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {sc.model_kind!r}")
    cfg = model_config(sc.config, sc.model_kind)
    grid = make_grid(cfg)
    phi = build_transition(cfg)
    if not phi.stable:
        from .asymptotic import stable_dt
        raise ConfigError(f"dt = {cfg.dt:g} violates the CFL bound stable_dt = {stable_dt(cfg):g}")
    H = observation_row(sc.obs_kind, sc.moment_order, grid)
    reg = build_regularizer(cfg, sc.M, sc.delta, sc.alpha, sc.reg_kind)
    y = align_series(sc.y, cfg.dt, cfg.n_steps + 1)
    prior = np.zeros(grid.n_nodes) if sc.prior is None else np.asarray(sc.prior.values)
    if prior.size != grid.n_nodes:
        raise ConfigError("prior does not match the model grid")
    res = kalman_filter_run(phi, H, reg, y, prior)
    if sc.truth is not None:
        truth = np.asarray(sc.truth.values)
        if truth.size != grid.n_nodes:
            raise ConfigError("ground truth does not match the model grid")
        err = res.u0_hat.values - truth
        metrics = {
            "rel_l2_error": relative_l2_error(res.u0_hat.values, truth, cfg.h),
            "max_abs_error": float(np.max(np.abs(err))),
            "peak_true": float(truth.max()),
            "peak_hat": float(res.u0_hat.values.max()),
        }
        res = EstimationResult(res.u0_hat, res.zeta, res.innovations, res.criterion,
                               res.diagnostics, metrics)
    return res


def involution_map(config: ModelConfig, model_kind: str, u0: GridFunction, t: float,
                   M: float = 1.0, delta: float = 1.0, alpha: float = 1e-4,
                   reg_kind: str | None = None) -> GridFunction:
    """``[Pi0^{-1} + dt Psi_t' Psi_t]^{-1} dt Psi_t' Psi_t u0`` for boundary observation.

    ``Psi_t`` has rows ``H Phi^k`` for ``k < round(t / dt)``; the output tends
    to the observable part of ``u0`` as regularization vanishes.
    """
    cfg = model_config(config, model_kind)
    if t < 0 or t > cfg.T * (1 + 1e-12):
        raise ConfigError(f"t = {t:g} outside [0, T]")
    grid = make_grid(cfg)
    if u0.grid.n_nodes != grid.n_nodes:
        raise ConfigError("u0 does not match the model grid")
    n_rows = int(round(t / cfg.dt))
    if n_rows == 0:
        return GridFunction(grid, np.zeros(grid.n_nodes))
    phi = build_transition(cfg)
    H = observation_row("boundary", None, grid)
    reg = build_regularizer(cfg, M, delta, alpha, reg_kind)
    pf = observation_matrix(phi, H, n_rows)[:, :-1]
    G = cfg.dt * pf.T @ pf
    rhs = G @ np.asarray(u0.values)[:-1]
    sol = scipy.linalg.solve(reg.precision + G, rhs, assume_a="pos")
    return GridFunction(grid, np.append(sol, 0.0))


def _moving_average(v: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return v
    kernel = np.ones(window) / window
    pad = window // 2
    ext = np.pad(v, (pad, window - 1 - pad), mode="edge")
    return np.convolve(ext, kernel, mode="valid")


def transport_moment_inversion(mu: TimeSeries, k: int, b: float, smoothing_window: int = 1,
                               grid=None) -> GridFunction | np.ndarray:
    """Recover ``u0`` from a transport moment by differentiating it ``k+1`` times.

    ``u0(b t) = (-1)**(k+1) mu_k^{(k+1)}(t) / (b**(k+1) k!)``. Each derivative is
    a centered difference (second-order one-sided at the ends), optionally preceded by a
    moving average of ``smoothing_window`` samples. With ``grid`` the result
    is resampled at ``x = b t`` (zero where unobserved); otherwise the raw
    samples at ``x_n = b t_n`` are returned.
    """
    if k not in (0, 1, 2):
        raise ConfigError(f"moment order {k!r} unsupported (use 0, 1 or 2)")
    v = np.asarray(mu.values, dtype=np.float64)
    if v.size < k + 3:
        raise ConfigError(f"series of length {v.size} too short for {k + 1} derivatives")
    for _ in range(k + 1):
        v = np.gradient(_moving_average(v, smoothing_window), mu.dt, edge_order=2)
    u = (-1) ** (k + 1) * v / (b ** (k + 1) * math.factorial(k))
    if grid is None:
        return u
    xs = b * mu.times
    vals = np.interp(grid.x, xs, u, left=0.0, right=0.0)
    vals[-1] = 0.0
    return GridFunction(grid, vals)
