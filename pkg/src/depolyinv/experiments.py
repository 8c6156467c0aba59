"""Experiment drivers: convergence rates, observability and reconstructions.

Each driver returns an :class:`ExperimentReport`; reports are plain data
and serialize deterministically (sorted keys, no timestamps).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotic import model_config, reference_solution, simulate_model
from .becker_doring import (bd_boundary_trace, bd_moments, distribution_from_profile,
                            rescale_boundary, rescale_moments, simulate_bd)
from .config import (ConfigError, GridFunction, ModelConfig, discrete_norm_2eps,
                     gaussian_initial_condition, make_grid, truncated_gaussian)
from .estimation import Scenario, estimate_initial, involution_map, relative_l2_error
from .observation import NoiseSpec, add_noise

DEFAULT_EPS_LIST = (1 / 32, 1 / 64, 1 / 128, 1 / 256)
SCENARIOS = ("bd-boundary", "bd-boundary-noisy", "bd-moment2-noisy")


@dataclass
class ExperimentReport:
    """Parameters, metric rows, fitted slopes and tolerance checks of one experiment."""

    experiment_id: str
    parameters: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    arrays: dict = field(default_factory=dict, repr=False)

    def add_row(self, config: ModelConfig, **values):
        row = {"config_hash": config.digest()}
        row.update({k: _plain(v) for k, v in values.items()})
        self.rows.append(row)
        return row

    def check(self, name: str, value, passed: bool, tolerance=None):
        self.checks[name] = {"value": _plain(value), "tolerance": _plain(tolerance),
                             "passed": bool(passed)}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "parameters": _plain(self.parameters),
            "rows": self.rows,
            "slopes": _plain(self.slopes),
            "checks": self.checks,
            "notes": list(self.notes),
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, out_dir, plot: bool = False) -> Path:
        """``report.json`` plus one CSV per stored array group; SVG plots on request."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.experiment_id}.json"
        path.write_text(self.to_json() + "\n")
        for name, cols in self.arrays.items():
            keys = list(cols)
            with (out / f"{self.experiment_id}_{name}.csv").open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(keys)
                for vals in zip(*(cols[k] for k in keys)):
                    w.writerow([repr(float(v)) for v in vals])
        if plot:
            _plot_report(self, out)
        return path


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def fit_slope(eps, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    x = np.log(np.asarray(eps, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# convergence -------------------------------------------------------------

CONVERGENCE_PROFILE = {"center": 0.5, "sd": 0.12}
REFINE = 8


def _convergence_run(args):
    order, eps, template, t_eval, center, sd = args
    L, b = template.L, template.b

    def u0(x):
        return truncated_gaussian(x, L, center, sd)

    n_poly = int(round(L / eps))
    cfg = template.replace(eps=eps, n_poly=n_poly, h=eps, calT=template.T / eps)
    init = distribution_from_profile(u0, cfg)
    n_steps = int(round(t_eval / (eps * cfg.dtau)))
    traj = simulate_bd(cfg, init, store_every=n_steps, n_steps=n_steps)
    c_eps = traj.concentrations[-1, 1:]
    x = eps * np.arange(c_eps.size)

    h = eps / REFINE
    if order == "first":
        # bΔt = h makes the upwind scheme an exact shift along characteristics
        ref_cfg = template.replace(eps=0.0, h=h, dt=h / b, T=t_eval)
        grid = make_grid(ref_cfg)
        vals = u0(grid.x)
        vals[-1] = 0.0
        n = int(round(t_eval * b / h))
        traj_ref = simulate_model(ref_cfg, GridFunction(grid, vals), n_steps=n, store_every=n)
        u_ref = traj_ref.states[-1]
    else:
        ref_cfg = template.replace(eps=eps, h=h, T=t_eval)
        grid = make_grid(ref_cfg)
        u_ref = reference_solution(ref_cfg, u0, t_eval)
    u_at = np.interp(x, grid.x, u_ref)
    err = discrete_norm_2eps(c_eps - u_at, eps)
    return {"eps": eps, "error": err, "config_hash": cfg.digest(), "n_species": c_eps.size,
            "ref_h": h, "ref_config_hash": ref_cfg.digest()}


def convergence_study(order: str, eps_list=DEFAULT_EPS_LIST, template: ModelConfig | None = None,
                      t_eval: float | None = None, jobs: int = 1,
                      center: float = CONVERGENCE_PROFILE["center"],
                      sd: float = CONVERGENCE_PROFILE["sd"]) -> ExperimentReport:
    """Discrete-to-continuum error ``||c^eps - u||_{2,eps}`` at ``t_eval`` versus ``eps``.

    The discrete system starts from a smooth truncated Gaussian sampled on
    the sizes, with ``n_poly = L/eps``. ``order="first"`` compares with
    the transport solution and ``order="second"`` with an accurate
    advection-diffusion solution, both on a grid of spacing ``eps/8``.
    """
    if order not in ("first", "second"):
        raise ConfigError(f"order must be 'first' or 'second', got {order!r}")
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_list) < 4:
        raise ConfigError("convergence study needs at least 4 eps values")
    ratios = np.array(eps_list[:-1]) / np.array(eps_list[1:])
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigError("eps values must form a geometric progression")
    template = template or ModelConfig()
    t_eval = template.T / 2 if t_eval is None else float(t_eval)
    runs = _map(_convergence_run, [(order, e, template, t_eval, center, sd) for e in eps_list], jobs)

    rep = ExperimentReport(f"convergence-{order}", {
        "order": order, "eps_list": eps_list, "t_eval": t_eval, "b": template.b,
        "L": template.L, "dtau": template.dtau, "profile": {"center": center, "sd": sd},
        "reference_refinement": REFINE,
        "reference": "exact-shift upwind" if order == "first" else "central MOL, matrix exponential",
        "template_hash": template.digest(),
    })
    for r in runs:
        rep.rows.append({k: _plain(v) for k, v in r.items()})
    eps_arr = [r["eps"] for r in runs]
    errs = [r["error"] for r in runs]
    slope = fit_slope(eps_arr, errs)
    slope_trim = fit_slope(eps_arr[1:], errs[1:])
    rep.slopes = {"fitted": slope, "without_largest_eps": slope_trim}
    lo, hi = (0.8, 1.2) if order == "first" else (1.25, 1.75)
    rep.check("slope_in_range", slope, lo <= slope <= hi, [lo, hi])
    rep.check("slope_stable", abs(slope - slope_trim), abs(slope - slope_trim) <= 0.15, 0.15)
    rep.arrays["errors"] = {"eps": eps_arr, "error": errs}
    return rep


# reconstruction ----------------------------------------------------------

def reconstruction_models(bd_config: ModelConfig) -> dict:
    """Continuum discretizations used against the discrete data."""
    return {
        "transport": bd_config.replace(eps=0.0, h=0.01, dt=0.01),
        "advection-diffusion": bd_config.replace(h=0.01, dt=0.005),
    }


def bd_observations(config: ModelConfig, u0: GridFunction):
    """Rescaled boundary trace and second moment of the discrete system started from ``u0``."""
    traj = simulate_bd(config, distribution_from_profile(u0, config))
    y_b = rescale_boundary(bd_boundary_trace(traj), config)
    y_m = rescale_moments(bd_moments(traj, 2), config, 2)
    return y_b, y_m


def _scenario_params(scenario_id: str, model_kind: str) -> dict:
    if scenario_id == "bd-moment2-noisy":
        return {"obs_kind": "moment", "moment_order": 2, "M": 1.0, "delta": 0.01,
                "alpha": 0.1 if model_kind == "transport" else 1.0,
                "noise": 0.01, "clip": True}
    return {"obs_kind": "boundary", "moment_order": None, "M": 1.0, "delta": 0.1, "alpha": 1.0,
            "noise": 0.1 if scenario_id == "bd-boundary-noisy" else 0.0, "clip": False}


def _reconstruction_run(args):
    model_kind, cfg, params, y, seed, prior, truth, reg_kind = args
    if params["noise"] > 0:
        y = add_noise(y, NoiseSpec(params["noise"], seed, params["clip"]))
    res = estimate_initial(Scenario(model_kind, params["obs_kind"], y, cfg, params["M"],
                                    params["delta"], params["alpha"], params["moment_order"],
                                    reg_kind, prior, truth))
    return res.u0_hat.values, res.metrics.get("rel_l2_error", math.nan)


def reconstruction_experiment(scenario_id: str, bd_config: ModelConfig | None = None,
                              seeds=(0, 1, 2, 3, 4), reg_kind: str | None = "l2",
                              signal_scale: float = 1.0, jobs: int = 1) -> ExperimentReport:
    """Reconstruct the initial profile from discrete-model data with both continuum models.

    Data come from the discrete system started from the reference Gaussian
    (center 50, variance 50 in index units), scaled by ``signal_scale``.
    Noisy scenarios also run the noiseless case so error ratios can be
    formed. ``reg_kind`` selects the prior for both models (``None``: the
    per-model default).
    """
    if scenario_id not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario_id!r}; choose from {SCENARIOS}")
    bd = bd_config or ModelConfig()
    u0 = gaussian_initial_condition(bd, 50, 50)
    u0 = GridFunction(u0.grid, signal_scale * u0.values)
    y_b, y_m = bd_observations(bd, u0)
    models = reconstruction_models(bd)
    noisy = scenario_id != "bd-boundary"
    rep = ExperimentReport(scenario_id, {"bd_config": bd.to_dict(), "seeds": list(seeds),
                                         "reg_kind": reg_kind, "signal_scale": signal_scale})
    grid = make_grid(models["advection-diffusion"])
    snapshots = {"x": grid.x, "u0_true": u0.values}
    summary = {}
    for kind, cfg in models.items():
        params = _scenario_params(scenario_id, kind)
        y = y_m if params["obs_kind"] == "moment" else y_b
        prior = None
        if scenario_id == "bd-moment2-noisy":
            mc = model_config(cfg, kind).replace(eps=bd.eps)
            prior = gaussian_initial_condition(mc, (1.0 / 3.0) / bd.eps, 50)
        rep.parameters[kind] = {"config": model_config(cfg, kind).to_dict(),
                                **{k: v for k, v in params.items()}}
        jobs_list = [(kind, cfg, {**params, "noise": 0.0}, y, 0, prior, u0, reg_kind)]
        if noisy:
            jobs_list += [(kind, cfg, params, y, s, prior, u0, reg_kind) for s in seeds]
        out = _map(_reconstruction_run, jobs_list, jobs)
        mcfg = model_config(cfg, kind)
        base_u, base_err = out[0]
        rep.add_row(mcfg, model=kind, seed=None, noise=0.0, rel_l2_error=base_err)
        snapshots[f"u0_hat_{kind}"] = base_u
        errs = []
        for s, (u_hat, e) in zip(seeds, out[1:]):
            rep.add_row(mcfg, model=kind, seed=s, noise=params["noise"], rel_l2_error=e)
            errs.append(e)
            if s == seeds[0]:
                snapshots[f"u0_hat_{kind}_noisy"] = u_hat
        summary[kind] = {"noiseless": base_err}
        if noisy:
            summary[kind]["noisy_mean"] = float(np.mean(errs))
            summary[kind]["ratio"] = float(np.mean(errs) / base_err) if base_err > 0 else None
    rep.parameters["summary"] = summary
    rep.arrays["snapshots"] = snapshots
    rep.arrays["observations"] = {"t": y_b.times, "boundary": y_b.values, "moment2": y_m.values}
    tr, ad = summary["transport"], summary["advection-diffusion"]
    finite = all(math.isfinite(v) for s in summary.values() for v in s.values() if v is not None)
    rep.check("errors_finite", finite, finite)
    if signal_scale == 0:
        rep.notes.append("zero signal: error ratios undefined, ordering checks skipped")
    elif scenario_id == "bd-boundary":
        rep.check("ad_not_worse_than_transport", [ad["noiseless"], tr["noiseless"]],
                  ad["noiseless"] <= tr["noiseless"])
    elif scenario_id == "bd-boundary-noisy":
        rep.check("noise_degrades_both", [tr["ratio"], ad["ratio"]],
                  tr["noisy_mean"] > tr["noiseless"] and ad["noisy_mean"] > ad["noiseless"])
        rep.check("transport_more_robust", [tr["ratio"], ad["ratio"]], tr["ratio"] <= ad["ratio"])
    return rep


# observability -----------------------------------------------------------

def observability_experiment(model_kind: str, checkpoint_times=None,
                             config: ModelConfig | None = None, M: float = 1.0,
                             delta: float = 1.0, alpha: float = 1e-4,
                             reg_kind: str | None = None) -> ExperimentReport:
    """Involution map of the reference Gaussian at each checkpoint time.

    Transport rows also report the recovered-support fraction
    ``min(b t / L, 1)`` and the share of the squared error on ``[L/2, L]``.
    """
    base = config or ModelConfig()
    cfg = base.replace(eps=0.0, dt=base.h / base.b) if model_kind == "transport" else base
    cfg = model_config(cfg, model_kind)
    if checkpoint_times is None:
        checkpoint_times = [cfg.T / 8, cfg.T / 4, cfg.T / 2, cfg.T]
    ts = [float(t) for t in checkpoint_times]
    if any(t < 0 or t > cfg.T * (1 + 1e-12) for t in ts):
        raise ConfigError("checkpoints must lie in [0, T]")
    # the reference profile is defined in size-index units, so it needs eps > 0
    ref = base if base.eps > 0 else base.replace(eps=0.01)
    u0 = gaussian_initial_condition(ref.replace(h=cfg.h), 50, 50)
    rep = ExperimentReport(f"observability-{model_kind}", {
        "model_kind": model_kind, "checkpoints": ts, "M": M, "delta": delta, "alpha": alpha,
        "reg_kind": reg_kind, "config": cfg.to_dict()})
    x = make_grid(cfg).x
    errs = []
    snaps = {"x": x, "u0_true": u0.values}
    for t in ts:
        out = involution_map(cfg, model_kind, u0, t, M, delta, alpha, reg_kind)
        e = relative_l2_error(out.values, u0.values, cfg.h)
        errs.append(e)
        diff2 = (out.values - u0.values) ** 2
        tail = float(diff2[x >= cfg.L / 2].sum() / diff2.sum()) if diff2.sum() > 0 else 0.0
        extra = {}
        if model_kind == "transport":
            extra = {"support_fraction": min(cfg.b * t / cfg.L, 1.0), "tail_error_share": tail}
        rep.add_row(cfg, t=t, rel_l2_error=e, **extra)
        snaps[f"t={t:g}"] = out.values
    rep.arrays["snapshots"] = snaps
    if model_kind == "advection-diffusion":
        ok = all(b <= a + 0.02 for a, b in zip(errs, errs[1:]))
        rep.check("error_nonincreasing", errs, ok, 0.02)
    else:
        full = [e for t, e in zip(ts, errs) if cfg.b * t >= cfg.L * (1 - 1e-12)]
        if full:
            rep.check("identity_at_full_support", max(full), max(full) <= 0.05, 0.05)
    return rep


# plots -------------------------------------------------------------------

def _plot_report(rep: ExperimentReport, out: Path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    if "errors" in rep.arrays:
        e = rep.arrays["errors"]
        ax.loglog(e["eps"], e["error"], "o-", label=f"slope {rep.slopes.get('fitted', 0):.2f}")
        ax.set_xlabel("eps")
        ax.set_ylabel("error")
    elif "snapshots" in rep.arrays:
        s = rep.arrays["snapshots"]
        for k, v in s.items():
            if k != "x":
                ax.plot(s["x"], v, label=k)
        ax.set_xlabel("x")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / f"{rep.experiment_id}.svg")
    plt.close(fig)
