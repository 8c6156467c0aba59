"""Command-line entry point.

Every subcommand reads an optional JSON config, applies per-field flag
overrides (flags win), writes its outputs under ``--out`` and exits with
0 on success, 1 on invalid input and 2 on numerical failure. Errors are
reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .asymptotic import MODEL_KINDS, model_config, simulate_model, stable_dt
from .becker_doring import (bd_boundary_trace, bd_moments, distribution_from_profile,
                            rescale_boundary, rescale_moments, simulate_bd)
from .config import (ConfigError, GridFunction, ModelConfig, NumericalError,
                     gaussian_initial_condition, make_grid)
from .estimation import Scenario, estimate_initial
from .experiments import (SCENARIOS, convergence_study, observability_experiment,
                          reconstruction_experiment)
from .observation import (NoiseSpec, add_noise, observation_row, observe_trajectory,
                          series_from_csv, series_to_csv)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

_FIELD_TYPES = {f.name: (int if f.type in ("int", int) else float)
                for f in dataclasses.fields(ModelConfig)}


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input: exit 1 with the JSON error on stderr."""

    def error(self, message):
        self.print_usage(sys.stderr)
        err = {"error": "UsageError", "message": message, "exit_code": EXIT_INVALID}
        print(json.dumps(err), file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _add_common(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", type=Path, help="JSON config (model fields or a scenario)")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for every stochastic output")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--plot", action="store_true", help="also write SVG plots")
    g = p.add_argument_group("model fields (override the config file)")
    for name, typ in _FIELD_TYPES.items():
        if name in skip:
            continue
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"field_{name}", type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="depolyinv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate the discrete or a continuum model")
    _add_common(p)
    p.add_argument("--model", choices=("bd",) + MODEL_KINDS, default="bd")

    p = sub.add_parser("observe", help="write an observation series (t, value, kind)")
    _add_common(p)
    p.add_argument("--model", choices=("bd",) + MODEL_KINDS, default="bd")
    p.add_argument("--kind", choices=("boundary", "moment"), default="boundary")
    p.add_argument("--order", type=int, default=None, help="moment order")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise amplitude")
    p.add_argument("--clip", action="store_true", help="set negative noisy samples to zero")

    p = sub.add_parser("estimate", help="reconstruct an initial condition from a scenario")
    _add_common(p)

    p = sub.add_parser("convergence", help="discrete-to-continuum convergence rate")
    _add_common(p, skip=("eps",))  # --eps takes the list of values here
    p.add_argument("--order", choices=("first", "second"), required=True)
    p.add_argument("--eps", type=_eps_list, default="1/32,1/64,1/128,1/256",
                   help="comma-separated eps values, fractions allowed")

    p = sub.add_parser("observability", help="involution map at checkpoint times")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--times", type=_float_list, default=None, help="comma-separated times")
    p.add_argument("--alpha", type=float, default=1e-4)

    p = sub.add_parser("reconstruct", help="reconstruction from discrete-model data")
    _add_common(p)
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--reg-kind", choices=("l2", "h1", "default"), default="l2")
    return parser


def _eps_list(text) -> list[float]:
    if isinstance(text, list):
        return text
    try:
        return [float(Fraction(t.strip())) for t in str(text).split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def _float_list(text) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def resolve_config(args, base: dict | None = None) -> tuple[ModelConfig, dict]:
    """Merge file fields and flag overrides; returns the config and the overrides applied."""
    fields = dict(base or {})
    overrides = {}
    for name in _FIELD_TYPES:
        v = getattr(args, f"field_{name}", None)
        if v is not None:
            overrides[name] = v
    fields.update(overrides)
    return ModelConfig.from_dict(fields), overrides


def _require_cfl(cfg: ModelConfig):
    bound = stable_dt(cfg)
    if cfg.dt > bound * (1 + 1e-12):
        raise ConfigError(f"dt = {cfg.dt:g} violates the CFL bound stable_dt = {bound:.6g} "
                          f"(h/(b(1+eps/h)) with h={cfg.h:g}, b={cfg.b:g}, eps={cfg.eps:g})")


def _reference_u0(cfg: ModelConfig) -> GridFunction:
    ref = cfg if cfg.eps > 0 else cfg.replace(eps=0.01)
    return gaussian_initial_condition(ref, 50, 50)


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def cmd_simulate(args, out: Path) -> dict:
    cfg, overrides = resolve_config(args, _load_json(args.config))
    u0 = _reference_u0(cfg)
    if args.model == "bd":
        traj = simulate_bd(cfg, distribution_from_profile(u0, cfg))
        path = traj.to_csv(out / "bd_trajectory.csv")
    else:
        mc = model_config(cfg, args.model)
        if args.model == "transport" and args.field_dt is None:
            mc = mc.replace(dt=mc.h / mc.b)
        _require_cfl(mc)
        traj = simulate_model(mc, u0)
        path = traj.to_csv(out / f"{args.model}_trajectory.csv")
        cfg = mc
    _write_json(out / "config.json", {"config": cfg.to_dict(), "overrides": overrides})
    return {"trajectory": str(path)}


def cmd_observe(args, out: Path) -> dict:
    cfg, overrides = resolve_config(args, _load_json(args.config))
    u0 = _reference_u0(cfg)
    if args.kind == "moment" and args.order is None:
        raise ConfigError("--order is required for moment observations")
    if args.model == "bd":
        traj = simulate_bd(cfg, distribution_from_profile(u0, cfg))
        if args.kind == "boundary":
            y = rescale_boundary(bd_boundary_trace(traj), cfg)
        else:
            y = rescale_moments(bd_moments(traj, args.order), cfg, args.order)
    else:
        mc = model_config(cfg, args.model)
        if args.model == "transport" and args.field_dt is None:
            mc = mc.replace(dt=mc.h / mc.b)
        _require_cfl(mc)
        traj = simulate_model(mc, u0)
        y = observe_trajectory(traj, observation_row(args.kind, args.order, make_grid(mc)))
    if args.noise > 0:
        y = add_noise(y, NoiseSpec(args.noise, args.seed or 0, args.clip))
    name = f"{args.model}_{y.tag}.csv"
    series_to_csv(y, out / name)
    _write_json(out / "config.json", {"config": cfg.to_dict(), "overrides": overrides,
                                      "noise": args.noise, "seed": args.seed})
    return {"series": str(out / name)}


SCENARIO_KEYS = {"model_kind", "obs_kind", "moment_order", "M", "delta", "alpha", "reg_kind",
                 "observations", "prior", "truth", "noise", "config"}


def _load_profile(path, base: Path, cfg: ModelConfig) -> GridFunction:
    """Nodal profile from a CSV with columns ``x`` and ``u`` (or a single value column)."""
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"profile file {p} does not exist")
    data = np.genfromtxt(p, delimiter=",", names=True)
    names = data.dtype.names
    col = "u" if "u" in names else names[-1]
    vals = np.atleast_1d(data[col]).astype(float)
    grid = make_grid(cfg)
    if vals.size != grid.n_nodes:
        raise ConfigError(f"{p}: expected {grid.n_nodes} values, got {vals.size}")
    vals[-1] = 0.0
    return GridFunction(grid, vals)


def cmd_estimate(args, out: Path) -> dict:
    doc = _load_json(args.config)
    if not doc:
        raise ConfigError("estimate needs --config pointing to a scenario JSON")
    unknown = set(doc) - SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
    for key in ("model_kind", "obs_kind", "observations"):
        if key not in doc:
            raise ConfigError(f"scenario is missing {key!r}")
    base_dir = args.config.parent
    cfg, overrides = resolve_config(args, doc.get("config", {}))
    kind = doc["model_kind"]
    mc = model_config(cfg, kind)
    _require_cfl(mc)
    obs_path = Path(doc["observations"])
    y = series_from_csv(obs_path if obs_path.is_absolute() else base_dir / obs_path)
    noise = doc.get("noise")
    if noise:
        spec = NoiseSpec(float(noise.get("relative_amplitude", 0.0)),
                         args.seed if args.seed is not None else int(noise.get("seed", 0)),
                         bool(noise.get("clip_negative", False)))
        y = add_noise(y, spec)
    prior = _load_profile(doc["prior"], base_dir, mc) if doc.get("prior") else None
    truth = _load_profile(doc["truth"], base_dir, mc) if doc.get("truth") else None
    sc = Scenario(kind, doc["obs_kind"], y, mc, float(doc.get("M", 1.0)),
                  float(doc.get("delta", 0.1)), float(doc.get("alpha", 1.0)),
                  doc.get("moment_order"), doc.get("reg_kind"), prior, truth)
    res = estimate_initial(sc)
    x = make_grid(mc).x
    with (out / "estimate.csv").open("w") as fh:
        cols = ["x"] + (["u0_true"] if truth is not None else []) + ["u0_hat"]
        fh.write(",".join(cols) + "\n")
        for i, xi in enumerate(x):
            row = [xi] + ([truth.values[i]] if truth is not None else []) + [res.u0_hat.values[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    diag = {
        "config": mc.to_dict(),
        "config_hash": mc.digest(),
        "overrides": overrides,
        "criterion": res.criterion,
        "metrics": res.metrics,
        "min_rel_eig_pi": res.diagnostics["min_rel_eig_pi"],
        "max_gain_norm": float(np.max(res.diagnostics["gain_norm"])),
        "n_obs": res.diagnostics["n_obs"],
    }
    _write_json(out / "estimate_diagnostics.json", diag)
    return {"estimate": str(out / "estimate.csv"), "metrics": res.metrics}


def _finish_report(rep, args, out: Path, overrides: dict) -> dict:
    rep.parameters["cli_overrides"] = overrides
    path = rep.write(out, plot=args.plot)
    return {"report": str(path), "passed": rep.passed, "slopes": rep.slopes}


def cmd_convergence(args, out: Path) -> dict:
    cfg, overrides = resolve_config(args, _load_json(args.config))
    rep = convergence_study(args.order, args.eps, template=cfg, jobs=args.jobs)
    return _finish_report(rep, args, out, overrides)


def cmd_observability(args, out: Path) -> dict:
    cfg, overrides = resolve_config(args, _load_json(args.config))
    rep = observability_experiment(args.model, args.times, config=cfg, alpha=args.alpha)
    return _finish_report(rep, args, out, overrides)


def cmd_reconstruct(args, out: Path) -> dict:
    cfg, overrides = resolve_config(args, _load_json(args.config))
    first = args.seed if args.seed is not None else 0
    seeds = tuple(range(first, first + args.n_seeds))
    reg = None if args.reg_kind == "default" else args.reg_kind
    rep = reconstruction_experiment(args.scenario, cfg, seeds=seeds, reg_kind=reg, jobs=args.jobs)
    return _finish_report(rep, args, out, overrides)


COMMANDS = {
    "simulate": cmd_simulate,
    "observe": cmd_observe,
    "estimate": cmd_estimate,
    "convergence": cmd_convergence,
    "observability": cmd_observability,
    "reconstruct": cmd_reconstruct,
}


def _fail(code: int, exc: BaseException) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(err), file=sys.stderr)
    return code


def run_command(args) -> int:
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(over="raise", invalid="raise"):
            result = COMMANDS[args.command](args, out)
    except (NumericalError, FloatingPointError, OverflowError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(EXIT_INVALID, exc)
    print(json.dumps({"command": args.command, **result}, sort_keys=True, default=str))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
