import json

import numpy as np
import pytest

from depolyinv.config import ConfigError, ModelConfig
from depolyinv.experiments import (ExperimentReport, convergence_study, fit_slope,
                                   observability_experiment, reconstruction_experiment)


def test_fit_slope_exact():
    eps = np.array([1 / 8, 1 / 16, 1 / 32])
    assert fit_slope(eps, 3 * eps**1.5) == pytest.approx(1.5)


def test_convergence_input_checks():
    with pytest.raises(ConfigError):
        convergence_study("third")
    with pytest.raises(ConfigError):
        convergence_study("first", [1 / 32, 1 / 64, 1 / 128])
    with pytest.raises(ConfigError):
        convergence_study("first", [1 / 32, 1 / 64, 1 / 100, 1 / 256])


def test_convergence_deterministic_and_parallel():
    a = convergence_study("first", [1 / 16, 1 / 32, 1 / 64, 1 / 128])
    b = convergence_study("first", [1 / 16, 1 / 32, 1 / 64, 1 / 128], jobs=2)
    assert a.to_json() == b.to_json()
    assert "fitted" in a.slopes and len(a.rows) == 4
    assert all(r["config_hash"] for r in a.rows)


def test_report_write(tmp_path):
    rep = ExperimentReport("demo", {"x": np.float64(1.5)})
    rep.add_row(ModelConfig(), value=np.int64(3))
    rep.check("ok", 1.0, True, 2.0)
    rep.arrays["series"] = {"a": [1.0, 2.0], "b": [3.0, 4.0]}
    path = rep.write(tmp_path, plot=True)
    data = json.loads(path.read_text())
    assert data["passed"] and data["rows"][0]["value"] == 3
    assert (tmp_path / "demo_series.csv").read_text().splitlines()[0] == "a,b"
    assert (tmp_path / "demo.svg").exists()


def test_observability_zero_time_gives_full_error():
    rep = observability_experiment("advection-diffusion", [0.0, 0.5])
    assert rep.rows[0]["rel_l2_error"] == pytest.approx(1.0)
    assert rep.rows[1]["rel_l2_error"] < 1.0


def test_observability_transport_half_support():
    rep = observability_experiment("transport", [0.5, 1.0])
    half, full = rep.rows
    assert half["support_fraction"] == pytest.approx(0.5)
    assert half["tail_error_share"] > 0.99
    assert full["rel_l2_error"] <= 0.05 and rep.checks["identity_at_full_support"]["passed"]


def test_observability_rejects_bad_times():
    with pytest.raises(ConfigError):
        observability_experiment("transport", [2.0])


def test_zero_signal_reconstructs_zero():
    rep = reconstruction_experiment("bd-boundary-noisy", seeds=(0, 1), signal_scale=0.0)
    snaps = rep.arrays["snapshots"]
    for k in ("u0_hat_transport", "u0_hat_advection-diffusion",
              "u0_hat_transport_noisy", "u0_hat_advection-diffusion_noisy"):
        assert np.all(snaps[k] == 0)
    assert rep.parameters["summary"]["transport"]["ratio"] is None
    assert set(rep.checks) == {"errors_finite"}


def test_reconstruction_seed_determinism():
    a = reconstruction_experiment("bd-boundary-noisy", seeds=(3,))
    b = reconstruction_experiment("bd-boundary-noisy", seeds=(3,))
    assert a.to_json() == b.to_json()
    with pytest.raises(ConfigError):
        reconstruction_experiment("bd-flux")


def test_moment_scenario_runs():
    rep = reconstruction_experiment("bd-moment2-noisy", seeds=(0,))
    assert rep.checks["errors_finite"]["passed"]
    assert rep.parameters["advection-diffusion"]["clip"] is True
