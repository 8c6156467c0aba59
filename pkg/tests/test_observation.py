import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depolyinv.asymptotic import simulate_model
from depolyinv.config import (ConfigError, ModelConfig, TimeSeries, gaussian_initial_condition,
                              make_grid)
from depolyinv.observation import (NoiseSpec, add_noise, moment_ode_residual, observation_row,
                                   observe_trajectory, series_from_csv, series_to_csv)


@pytest.fixture
def grid(table_config):
    return make_grid(table_config)


def test_boundary_row(grid):
    H = observation_row("boundary", None, grid)
    assert H.weights[0] == 1.0 and H.weights.sum() == 1.0 and H.tag == "boundary"


def test_moment_rows(grid):
    for k in (0, 1, 2):
        H = observation_row("moment", k, grid)
        assert H.weights[-1] == 0.0 and H.tag == f"moment{k}"
        np.testing.assert_allclose(H.weights[:-1], grid.h * grid.x[:-1] ** k)
    assert abs(observation_row("moment", 1, grid)(np.ones(grid.n_nodes)) - 0.5) <= grid.h / 2 + 1e-12
    assert observation_row("moment", 0, grid)(np.ones(grid.n_nodes)) == pytest.approx(1.0)


def test_bad_rows(grid):
    with pytest.raises(ConfigError):
        observation_row("moment", 3, grid)
    with pytest.raises(ConfigError):
        observation_row("flux", None, grid)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5), st.floats(-5, 5), st.sampled_from([0, 1, 2]))
def test_rows_are_linear(seed, a, c, k):
    g = make_grid(ModelConfig())
    r = np.random.default_rng(seed)
    u, v = r.random(g.n_nodes), r.random(g.n_nodes)
    H = observation_row("moment", k, g)
    assert H(a * u + c * v) == pytest.approx(a * H(u) + c * H(v), abs=1e-12)
    assert H(u) >= 0


def test_observe_trajectory(table_config, gaussian_u0):
    tr = simulate_model(table_config, gaussian_u0, n_steps=10)
    H = observation_row("boundary", None, tr.grid)
    y = observe_trajectory(tr, H)
    np.testing.assert_array_equal(y.values, tr.states[:, 0])
    assert y.dt == table_config.dt
    with pytest.raises(ConfigError):
        observe_trajectory(tr, observation_row("boundary", None, make_grid(ModelConfig(h=0.5))))


def test_noise_determinism_and_scale():
    s = TimeSeries(0.0, 0.01, np.sin(np.linspace(0, 3, 5000)) + 1.0, "boundary")
    a = add_noise(s, NoiseSpec(0.1, seed=7))
    b = add_noise(s, NoiseSpec(0.1, seed=7))
    c = add_noise(s, NoiseSpec(0.1, seed=8))
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    d = a.values - s.values
    assert np.std(d) == pytest.approx(0.1 * np.max(s.values), rel=0.05)
    assert abs(np.mean(d)) < 0.01
    assert np.array_equal(add_noise(s, NoiseSpec()).values, s.values)


def test_clip_sets_zero_and_is_idempotent():
    s = TimeSeries(0.0, 0.1, np.array([0.0, 0.01, 1.0, 0.0]), "moment", 2)
    spec = NoiseSpec(0.5, seed=1, clip_negative=True)
    once = add_noise(s, spec)
    assert once.values.min() >= 0 and once.values.size == 4
    clip_only = NoiseSpec(0.0, clip_negative=True)
    np.testing.assert_array_equal(add_noise(once, clip_only).values, once.values)


def test_negative_amplitude_rejected():
    with pytest.raises(ConfigError):
        NoiseSpec(-0.1)


def test_transport_moment_residuals(transport_config, gaussian_u0):
    res = []
    for h in (0.01, 0.005):
        cfg = transport_config.replace(h=h, dt=h)
        u0 = gaussian_initial_condition(ModelConfig(h=h), 50, 50)
        tr = simulate_model(cfg, u0)
        res.append([np.max(np.abs(moment_ode_residual(tr, cfg, "transport", k).values))
                    for k in (0, 1)])
    res = np.array(res)
    assert np.all(res[0] / res[1] > 1.8)
    with pytest.raises(ConfigError):
        moment_ode_residual(tr, cfg, "transport", 2)


def test_ad_moment_residual_small(table_config, gaussian_u0):
    tr = simulate_model(table_config, gaussian_u0)
    for k in (0, 1, 2):
        r = moment_ode_residual(tr, table_config, "advection-diffusion", k).values
        assert np.max(np.abs(r)) < 0.05, k
    with pytest.raises(ConfigError):
        moment_ode_residual(tr, table_config, "bd", 0)


def test_csv_round_trip(tmp_path):
    s = TimeSeries(0.0, 0.005, np.random.default_rng(0).random(50), "moment", 2)
    back = series_from_csv(series_to_csv(s, tmp_path / "y.csv"))
    np.testing.assert_array_equal(back.values, s.values)
    assert back.kind == "moment" and back.order == 2 and back.dt == pytest.approx(0.005)


def test_csv_rejects_irregular(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,value,kind\n0,1,boundary\n0.1,1,boundary\n0.35,1,boundary\n")
    with pytest.raises(ConfigError):
        series_from_csv(p)
    p.write_text("t,value,kind\n")
    with pytest.raises(ConfigError):
        series_from_csv(p)
