import numpy as np
import pytest

from depolyinv import _fallback, kernels
from depolyinv.config import ModelConfig, gaussian_initial_condition


@pytest.fixture
def table_config():
    """Default advection-diffusion parameter set."""
    return ModelConfig()


@pytest.fixture
def transport_config():
    return ModelConfig(eps=0.0, h=0.01, dt=0.01)


@pytest.fixture
def gaussian_u0(table_config):
    return gaussian_initial_condition(table_config, 50, 50)


@pytest.fixture(params=["compiled", "python"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "compiled":
        if kernels.BACKEND != "compiled":
            pytest.skip("compiled extension not built")
    else:
        monkeypatch.setattr(kernels, "bd_run", _fallback.bd_run)
        monkeypatch.setattr(kernels, "stencil_run", _fallback.stencil_run)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records one acceptance line and returns ``passed``."""

    def record(n: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}"
        _CRITERIA[n] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
