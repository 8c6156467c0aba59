import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depolyinv import _fallback, kernels

compiled = pytest.importorskip("depolyinv._kernels") if kernels.BACKEND == "compiled" else None


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.floats(0.0, 1.0), st.integers(0, 300), st.integers(1, 7),
       st.integers(0, 2**31))
def test_bd_backends_agree(n, rate, steps, every, seed):
    c = np.random.default_rng(seed).random(n)
    a = _fallback.bd_run(c, 0.3, rate, steps, every)
    b = compiled.bd_run(c, 0.3, rate, steps, every)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-13, atol=1e-15)


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 200), st.integers(1, 5), st.integers(0, 2**31))
def test_stencil_backends_agree(n, steps, every, seed):
    r = np.random.default_rng(seed)
    u = r.random(n)
    coeffs = tuple(r.random(5) * 0.4)
    a = _fallback.stencil_run(u, *coeffs, steps, every)
    b = compiled.stencil_run(u, *coeffs, steps, every)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)


def test_kernels_accept_read_only_input(backend):
    c = np.linspace(0, 1, 6)
    c.setflags(write=False)
    snaps, mono = kernels.bd_run(c, 0.0, 0.5, 4, 2)
    assert snaps.shape == (3, 6) and mono.shape == (3,)
    out = kernels.stencil_run(c, 0.1, 0.5, 0.4, 0.6, 0.4, 3, 1)
    assert out.shape == (4, 6) and np.all(out[1:, -1] == 0.0)


def test_store_every_counts(backend):
    snaps, _ = kernels.bd_run(np.ones(4), 0.0, 0.1, 10, 3)
    assert snaps.shape[0] == 10 // 3 + 1


def test_env_var_forces_fallback():
    env = dict(os.environ, DEPOLYINV_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import depolyinv; print(depolyinv.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    importlib.reload(kernels)
