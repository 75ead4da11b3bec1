import os
import subprocess
import sys

import numpy as np
import pytest

from covcalc.kernels import backend, fallback

try:
    from covcalc.kernels import fast
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_backend_reports_a_known_name():
    assert backend() in ("numpy", "numba")


@needs_numba
@pytest.mark.parametrize("order", [2, 4])
@pytest.mark.parametrize("periodic", [False, True])
@pytest.mark.parametrize("axis", [0, 1, 2])
def test_diff_axis_backends_agree(order, periodic, axis):
    rng = np.random.default_rng(42)
    arr = rng.normal(size=(12, 9, 7))
    h = 0.05
    a = fallback.diff_axis(arr, axis, h, order, periodic)
    b = fast.diff_axis(arr, axis, h, order, periodic)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("dim", [2, 3, 4])
def test_christoffel_core_backends_agree(dim):
    rng = np.random.default_rng(7)
    n = 50
    base = rng.normal(size=(n, dim, dim))
    g = base @ np.swapaxes(base, 1, 2) + 3.0 * np.eye(dim)
    ginv = np.linalg.inv(g)
    dg = rng.normal(size=(n, dim, dim, dim))
    dg = 0.5 * (dg + dg.transpose(0, 2, 1, 3))
    a = fallback.christoffel_core(ginv, dg)
    b = fast.christoffel_core(ginv, dg)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_christoffel_core_symmetric_in_lower_pair():
    rng = np.random.default_rng(3)
    n, dim = 20, 3
    base = rng.normal(size=(n, dim, dim))
    g = base @ np.swapaxes(base, 1, 2) + 3.0 * np.eye(dim)
    dg = rng.normal(size=(n, dim, dim, dim))
    dg = 0.5 * (dg + dg.transpose(0, 2, 1, 3))
    gamma = fallback.christoffel_core(np.linalg.inv(g), dg)
    np.testing.assert_allclose(gamma, gamma.transpose(0, 1, 3, 2),
                               rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("requested", ["numpy", "numba"])
def test_env_flag_selects_backend(requested):
    if requested == "numba" and not HAVE_NUMBA:
        pytest.skip("numba not installed")
    env = dict(os.environ, COVCALC_BACKEND=requested)
    out = subprocess.run(
        [sys.executable, "-c",
         "from covcalc.kernels import backend; print(backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == requested


def test_unknown_backend_is_rejected():
    env = dict(os.environ, COVCALC_BACKEND="cuda")
    out = subprocess.run(
        [sys.executable, "-c", "import covcalc.kernels"],
        env=env, capture_output=True, text=True,
    )
    assert out.returncode != 0
    assert "COVCALC_BACKEND" in out.stderr
