from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from artifact import _saddle_py, spectral
from artifact.gmm import DiffusionClock, MixtureSpec
from artifact.spectral import SpectralParams, default_grid, solve_grid

BASE = MixtureSpec((0.5, 0.5), (0.5, 0.25), np.zeros((2, 2)), 1)
needs_cython = pytest.mark.skipif(spectral.BACKEND != "cython", reason="compiled kernel not built")


@pytest.fixture(scope="module")
def params():
    return SpectralParams.from_spec(BASE, DiffusionClock(0.01), 60, 30)


@needs_cython
def test_backends_agree(params):
    lam = default_grid(3000)
    a = solve_grid(params, lam, backend="cython")
    b = solve_grid(params, lam, backend="numpy")
    assert a.converged.all() and b.converged.all()
    np.testing.assert_allclose(a.g_psi, b.g_psi, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(a.g_omega, b.g_omega, rtol=1e-8, atol=1e-10)
    assert a.bulks == b.bulks


@needs_cython
def test_backends_agree_on_residual_kernel(params):
    from artifact import _saddle
    lam = np.array([1e-3, 0.02, 12.0])
    eps = np.array([1.0, 0.0])
    out_c = _saddle.solve_points(lam, eps, *params.kernel_args())
    out_p = _saddle_py.solve_points(lam, eps, *params.kernel_args())
    np.testing.assert_allclose(out_c[0], out_p[0], rtol=1e-9)
    np.testing.assert_allclose(out_c[1], out_p[1], rtol=1e-9)


@pytest.mark.parametrize("backend", ["numpy", None])
def test_deterministic(params, backend):
    lam = default_grid(500)
    a = solve_grid(params, lam, backend=backend)
    b = solve_grid(params, lam, backend=backend)
    np.testing.assert_array_equal(a.g_psi, b.g_psi)


def test_fallback_selected_when_extension_missing():
    code = ("import sys; sys.modules['artifact._saddle'] = None\n"
            "import artifact.spectral as s\n"
            "assert s.BACKEND == 'numpy' and s._kernel is s._saddle_py\n")
    subprocess.run([sys.executable, "-c", code], check=True)


def test_unknown_backend_rejected(params):
    with pytest.raises(KeyError):
        solve_grid(params, default_grid(10), backend="fortran")
