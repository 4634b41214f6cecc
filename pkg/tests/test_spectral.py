from __future__ import annotations

import math

import numpy as np
import pytest

from artifact.covariance import gep_U
from artifact.gep import IDENTITY
from artifact.gmm import DiffusionClock, MixtureSpec, realize_centroids, sample_dataset
from artifact.spectral import (SpectralParams, auto_grid, default_eps_schedule, default_grid,
                               find_bulks, mp_edges_asymptotic, saddle_residuals, solve_edges,
                               solve_grid, spectrum, window_sweep)

BASE = MixtureSpec((0.5, 0.5), (0.5, 0.25), np.zeros((2, 2)), 1)


@pytest.fixture(scope="module")
def fig2():
    return spectrum(BASE, DiffusionClock(0.01), 60, 30)


@pytest.fixture(scope="module")
def fig2_small_t():
    return spectrum(BASE, DiffusionClock(0.001), 60, 30)


def test_grids():
    g = default_grid()
    assert g.size == 10_000 and g[0] == pytest.approx(1e-8) and g[-1] == pytest.approx(1e2)
    e = default_eps_schedule()
    assert e[0] == 100 and e[-1] == 0 and np.all(np.diff(e) < 0)


def test_auto_grid_covers_mp_bulk():
    p = SpectralParams.from_spec(BASE, DiffusionClock(0.01), 400, 30)
    assert auto_grid(p)[-1] >= 2 * mp_edges_asymptotic(p)[1]


def test_params_validation():
    with pytest.raises(ValueError):
        SpectralParams.from_spec(BASE, DiffusionClock(0.01), 0, 30)


def test_residuals_vanish_like_inverse_z():
    p = SpectralParams.from_spec(BASE, DiffusionClock(0.01), 60, 30)
    mags = []
    for r in (1e4, 1e5):
        z = r * (1 + 1j) / math.sqrt(2)
        mags.append(max(abs(f) for f in saddle_residuals(-1 / z, -1 / z, z, p)))
    assert mags[0] < 1e2 / 1e4
    assert mags[0] / mags[1] == pytest.approx(10, rel=0.05)


def test_residuals_errors():
    p = SpectralParams.from_spec(BASE, DiffusionClock(0.01), 60, 30)
    with pytest.raises(ZeroDivisionError):
        saddle_residuals(0, 1j, 1j, p)
    # gO chosen so the first class denominator vanishes exactly
    r = p.chi_p / p.chi_m
    gP = 1.0 + 0j
    gO = -(1 + r * p.h2[0] * gP) / (r * p.g2[0])
    with pytest.raises(FloatingPointError, match="class denominator"):
        saddle_residuals(gP, gO, 1j, p)


def test_marchenko_pastur_limit_identity_hook():
    # linear features, one class, infinite data: U -> Gamma^2 W W^T / N
    spec = MixtureSpec((1.0,), (0.5,), np.zeros((1, 1)), 1)
    clock = DiffusionClock(0.1)
    cp = 4.0
    p = SpectralParams.from_spec(spec, clock, cp, 1e9, IDENTITY)
    g2 = float(clock.gamma2(0.5))
    lo, hi = g2 * (math.sqrt(cp) - 1) ** 2, g2 * (math.sqrt(cp) + 1) ** 2
    lam = np.linspace(0.05, 1.2 * hi, 4000)
    sol = solve_grid(p, lam)
    mu = lam / g2
    ml, mh = lo / g2, hi / g2
    with np.errstate(invalid="ignore"):
        f = np.where((mu > ml) & (mu < mh), np.sqrt(np.clip((mh - mu) * (mu - ml), 0, None)) / (2 * np.pi * mu), 0)
    ref = f / (cp * g2)
    inner = (lam > lo * 1.01) & (lam < hi * 0.99)
    assert sol.converged[inner].all()
    np.testing.assert_allclose(sol.rho[inner], ref[inner], rtol=1e-6)
    assert sol.continuous_mass() == pytest.approx(1 / cp, rel=1e-3)
    assert mp_edges_asymptotic(p) == pytest.approx((lo, hi), rel=1e-12)


def test_three_bulks_and_masses(fig2, fig2_small_t):
    for p, sol, _ in (fig2, fig2_small_t):
        assert len(sol.bulks) == 3
        masses = [np.trapezoid(sol.rho[a:b + 1], sol.lam[a:b + 1]) * p.chi_p for a, b in sol.bulks]
        np.testing.assert_allclose(masses, [1, p.chi_m - 1, 1], rtol=0.01)
        assert sol.continuous_mass() + sol.point_mass[1] == pytest.approx(1, abs=0.02)
        assert sol.point_mass[0] == pytest.approx(p.S)


def test_herglotz_and_omega_support(fig2):
    _, sol, _ = fig2
    c = sol.converged
    assert c.all()
    assert np.all(sol.g_psi.imag[c] >= -1e-10)
    assert np.all(sol.g_omega.imag[c] >= -1e-10)
    assert np.all(sol.rho_omega[sol.rho == 0] == 0)


def test_edges_on_grid_boundaries(fig2):
    p, sol, ed = fig2
    assert not ed.merged and all(e.converged for e in ed.edges)
    assert not ed.diagnostics
    step = np.diff(sol.lam)
    for e in ed.edges:
        j = int(np.searchsorted(sol.lam, e.grid_lam))
        assert abs(e.lam - e.grid_lam) <= step[max(0, j - 1)] + step[min(j, len(step) - 1)]
    assert ed.tau_gen < ed.tau_mem1 < ed.tau_mem2
    assert ed.w_g == pytest.approx(ed.tau_mem1 / ed.tau_gen)
    d = ed.to_dict()
    assert d["tau_gen"] == ed.tau_gen and len(d["edges"]) == 6


def test_gep_matrix_counts_match_bulks(fig2_small_t):
    p, sol, _ = fig2_small_t
    N, P, M = 50, 3000, 1500
    rng = np.random.default_rng(1)
    spec = BASE.replace(dim=N)
    W = rng.standard_normal((P, N))
    C = realize_centroids(spec, rng)
    ev = np.linalg.eigvalsh(gep_U(sample_dataset(spec, C, M, rng), W, spec, C, DiffusionClock(0.001), rng).U)
    counts = [int(np.sum((ev >= 0.9 * lo) & (ev <= 1.1 * hi))) for lo, hi in sol.bulk_intervals()]
    assert counts == [N, M - N, N]
    assert int(np.sum(np.abs(ev - p.S) < 1e-6)) == P - M - N


@pytest.mark.parametrize("chi_m", [300, 3000])
def test_mp_asymptote_rightmost_bulk(chi_m):
    p, sol, _ = spectrum(BASE, DiffusionClock(0.01), 60, chi_m)
    lo, hi = sol.bulk_intervals()[-1]
    mlo, mhi = mp_edges_asymptotic(p)
    assert lo == pytest.approx(mlo, rel=0.05) and hi == pytest.approx(mhi, rel=0.05)


def test_solve_grid_validation():
    p = SpectralParams.from_spec(BASE, DiffusionClock(0.01), 60, 30)
    with pytest.raises(ValueError):
        solve_grid(p, np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        solve_grid(p, np.array([1.0, 2.0]), np.array([1.0, 0.1]))


def test_no_bulk_raises():
    p = SpectralParams.from_spec(BASE, DiffusionClock(0.01), 60, 30)
    sol = solve_grid(p, np.linspace(30, 40, 20))
    assert sol.bulks == []
    with pytest.raises(ValueError):
        solve_edges(p, sol)


def test_find_bulks_rules():
    rho = np.zeros(40)
    rho[5:15] = 1
    rho[17] = 1          # narrow, two steps from a wide run: merged
    rho[25] = 1          # narrow and isolated: dropped
    rho[30:35] = 1
    bulks, notes = find_bulks(rho)
    assert bulks == [(5, 17), (30, 34)]
    assert any("merged" in n for n in notes) and any("dropped" in n for n in notes)


def test_window_sweep_equal_variances_ignore_weights():
    rows = window_sweep(0.5, 60, 30, 0.01, [1.0], [0.3, 0.5, 0.7], lam=default_grid(4000))
    wg = [r.w_g for r in rows]
    wm = [r.w_m for r in rows]
    assert all(not r.merged for r in rows)
    np.testing.assert_allclose(wg, wg[0], rtol=1e-6)
    np.testing.assert_allclose(wm, wm[0], rtol=1e-6)


def test_columns_shape(fig2):
    _, sol, _ = fig2
    cols = sol.columns()
    assert set(cols) >= {"lambda", "rho", "rho_omega", "re_g_psi", "im_g_omega"}
    assert all(len(v) == len(sol.lam) for v in cols.values())
