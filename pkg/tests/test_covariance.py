from __future__ import annotations

import math

import numpy as np
import pytest

from artifact.covariance import (FeatureCovariance, dump_matrix, eigh_sym, empirical_U, empirical_UV,
                                 empirical_V, gep_U, gep_V, histogram_tv, largetime_U, load_matrix,
                                 population_blocks, population_U, split_gen_mem)
from artifact.gep import IDENTITY, coeffs_vector, largetime_scalars
from artifact.gmm import (Dataset, DiffusionClock, MixtureSpec, orthogonal_gram, realize_centroids,
                          sample_dataset)


def _setup(rng, N=40, P=60, M=200, t=0.01, b=(0.5, 0.5), s2=(0.5, 0.25), norms=(1.0, 1.0)):
    spec = MixtureSpec(b, s2, orthogonal_gram(norms), N)
    W = rng.standard_normal((P, N))
    C = realize_centroids(spec, rng)
    return spec, W, C, sample_dataset(spec, C, M, rng), DiffusionClock(t)


def _psd(U):
    w = np.linalg.eigvalsh(U)
    return w.min() >= -1e-8 * max(1.0, abs(w).max())


def test_empirical_identity_t0_single_sample(rng):
    N, P = 10, 7
    W = rng.standard_normal((P, N))
    x = rng.standard_normal((1, N))
    ds = Dataset(x, np.zeros(1, dtype=int), (1.0,))
    U = empirical_U(ds, W, DiffusionClock(0.0), 3, rng, IDENTITY).U
    u = W @ x[0] / math.sqrt(N)
    np.testing.assert_allclose(U, np.outer(u, u), rtol=1e-12, atol=1e-12)


def test_empirical_V_zero_mean_at_t0(rng):
    spec, W, C, ds, _ = _setup(rng)
    V = empirical_V(ds, W, DiffusionClock(0.0), 50, rng).V
    # phi does not see xi at t=0, so entries are pure Monte Carlo noise
    assert abs(V.mean()) < 3 / math.sqrt(V.size * ds.M * 50)
    assert np.abs(V).max() < 6 / math.sqrt(ds.M * 50)


def test_empirical_diag_mean_matches_beta_tilde(rng):
    spec, W, C, ds, clock = _setup(rng, N=50, P=80, M=300)
    U = empirical_U(ds, W, clock, 100, rng).U
    co = coeffs_vector(W, spec, C, clock)
    target = sum(b * co.beta_tilde[c].mean() for c, b in enumerate(spec.weights))
    # standard error of the diag mean from 8 repeated estimates
    reps = [np.diag(empirical_U(sample_dataset(spec, C, 300, rng), W, clock, 100, rng).U).mean()
            for _ in range(8)]
    se = np.std(reps, ddof=1)
    assert abs(np.diag(U).mean() - target) < 2 * se + 1e-12


def test_empirical_V_matches_gep_entrywise(rng):
    spec, W, C, ds, clock = _setup(rng, N=100, P=200, M=1000)
    V = empirical_V(ds, W, clock, 100, rng).V
    reps = np.array([empirical_V(sample_dataset(spec, C, 1000, rng), W, clock, 100, rng).V
                     for _ in range(4)])
    # per-entry spread pooled along each row; a 4-sample std alone is too noisy
    se = np.sqrt(reps.var(axis=0, ddof=1).mean(axis=1, keepdims=True))
    z = np.abs(V - gep_V(W, spec, clock, C).V) / se
    assert np.mean(z > 3) < 0.01


def test_empirical_V_norm_scaling(rng):
    ratios = []
    for t in (0.01, 0.1, 1.0):
        spec, W, C, ds, clock = _setup(rng, N=100, P=200, M=1000, t=t)
        V = empirical_V(ds, W, clock, 100, rng).V
        ratios.append(np.linalg.norm(V) / math.sqrt(clock.delta * 200))
    assert max(ratios) / min(ratios) < 1.1


def test_empirical_empty_class_warns(rng):
    spec = MixtureSpec((0.999, 0.001), (0.5, 0.5), orthogonal_gram([1, 1]), 5)
    W = rng.standard_normal((4, 5))
    C = realize_centroids(spec, rng)
    with pytest.warns(RuntimeWarning):
        ds = sample_dataset(spec, C, 5, rng)
    with pytest.warns(RuntimeWarning):
        U, V = empirical_UV(ds, W, DiffusionClock(0.1), 3, rng)
    assert U.notes and V.notes


def test_empirical_rejects_zero_draws(rng):
    spec, W, C, ds, clock = _setup(rng)
    with pytest.raises(ValueError):
        empirical_U(ds, W, clock, 0)


def test_gep_close_to_empirical_at_n500(rng):
    spec, W, C, ds, clock = _setup(rng, N=500, P=500, M=1000)
    Ue = empirical_U(ds, W, clock, 100, rng).U
    Ug = gep_U(ds, W, spec, C, clock, rng).U
    assert np.linalg.norm(Ue - Ug) / np.linalg.norm(Ue) <= 0.1


def test_gep_small_variance_collapses_to_alpha(rng):
    spec, W, C, ds, clock = _setup(rng, s2=(1e-16, 1e-16), t=0.1)
    co = coeffs_vector(W, spec, C, clock)
    U = gep_U(ds, W, spec, C, clock, rng, coeffs=co).U
    expect = np.zeros_like(U)
    kappa = clock.delta / (spec.sigma2 * clock.decay ** 2)
    for c, b in enumerate(spec.weights):
        g = co.gamma[c]
        blk = np.outer(co.alpha[c], co.alpha[c]) + kappa[c] / W.shape[1] * np.outer(g, g) * (W @ W.T)
        blk[np.diag_indices_from(blk)] += co.varsigma[c]
        expect += b * blk
    np.testing.assert_allclose(U, expect, atol=1e-6)


def test_gep_symmetric_psd(rng):
    spec, W, C, ds, clock = _setup(rng)
    U = gep_U(ds, W, spec, C, clock, rng).U
    assert np.array_equal(U, U.T)
    assert _psd(U) and np.all(np.diag(U) >= 0)


def test_gep_V_zero_at_t0(rng):
    spec, W, C, _, _ = _setup(rng)
    assert np.all(gep_V(W, spec, DiffusionClock(0.0), C).V == 0)


def test_gep_V_identity_single_class(rng):
    N = 30
    spec = MixtureSpec((1.0,), (0.6,), np.zeros((1, 1)), N)
    W = rng.standard_normal((12, N))
    clock = DiffusionClock(0.4)
    V = gep_V(W, spec, clock, activation=IDENTITY).V
    np.testing.assert_allclose(V, math.sqrt(clock.delta / N) * W, rtol=1e-12)


def test_gep_V_is_weighted_sum_of_class_blocks(rng):
    spec, W, C, _, clock = _setup(rng)
    out, blocks = gep_V(W, spec, clock, C, per_class=True)
    np.testing.assert_allclose(out.V, sum(b * B for b, B in zip(spec.weights, blocks)), rtol=1e-14)


def test_population_is_average_of_gep(rng):
    spec, W, C, _, clock = _setup(rng, N=20, P=30, M=100)
    co = coeffs_vector(W, spec, C, clock)
    reps = np.array([gep_U(sample_dataset(spec, C, 100, rng), W, spec, C, clock, rng, coeffs=co).U
                     for _ in range(50)])
    se = reps.std(axis=0, ddof=1) / math.sqrt(50)
    z = np.abs(reps.mean(0) - population_U(W, spec, C, clock, coeffs=co).U) / np.maximum(se, 1e-15)
    assert np.mean(z > 3) < 0.01


def test_population_centered_single_class(rng):
    N, P = 20, 15
    spec = MixtureSpec((1.0,), (0.5,), np.zeros((1, 1)), N)
    W = rng.standard_normal((P, N))
    clock = DiffusionClock(0.2)
    co = coeffs_vector(W, spec, np.zeros((1, N)), clock)
    gt, bt = co.gamma_tilde[0, 0], co.beta_tilde[0, 0]
    expect = gt ** 2 * W @ W.T / N + (bt - gt ** 2) * np.eye(P)
    np.testing.assert_allclose(population_U(W, spec, np.zeros((1, N)), clock).U, expect, atol=1e-13)


def test_population_rank_structure_scaling(rng):
    N = 50
    ratios = []
    for P in (500, 1000, 2000):
        spec, W, C, _, clock = _setup(rng, N=N, P=P, M=10)
        co = coeffs_vector(W, spec, C, clock)
        U = population_U(W, spec, C, clock, coeffs=co).U
        low = sum(b * np.outer(co.alpha[c], co.alpha[c]) for c, b in enumerate(spec.weights))
        ratios.append(np.linalg.norm(U - low) / (P / N))
    assert max(ratios) / min(ratios) < 1.5


def test_class_weight_linearity(rng):
    spec, W, C, _, clock = _setup(rng)
    blocks = population_blocks(W, spec, C, clock)
    for c in range(2):
        e = [0.0, 0.0]
        e[c] = 1.0
        np.testing.assert_allclose(population_U(W, spec.replace(weights=tuple(e)), C, clock).U,
                                   blocks[c], atol=1e-14)
    U = population_U(W, spec.replace(weights=(0.3, 0.7)), C, clock).U
    np.testing.assert_allclose(U, 0.3 * blocks[0] + 0.7 * blocks[1], atol=1e-13)


def test_split_zero_for_identical(rng):
    spec, W, C, _, clock = _setup(rng)
    pop = population_U(W, spec, C, clock)
    s = split_gen_mem(pop, pop, 1.5, 5.0)
    assert s.frobenius == 0.0 and s.ratio == 0.0


def test_split_large_data_small(rng):
    N = 50
    spec, W, C, ds, clock = _setup(rng, N=N, P=1000, M=50 * N)
    pop = population_U(W, spec, C, clock)
    s = split_gen_mem(gep_U(ds, W, spec, C, clock, rng), pop)
    assert s.frobenius / np.linalg.norm(pop.U) <= 0.2


def test_split_ratio_stable_in_chi_m(rng):
    N, P = 50, 1000
    ratios = []
    for cm in (10, 20, 40):
        spec, W, C, ds, clock = _setup(rng, N=N, P=P, M=cm * N)
        s = split_gen_mem(gep_U(ds, W, spec, C, clock, rng), population_U(W, spec, C, clock), P / N, cm)
        ratios.append(s.ratio)
    m = np.mean(ratios)
    assert all(abs(r - m) <= 0.25 * m for r in ratios)


def test_largetime_close_to_gep(rng):
    spec, W, C, ds, _ = _setup(rng, N=60, P=100, M=300)
    clock = DiffusionClock(10.0)
    Ug = gep_U(ds, W, spec, C, clock, rng).U
    Ul = largetime_U(W, spec, C, clock).U
    assert np.linalg.norm(Ug - Ul) / np.linalg.norm(Ug) <= 1e-3


def test_largetime_zero_centroids_is_shifted_wishart(rng):
    N, P = 30, 40
    spec = MixtureSpec((0.5, 0.5), (0.5, 0.25), np.zeros((2, 2)), N)
    W = rng.standard_normal((P, N))
    g, bt = largetime_scalars()
    U = largetime_U(W, spec, np.zeros((2, N)), DiffusionClock(1.0)).U
    np.testing.assert_allclose(U, g * g * W @ W.T / N + (bt - g * g) * np.eye(P), atol=1e-13)


def test_largetime_minority_spike(rng):
    # the rank-one class-2 term is b2 gamma^2 e^{-2t} |mu_2|^2 and reaches O(1)
    # when e^{-2t} N^{1-a} = 1
    N, P, a = 400, 800, 0.5
    b2 = N ** -a
    spec = MixtureSpec((1 - b2, b2), (1.0, 1.0), np.diag([0.0, 1.0]), N)
    W = rng.standard_normal((P, N))
    C = realize_centroids(spec, rng)
    g, _ = largetime_scalars()
    t = 0.5 * (1 - a) * math.log(N)
    clock = DiffusionClock(t)
    mu2 = W @ C[1] / math.sqrt(N)
    rank_one = largetime_U(W, spec, C, clock).U - largetime_U(W, spec.replace(centroid_gram=np.zeros((2, 2))),
                                                           np.zeros_like(C), clock).U
    norm = np.linalg.norm(rank_one, 2)
    assert norm == pytest.approx(b2 * g * g * clock.decay ** 2 * (mu2 @ mu2), rel=1e-10)
    assert norm == pytest.approx(g * g * P / N, rel=0.15)


def test_all_variants_psd(rng):
    spec, W, C, ds, clock = _setup(rng)
    for U in (empirical_U(ds, W, clock, 20, rng).U, gep_U(ds, W, spec, C, clock, rng).U,
              population_U(W, spec, C, clock).U, largetime_U(W, spec, C, clock).U):
        assert _psd(U)


def test_eigh_sym_ascending(rng):
    A = rng.standard_normal((5, 5))
    w, v = eigh_sym(FeatureCovariance(A @ A.T, "gep", 0.1))
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, A @ A.T, atol=1e-12)


def test_histogram_tv_bounds(rng):
    a = rng.uniform(1, 2, 1000)
    assert histogram_tv(a, a) == 0.0
    assert histogram_tv(a, a + 10, log=False) == pytest.approx(1.0)
    assert 0 <= histogram_tv(a, rng.uniform(1, 2, 1000)) < 0.2


def test_matrix_dump_round_trip(tmp_path, rng):
    U = rng.standard_normal((4, 3))
    p = tmp_path / "u.bin"
    dump_matrix(p, U, 17, "gep", 0.01)
    V, N, kind, t = load_matrix(p)
    np.testing.assert_array_equal(U, V)
    assert (N, kind, t) == (17, "gep", 0.01)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_matrix(tmp_path / "bad.bin")
