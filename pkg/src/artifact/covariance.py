"""Feature correlation matrices U (P x P) and feature-noise matrices V (P x N)."""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gep import TANH, Activation, GepCoefficients, coeffs_vector, get_activation, largetime_scalars
from .gmm import Dataset, DiffusionClock, MixtureSpec


@dataclass
class FeatureCovariance:
    U: np.ndarray
    kind: str  # empirical | gep | population | large_time
    t: float
    notes: list[str] = field(default_factory=list)


@dataclass
class NoiseCovariance:
    V: np.ndarray
    kind: str  # empirical | gep
    t: float
    notes: list[str] = field(default_factory=list)


def symmetrize(U: np.ndarray) -> np.ndarray:
    return 0.5 * (U + U.T)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def features(X: np.ndarray, W: np.ndarray, activation: Activation | str = TANH) -> np.ndarray:
    """phi(W x / sqrt(N)) for each row x of X."""
    act = get_activation(activation)
    return act.fn(X @ W.T / math.sqrt(W.shape[1]))


def empirical_UV(dataset: Dataset, W: np.ndarray, clock: DiffusionClock,
                 n_noise_draws: int = 100, seed=None,
                 activation: Activation | str = TANH):
    """Monte Carlo U and V from the same noise draws.

    Per class c, U_c and V_c average over the M_c samples and the noise draws;
    the returned matrices weight the class blocks by b_c.
    """
    if n_noise_draws < 1:
        raise ValueError("n_noise_draws must be >= 1")
    act = get_activation(activation)
    rng = _rng(seed)
    P, N = W.shape
    C = dataset.n_classes
    idx = dataset.index_sets()
    Uc = np.zeros((C, P, P))
    Vc = np.zeros((C, P, N))
    Xd = dataset.X * clock.decay
    sq = math.sqrt(clock.delta)
    WT = W.T / math.sqrt(N)
    for _ in range(n_noise_draws):
        xi = rng.standard_normal(Xd.shape)
        F = act.fn((Xd + sq * xi) @ WT)
        for c in range(C):
            Fc = F[idx[c]]
            Uc[c] += Fc.T @ Fc
            Vc[c] += Fc.T @ xi[idx[c]]
    U = np.zeros((P, P))
    V = np.zeros((P, N))
    notes = []
    for c in range(C):
        Mc = len(idx[c])
        if Mc == 0:
            if dataset.weights[c] > 0:
                msg = f"class {c} is empty; contributes zero"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
            continue
        scale = dataset.weights[c] / (Mc * n_noise_draws)
        U += scale * Uc[c]
        V += scale * Vc[c]
    return (FeatureCovariance(symmetrize(U), "empirical", clock.t, notes),
            NoiseCovariance(V, "empirical", clock.t, list(notes)))


def empirical_U(dataset, W, clock, n_noise_draws=100, seed=None, activation=TANH) -> FeatureCovariance:
    return empirical_UV(dataset, W, clock, n_noise_draws, seed, activation)[0]


def empirical_V(dataset, W, clock, n_noise_draws=100, seed=None, activation=TANH) -> NoiseCovariance:
    return empirical_UV(dataset, W, clock, n_noise_draws, seed, activation)[1]


def _coeffs(W, spec, centroids, clock, activation, coeffs):
    if coeffs is None:
        coeffs = coeffs_vector(W, spec, centroids, clock, activation)
    return coeffs


def gep_U(dataset: Dataset, W: np.ndarray, spec: MixtureSpec, centroids: np.ndarray,
          clock: DiffusionClock, seed=None, activation: Activation | str = TANH,
          coeffs: GepCoefficients | None = None, WWt: np.ndarray | None = None) -> FeatureCovariance:
    """Gaussian-equivalent U built from the dataset with fresh GEP noise."""
    rng = _rng(seed)
    co = _coeffs(W, spec, centroids, clock, activation, coeffs)
    P, N = W.shape
    if WWt is None:
        WWt = W @ W.T
    U = np.zeros((P, P))
    idx = dataset.index_sets()
    sig2 = spec.sigma2
    kappa = clock.delta / (sig2 * clock.decay ** 2)
    notes = []
    for c in range(spec.n_classes):
        Mc = len(idx[c])
        if Mc == 0:
            if spec.weights[c] > 0:
                notes.append(f"class {c} is empty; sample term dropped")
            G_term = np.zeros((P, P))
        else:
            Z = (dataset.X[idx[c]] - centroids[c]) @ W.T / (math.sqrt(sig2[c]) * math.sqrt(N))
            G = co.alpha[c] + Z * co.gamma[c] + np.sqrt(co.h2[c]) * rng.standard_normal((Mc, P))
            G_term = G.T @ G / Mc
        g = co.gamma[c]
        block = G_term + (kappa[c] / N) * (np.outer(g, g) * WWt)
        block[np.diag_indices(P)] += co.varsigma[c]
        U += spec.weights[c] * block
    return FeatureCovariance(symmetrize(U), "gep", clock.t, notes)


def gep_V(W: np.ndarray, spec: MixtureSpec, clock: DiffusionClock,
          centroids: np.ndarray | None = None, activation: Activation | str = TANH,
          coeffs: GepCoefficients | None = None, per_class: bool = False):
    """V = sum_c b_c sqrt(Delta/N) (gamma_tilde_c / Gamma_c) * W (rowwise)."""
    P, N = W.shape
    if centroids is None:
        centroids = np.zeros((spec.n_classes, N))
    co = _coeffs(W, spec, centroids, clock, activation, coeffs)
    Gam = clock.gamma(spec.variances)
    pref = math.sqrt(clock.delta / N)
    blocks = [pref * (co.gamma_tilde[c] / Gam[c])[:, None] * W for c in range(spec.n_classes)]
    V = sum(b * Vc for b, Vc in zip(spec.weights, blocks))
    out = NoiseCovariance(V, "gep", clock.t)
    if per_class:
        return out, blocks
    return out


def population_blocks(W: np.ndarray, spec: MixtureSpec, centroids: np.ndarray,
                      clock: DiffusionClock, activation: Activation | str = TANH,
                      coeffs: GepCoefficients | None = None,
                      WWt: np.ndarray | None = None) -> list[np.ndarray]:
    """Per-class population matrices U~_c."""
    co = _coeffs(W, spec, centroids, clock, activation, coeffs)
    P, N = W.shape
    if WWt is None:
        WWt = W @ W.T
    out = []
    for c in range(spec.n_classes):
        a, gt = co.alpha[c], co.gamma_tilde[c]
        B = np.outer(a, a) + np.outer(gt, gt) * WWt / N
        B[np.diag_indices(P)] += co.beta_tilde[c] - a * a - gt * gt
        out.append(symmetrize(B))
    return out


def population_U(W, spec, centroids, clock, activation=TANH, coeffs=None, WWt=None) -> FeatureCovariance:
    blocks = population_blocks(W, spec, centroids, clock, activation, coeffs, WWt)
    U = sum(b * B for b, B in zip(spec.weights, blocks))
    return FeatureCovariance(U, "population", clock.t)


@dataclass
class GenMemSplit:
    delta_U: np.ndarray
    frobenius: float
    ratio: float  # ||dU||_F / (chi_p / sqrt(chi_m))


def split_gen_mem(U_gep: np.ndarray | FeatureCovariance, U_pop: np.ndarray | FeatureCovariance,
                  chi_p: float | None = None, chi_m: float | None = None) -> GenMemSplit:
    a = U_gep.U if isinstance(U_gep, FeatureCovariance) else U_gep
    b = U_pop.U if isinstance(U_pop, FeatureCovariance) else U_pop
    d = a - b
    fro = float(np.linalg.norm(d))
    ratio = fro / (chi_p / math.sqrt(chi_m)) if chi_p and chi_m else float("nan")
    return GenMemSplit(d, fro, ratio)


def largetime_U(W: np.ndarray, spec: MixtureSpec, centroids: np.ndarray, clock: DiffusionClock,
                activation: Activation | str = TANH, WWt: np.ndarray | None = None) -> FeatureCovariance:
    """gamma^2 WW^T/N + (beta_tilde - gamma^2) I + gamma^2 e^{-2t} sum_c b_c mu_c mu_c^T."""
    g, bt = largetime_scalars(activation)
    P, N = W.shape
    if WWt is None:
        WWt = W @ W.T
    mu = centroids @ W.T / math.sqrt(N)
    U = (g * g / N) * WWt
    U[np.diag_indices(P)] += bt - g * g
    Mu = mu * np.sqrt(spec.b)[:, None]
    U += g * g * clock.decay ** 2 * (Mu.T @ Mu)
    return FeatureCovariance(symmetrize(U), "large_time", clock.t)


def eigh_sym(U: np.ndarray | FeatureCovariance):
    """Eigenpairs of the symmetrised matrix, ascending."""
    a = U.U if isinstance(U, FeatureCovariance) else U
    return np.linalg.eigh(symmetrize(a))


def histogram_tv(a: np.ndarray, b: np.ndarray, bins: int = 60, log: bool = True,
                 floor: float | None = None) -> float:
    """Total-variation distance between histograms of two eigenvalue samples.

    Bins span the union of both samples (log-spaced if ``log``); values below
    ``floor`` are dropped from both samples first.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if floor is not None:
        a = a[a > floor]
        b = b[b > floor]
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if log:
        lo = max(lo, 1e-300)
        edges = np.geomspace(lo, hi * (1 + 1e-12), bins + 1)
    else:
        edges = np.linspace(lo, hi + 1e-12 * abs(hi), bins + 1)
    pa, _ = np.histogram(a, edges)
    pb, _ = np.histogram(b, edges)
    return 0.5 * float(np.abs(pa / pa.sum() - pb / pb.sum()).sum())


_MAGIC = b"RFUD"


def dump_matrix(path: str | Path, U: np.ndarray, N: int, kind: str, t: float) -> None:
    """Row-major little-endian float64 with a header (magic, P, cols, N, kind, t)."""
    U = np.ascontiguousarray(U, dtype="<f8")
    rows, cols = U.shape
    tag = kind.encode()[:16].ljust(16, b"\0")
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<QQQ16sd", rows, cols, N, tag, t))
        fh.write(U.tobytes())


def load_matrix(path: str | Path):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a matrix dump")
        rows, cols, N, tag, t = struct.unpack("<QQQ16sd", fh.read(struct.calcsize("<QQQ16sd")))
        U = np.frombuffer(fh.read(), dtype="<f8").reshape(rows, cols).copy()
    return U, int(N), tag.rstrip(b"\0").decode(), float(t)
