"""RMS overlap of projected centroids with the top eigenvectors of U across time."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .covariance import FeatureCovariance, gep_U, largetime_U, symmetrize
from .gep import TANH, Activation, get_activation
from .gmm import (DiffusionClock, MixtureSpec, orthogonal_gram, realize_centroids,
                  sample_dataset, strong_imbalance_weights)

DEGENERACY_GAP = 1e-12


@dataclass(frozen=True)
class Imbalance:
    """How class sizes (or centroid norms) scale with N.

    kind = "weak": fixed weights ``b``.
    kind = "strong": b = (1 - N^-a, N^-a), the minority is class 1.
    kind = "subextensive": balanced weights, ||m_c||^2 = N^(1-a) for class ``cls``.
    """

    kind: str
    b: tuple[float, ...] | None = None
    a: float = 0.0
    cls: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("weak", "strong", "subextensive"):
            raise ValueError(f"unknown imbalance kind {self.kind!r}")
        if self.kind == "weak" and self.b is None:
            raise ValueError("weak imbalance needs weights b")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("exponent a must lie in [0, 1]")

    def exponents(self, C: int) -> np.ndarray:
        """Per-class effective exponent a_c."""
        a = np.zeros(C)
        if self.kind == "strong":
            a[C - 1] = self.a
        elif self.kind == "subextensive":
            a[self.cls] = self.a
        return a

    def spec_for(self, template: MixtureSpec, N: int) -> MixtureSpec:
        C = template.n_classes
        if self.kind == "weak":
            return template.replace(weights=tuple(self.b), dim=N)
        if self.kind == "strong":
            if C != 2:
                raise ValueError("strong imbalance is defined for two classes")
            return template.replace(weights=strong_imbalance_weights(N, self.a), dim=N)
        norms2 = np.diag(template.centroid_gram).copy()
        norms2[self.cls] = float(N) ** (-self.a)
        return template.replace(weights=tuple(np.full(C, 1.0 / C)),
                                centroid_gram=orthogonal_gram(norms2), dim=N)


@dataclass
class Prediction:
    t_s: np.ndarray        # per class, leading order
    t_tilde_s: np.ndarray  # t_s / log N
    note: str = "O(1) correction unknown"


def predict_speciation(spec: MixtureSpec, N: int, imbalance: Imbalance) -> Prediction:
    """Leading-order speciation times: t_s = (1 - a_c)/2 log N."""
    if N < 2:
        raise ValueError("N must be at least 2")
    a = imbalance.exponents(spec.n_classes)
    tt = 0.5 * (1.0 - a)
    return Prediction(tt * math.log(N), tt)


@dataclass
class Overlap:
    rms: np.ndarray           # (C,)
    per_run: np.ndarray       # (runs, C) squared-overlap sums
    degenerate: bool
    k_used: int


def _top_eigvecs(U: np.ndarray, k: int):
    P = U.shape[0]
    kk = min(P, k + 1)
    w, v = linalg.eigh(symmetrize(U), subset_by_index=[P - kk, P - 1])
    w, v = w[::-1], v[:, ::-1]
    if k < kk and abs(w[k - 1] - w[k]) < DEGENERACY_GAP * max(1.0, abs(w[k - 1])):
        # widen to the full invariant subspace of the k-th eigenvalue
        n = k
        while True:
            m = min(P, 2 * n + 2)
            w, v = linalg.eigh(symmetrize(U), subset_by_index=[P - m, P - 1])
            w, v = w[::-1], v[:, ::-1]
            close = np.abs(w - w[k - 1]) < DEGENERACY_GAP * max(1.0, abs(w[k - 1]))
            last = int(np.flatnonzero(close)[-1]) + 1
            if last < m or m == P:
                return v[:, :last], True
            n = m
    return v[:, :k], False


def rms_overlap(Us: Sequence[np.ndarray | FeatureCovariance] | np.ndarray | FeatureCovariance,
                mus: Sequence[np.ndarray] | np.ndarray, k: int | None = None) -> Overlap:
    """RMS_c = sqrt(mean over runs of sum_i (mu_c . psi_i)^2 / |mu_c|^2).

    ``Us`` is one matrix or one per run; ``mus`` is (C, P) or one such array per run.
    """
    if isinstance(Us, (np.ndarray, FeatureCovariance)) and np.ndim(getattr(Us, "U", Us)) == 2:
        Us = [Us]
        mus = [np.asarray(mus)]
    if len(Us) != len(mus):
        raise ValueError("need one centroid set per matrix")
    C = np.asarray(mus[0]).shape[0]
    k = C if k is None else int(k)
    rows = []
    degenerate = False
    k_used = k
    for U, mu in zip(Us, mus):
        U = U.U if isinstance(U, FeatureCovariance) else np.asarray(U)
        mu = np.asarray(mu, dtype=float)
        if not 1 <= k <= U.shape[0]:
            raise ValueError("k must lie in [1, P]")
        psi, deg = _top_eigvecs(U, k)
        degenerate |= deg
        k_used = max(k_used, psi.shape[1])
        proj = mu @ psi
        norms = np.einsum("cp,cp->c", mu, mu)
        with np.errstate(invalid="ignore", divide="ignore"):
            rows.append(np.where(norms > 0, np.einsum("ck,ck->c", proj, proj) / norms, 0.0))
    per_run = np.array(rows)
    return Overlap(np.sqrt(per_run.mean(axis=0)), per_run, degenerate, k_used)


@dataclass
class SpeciationCurve:
    N: int
    P: int
    M: int
    n_runs: int
    imbalance: Imbalance
    t_tilde: np.ndarray
    rms_mean: np.ndarray    # (T, C)
    rms_stderr: np.ndarray  # (T, C), of the per-run RMS
    prediction: Prediction
    flags: list[str] = field(default_factory=list)

    def crossing(self, level: float = 0.5) -> np.ndarray:
        return np.array([crossing_time(self.t_tilde, self.rms_mean[:, c], level)
                         for c in range(self.rms_mean.shape[1])])

    def rows(self):
        for i, tt in enumerate(self.t_tilde):
            for c in range(self.rms_mean.shape[1]):
                yield {"t_tilde": tt, "class": c, "rms_mean": self.rms_mean[i, c],
                       "rms_stderr": self.rms_stderr[i, c], "n": self.N, "p": self.P}


def crossing_time(t_tilde: np.ndarray, rms: np.ndarray, level: float = 0.5) -> float:
    """Scanning down from the largest t~, the first place RMS exceeds ``level``;
    linear interpolation between the bracketing grid points. NaN if never."""
    order = np.argsort(t_tilde)[::-1]
    t = np.asarray(t_tilde, dtype=float)[order]
    r = np.asarray(rms, dtype=float)[order]
    for i in range(len(t)):
        if r[i] > level:
            if i == 0:
                return float(t[0])
            f = (level - r[i - 1]) / (r[i] - r[i - 1])
            return float(t[i - 1] + f * (t[i] - t[i - 1]))
    return float("nan")


def default_runs(P: int) -> int:
    return 50 if P <= 1000 else 10


def speciation_sweep(template: MixtureSpec, sizes: Sequence[tuple[int, int]],
                     imbalance: Imbalance, t_tilde: Sequence[float], M: int,
                     n_runs: int | None = None, seed=None, method: str = "gep",
                     activation: Activation | str = TANH, k: int | None = None) -> list[SpeciationCurve]:
    """One curve per (N, P). Each run draws W, centroids and data once and
    reuses them for every t~."""
    if method not in ("gep", "largetime"):
        raise ValueError("method must be 'gep' or 'largetime'")
    act = get_activation(activation)
    ss = np.random.SeedSequence(seed)
    t_tilde = np.asarray(t_tilde, dtype=float)
    curves = []
    for (N, P), child in zip(sizes, ss.spawn(len(sizes))):
        spec = imbalance.spec_for(template, N)
        C = spec.n_classes
        runs = default_runs(P) if n_runs is None else int(n_runs)
        flags = []
        small = [c for c in range(C) if spec.weights[c] * M < 1]
        if small:
            flags.append(f"classes {small} have b_c M < 1; population term only")
        sq = np.zeros((len(t_tilde), runs, C))
        for r, rs in enumerate(child.spawn(runs)):
            rng = np.random.default_rng(rs)
            W = rng.standard_normal((P, N))
            cents = realize_centroids(spec, rng)
            data = sample_dataset(spec, cents, M, rng) if method == "gep" else None
            WWt = W @ W.T
            mu = cents @ W.T / math.sqrt(N)
            for i, tt in enumerate(t_tilde):
                clock = DiffusionClock(tt * math.log(N))
                if method == "gep":
                    U = gep_U(data, W, spec, cents, clock, rng, act, WWt=WWt)
                else:
                    U = largetime_U(W, spec, cents, clock, act, WWt=WWt)
                ov = rms_overlap(U, mu, k)
                if ov.degenerate:
                    flags.append(f"degenerate top eigenvalues at t~={tt:g}, run {r}")
                sq[i, r] = ov.per_run[0]
        rms_mean = np.sqrt(sq.mean(axis=1))
        per_run_rms = np.sqrt(sq)
        stderr = per_run_rms.std(axis=1, ddof=1) / math.sqrt(runs) if runs > 1 else np.zeros_like(rms_mean)
        curves.append(SpeciationCurve(N, P, M, runs, imbalance, t_tilde, rms_mean, stderr,
                                      predict_speciation(spec, N, imbalance), flags))
    return curves
