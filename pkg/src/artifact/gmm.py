"""Gaussian mixtures: parameters, sampling, forward noising, exact score."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class MixtureSpec:
    """C isotropic Gaussian classes in dimension N.

    ``centroid_gram[c, c'] = m_c . m_c' / N``; the diagonal holds the squared
    normalised centroid norms.
    """

    weights: tuple[float, ...]
    variances: tuple[float, ...]
    centroid_gram: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        b = np.asarray(self.weights, dtype=float)
        s2 = np.asarray(self.variances, dtype=float)
        r = np.array(self.centroid_gram, dtype=float, copy=True)
        object.__setattr__(self, "weights", tuple(float(x) for x in b))
        object.__setattr__(self, "variances", tuple(float(x) for x in s2))
        r.setflags(write=False)
        object.__setattr__(self, "centroid_gram", r)
        C = len(b)
        if C < 1:
            raise ValueError("need at least one class")
        if s2.shape != (C,):
            raise ValueError("variances must have one entry per class")
        if r.shape != (C, C):
            raise ValueError(f"centroid_gram must be {C}x{C}")
        if np.any(b < 0) or abs(b.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {b}")
        if np.any(s2 <= 0):
            raise ValueError("variances must be positive")
        if not np.allclose(r, r.T, atol=1e-12):
            raise ValueError("centroid_gram must be symmetric")
        if int(self.dim) < 1:
            raise ValueError("dim must be positive")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def n_classes(self) -> int:
        return len(self.weights)

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def sigma2(self) -> np.ndarray:
        return np.asarray(self.variances)

    def replace(self, **kw) -> "MixtureSpec":
        d = dict(weights=self.weights, variances=self.variances,
                 centroid_gram=self.centroid_gram, dim=self.dim)
        d.update(kw)
        return MixtureSpec(**d)

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "variances": list(self.variances),
            "centroid_gram": self.centroid_gram.tolist(),
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(weights=tuple(d["weights"]), variances=tuple(d["variances"]),
                   centroid_gram=np.asarray(d["centroid_gram"], dtype=float),
                   dim=int(d["dim"]))


def orthogonal_gram(norms2: Sequence[float]) -> np.ndarray:
    """Gram matrix of mutually orthogonal centroids with given m_c^2."""
    return np.diag(np.asarray(norms2, dtype=float))


def strong_imbalance_weights(N: int, a: float) -> tuple[float, float]:
    """(1 - N^-a, N^-a): the minority class is scarce at rate a."""
    b2 = float(N) ** (-a)
    return (1.0 - b2, b2)


def spec_from_descriptor_table(path: str | Path, dim: int,
                               weights: Sequence[float] | None = None) -> MixtureSpec:
    """Build a spec from a CSV with columns
    class, variance, centroid_norm_normalized, cosine_to_reference.

    The first row is the reference class; its cosine entry is ignored.
    Pairwise cosines between non-reference classes are not part of the
    table and are set to the product of their cosines with the reference.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty descriptor table")
    var = np.array([float(r["variance"]) for r in rows])
    norm = np.array([float(r["centroid_norm_normalized"]) for r in rows])
    cos = np.array([float(r["cosine_to_reference"]) for r in rows])
    cos[0] = 1.0
    C = len(rows)
    cosmat = np.outer(cos, cos)
    np.fill_diagonal(cosmat, 1.0)
    gram = cosmat * np.outer(norm, norm)
    if weights is None:
        weights = np.full(C, 1.0 / C)
    return MixtureSpec(tuple(weights), tuple(var), gram, dim)


@dataclass(frozen=True)
class DiffusionClock:
    """Ornstein-Uhlenbeck forward time t."""

    t: float

    def __post_init__(self) -> None:
        if not self.t >= 0:
            raise ValueError(f"diffusion time must be >= 0, got {self.t}")
        object.__setattr__(self, "t", float(self.t))

    @property
    def decay(self) -> float:
        return math.exp(-self.t)

    @property
    def delta(self) -> float:
        return -math.expm1(-2.0 * self.t)

    def gamma2(self, variances) -> np.ndarray:
        """Per-class variance at time t: sigma^2 e^{-2t} + Delta_t."""
        return np.asarray(variances, dtype=float) * math.exp(-2.0 * self.t) + self.delta

    def gamma(self, variances) -> np.ndarray:
        return np.sqrt(self.gamma2(variances))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def realize_centroids(spec: MixtureSpec, seed=None) -> np.ndarray:
    """C x N centroid matrix whose normalised Gram equals ``spec.centroid_gram``."""
    C, N = spec.n_classes, spec.dim
    r = spec.centroid_gram
    evals, evecs = np.linalg.eigh(r)
    if evals.min() < -1e-10:
        raise ValueError(f"centroid_gram is not PSD (min eigenvalue {evals.min():.3e})")
    if C > N:
        raise ValueError("need n_classes <= dim to embed the centroids")
    L = evecs * np.sqrt(np.clip(evals, 0.0, None) * N)  # L L^T = N r
    # random orthonormal C-frame = first C columns of a Haar rotation
    g = _rng(seed).standard_normal((N, C))
    q, rr = np.linalg.qr(g)
    q = q * np.sign(np.diag(rr))
    return L @ q.T


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    weights: tuple[float, ...]
    warnings: list[str] = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.weights)

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]

    def index_sets(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(self.n_classes)]

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def class_counts(weights: Sequence[float], M: int) -> np.ndarray:
    """Largest-remainder rounding of b_c M; ties go to the lower class index."""
    b = np.asarray(weights, dtype=float)
    raw = b * M
    base = np.floor(raw + 1e-9).astype(int)
    rem = raw - base
    short = M - base.sum()
    order = np.lexsort((np.arange(len(b)), -rem))
    base[order[:short]] += 1
    return base


def sample_dataset(spec: MixtureSpec, centroids: np.ndarray, M: int, seed=None) -> Dataset:
    rng = _rng(seed)
    counts = class_counts(spec.weights, M)
    notes = []
    for c, (mc, bc) in enumerate(zip(counts, spec.weights)):
        if mc == 0 and bc > 0:
            msg = f"class {c} has b={bc:g} but no samples at M={M}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
    labels = np.repeat(np.arange(spec.n_classes), counts)
    sig = np.sqrt(spec.sigma2)[labels]
    X = centroids[labels] + sig[:, None] * rng.standard_normal((M, spec.dim))
    return Dataset(X=X, labels=labels, weights=spec.weights, warnings=notes)


def forward_noise(x: np.ndarray, clock: DiffusionClock, seed=None):
    """Return (x e^{-t} + sqrt(Delta_t) xi, xi)."""
    x = np.asarray(x, dtype=float)
    xi = _rng(seed).standard_normal(x.shape)
    return x * clock.decay + math.sqrt(clock.delta) * xi, xi


def log_density(x: np.ndarray, clock: DiffusionClock, spec: MixtureSpec,
                centroids: np.ndarray) -> np.ndarray:
    """log p_t(x) for the noised mixture; rows of ``x`` are points."""
    x = np.atleast_2d(x)
    g2 = clock.gamma2(spec.variances)
    N = x.shape[1]
    d2 = ((x[:, None, :] - clock.decay * centroids[None]) ** 2).sum(-1)
    with np.errstate(divide="ignore"):
        logb = np.log(spec.b)
    logp = logb - 0.5 * d2 / g2 - 0.5 * N * np.log(2 * np.pi * g2)
    return logsumexp(logp, axis=1)


def true_score(x: np.ndarray, clock: DiffusionClock, spec: MixtureSpec,
               centroids: np.ndarray) -> np.ndarray:
    """Exact score of the noised mixture, with log-sum-exp responsibilities."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    N = x2.shape[1]
    g2 = clock.gamma2(spec.variances)
    diff = x2[:, None, :] - clock.decay * centroids[None]
    d2 = (diff ** 2).sum(-1)
    with np.errstate(divide="ignore"):
        logb = np.log(spec.b)
    logp = logb - 0.5 * d2 / g2 - 0.5 * N * np.log(g2)
    resp = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    s = -np.einsum("mc,mcn->mn", resp / g2, diff)
    return s[0] if single else s
