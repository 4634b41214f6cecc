"""Hermite coefficients of the Gaussian-equivalent feature model.

For class c at diffusion time t the pre-activation of feature p is
Gamma_c z + e^{-t} mu_c[p] with mu_c = W m_c / sqrt(N). The coefficients are

    alpha      = E[phi(Gamma z + e^{-t} mu)]
    beta_tilde = E[phi(Gamma z + e^{-t} mu)^2]
    gamma_tilde= E[z phi(Gamma z + e^{-t} mu)]
    beta       = E[phi(Gamma u + e^{-t} mu) phi(Gamma v + e^{-t} mu)],
                 corr(u, v) = sigma^2 e^{-2t} / Gamma^2
    gamma      = (sigma e^{-t} / Gamma) gamma_tilde
    varsigma   = beta_tilde - beta - Delta/(sigma^2 e^{-2t}) gamma^2
    h2         = beta - alpha^2 - gamma^2
"""
from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .gmm import DiffusionClock, MixtureSpec
from .quadrature import QuadratureRule, correlated_nodes, make_rule

CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    odd: bool


TANH = Activation("tanh", np.tanh, odd=True)
# linear hook used by tests; not a model choice
IDENTITY = Activation("identity", lambda x: np.asarray(x, dtype=float), odd=True)

ACTIVATIONS = {"tanh": TANH, "identity": IDENTITY}


def get_activation(act: Activation | str) -> Activation:
    if isinstance(act, str):
        try:
            act = ACTIVATIONS[act]
        except KeyError:
            raise ValueError(f"unknown activation {act!r}") from None
    if not act.odd:
        raise ValueError(f"activation {act.name!r} is not odd; only odd activations are supported")
    return act


@dataclass(frozen=True)
class GepCoefficients:
    """Arrays are (C, P) for the vector form and (C,) for the centered scalars."""

    alpha: np.ndarray
    beta: np.ndarray
    beta_tilde: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    varsigma: np.ndarray
    h2: np.ndarray
    mu: np.ndarray | None
    t: float
    clamp_count: int = 0

    @property
    def n_classes(self) -> int:
        return self.alpha.shape[0]


def _clamp(x: np.ndarray, name: str) -> tuple[np.ndarray, int]:
    bad = x < -CLAMP_TOL
    if np.any(bad):
        raise FloatingPointError(
            f"{name} has entries below -{CLAMP_TOL:g} (min {x.min():.3e}); quadrature too coarse")
    neg = x < 0
    return np.where(neg, 0.0, x), int(neg.sum())


def _derived(alpha, beta, beta_tilde, gamma_tilde, sigma2, clock):
    """gamma, varsigma and h2 from the primitive expectations."""
    s = np.sqrt(sigma2)[:, None] if np.ndim(alpha) == 2 else np.sqrt(sigma2)
    g = np.sqrt(clock.gamma2(sigma2))
    g = g[:, None] if np.ndim(alpha) == 2 else g
    gamma = s * clock.decay / g * gamma_tilde
    ratio = clock.delta / ((s * clock.decay) ** 2)
    varsigma = beta_tilde - beta - ratio * gamma ** 2
    h2 = beta - alpha ** 2 - gamma ** 2
    varsigma, n1 = _clamp(varsigma, "varsigma")
    h2, n2 = _clamp(h2, "h2")
    return gamma, varsigma, h2, n1 + n2


_CACHE: dict[str, GepCoefficients] = {}
_CACHE_LOCK = threading.Lock()


def _key(*parts) -> str:
    h = hashlib.sha1()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p, dtype=float).tobytes())
            h.update(str(p.shape).encode())
        else:
            h.update(repr(p).encode())
    return h.hexdigest()


def clear_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def _vector_moments(phi, mean: np.ndarray, Gam: float, corr: float,
                    rule: QuadratureRule, chunk: int = 512):
    """alpha, beta_tilde, gamma_tilde, beta for each entry of ``mean``."""
    x, w = rule.nodes, rule.weights
    P = mean.shape[0]
    alpha = np.empty(P)
    bt = np.empty(P)
    gt = np.empty(P)
    beta = np.empty(P)
    if corr >= 1.0:
        u = v = wt = None
    else:
        u, v, wt = correlated_nodes(corr, rule)
    for s in range(0, P, chunk):
        m = mean[s:s + chunk, None]
        f = phi(Gam * x + m)
        alpha[s:s + chunk] = f @ w
        bt[s:s + chunk] = (f * f) @ w
        gt[s:s + chunk] = f @ (w * x)
        if u is None:
            beta[s:s + chunk] = bt[s:s + chunk]
        else:
            beta[s:s + chunk] = (phi(Gam * u + m) * phi(Gam * v + m)) @ wt
    return alpha, bt, gt, beta


def coeffs_vector(W: np.ndarray, spec: MixtureSpec, centroids: np.ndarray,
                  clock: DiffusionClock, activation: Activation | str = TANH,
                  rule: QuadratureRule | None = None) -> GepCoefficients:
    """Per-feature coefficient vectors, cached on a hash of the inputs."""
    act = get_activation(activation)
    rule = rule or make_rule()
    W = np.asarray(W, dtype=float)
    centroids = np.asarray(centroids, dtype=float)
    key = _key("vec", W, centroids, spec.variances, spec.weights, clock.t, act.name, rule.order)
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
    if hit is not None:
        return hit
    N = W.shape[1]
    sigma2 = spec.sigma2
    mu = centroids @ W.T / math.sqrt(N)  # (C, P)
    Gam = np.sqrt(clock.gamma2(sigma2))
    C, P = mu.shape
    arrs = [np.empty((C, P)) for _ in range(4)]
    for c in range(C):
        corr = sigma2[c] * clock.decay ** 2 / Gam[c] ** 2
        res = _vector_moments(act.fn, clock.decay * mu[c], Gam[c], corr, rule)
        for a, r in zip(arrs, res):
            a[c] = r
    alpha, bt, gt, beta = arrs
    if act.odd:
        alpha[np.abs(mu) == 0.0] = 0.0
    gamma, vs, h2, nclamp = _derived(alpha, beta, bt, gt, sigma2, clock)
    out = GepCoefficients(alpha=alpha, beta=beta, beta_tilde=bt, gamma=gamma,
                          gamma_tilde=gt, varsigma=vs, h2=h2, mu=mu, t=clock.t,
                          clamp_count=nclamp)
    with _CACHE_LOCK:
        _CACHE[key] = out
    return out


def _quad(f) -> float:
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def _gauss(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def coeffs_scalar(spec: MixtureSpec, clock: DiffusionClock,
                  activation: Activation | str = TANH) -> GepCoefficients:
    """Centered-class scalars by adaptive integration (independent of the rule)."""
    act = get_activation(activation)
    phi = lambda y: float(act.fn(np.asarray(y)))
    sigma2 = spec.sigma2
    C = len(sigma2)
    bt = np.empty(C)
    gt = np.empty(C)
    beta = np.empty(C)
    for c in range(C):
        G = math.sqrt(float(clock.gamma2(sigma2[c])))
        corr = sigma2[c] * clock.decay ** 2 / G ** 2
        bt[c] = _quad(lambda z: _gauss(z) * phi(G * z) ** 2)
        gt[c] = _quad(lambda z: _gauss(z) * z * phi(G * z))
        if corr >= 1.0:
            beta[c] = bt[c]
        else:
            s = math.sqrt(1.0 - corr * corr)
            # E[phi(G v) | u] integrated out first
            inner = lambda u: _quad(lambda y: _gauss(y) * phi(G * (corr * u + s * y)))
            beta[c] = _quad(lambda u: _gauss(u) * phi(G * u) * inner(u))
    alpha = np.zeros(C)
    gamma, vs, h2, nclamp = _derived(alpha, beta, bt, gt, sigma2, clock)
    return GepCoefficients(alpha=alpha, beta=beta, beta_tilde=bt, gamma=gamma,
                           gamma_tilde=gt, varsigma=vs, h2=h2, mu=None, t=clock.t,
                           clamp_count=nclamp)


def largetime_scalars(activation: Activation | str = TANH,
                      rule: QuadratureRule | None = None) -> tuple[float, float]:
    """(gamma, beta_tilde) = (E[z phi(z)], E[phi(z)^2]) for z ~ N(0, 1)."""
    act = get_activation(activation)
    rule = rule or make_rule()
    f = act.fn(rule.nodes)
    return float(f @ (rule.weights * rule.nodes)), float((f * f) @ rule.weights)
