"""Gaussian expectations by Gauss-Hermite quadrature.

Everything here integrates against the standard normal density
(probabilist convention), so a rule's weights sum to one and

    E[f(m + s z)] ~= sum_i w_i f(m + s x_i),   z ~ N(0, 1).

The 2D routine handles a pair (u, v) of unit-variance normals with
correlation c through the factorisation u = z1, v = c z1 + sqrt(1-c^2) z2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

DEFAULT_ORDER = 160

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for E_{z~N(0,1)}[f(z)]."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self) -> None:
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)


_RULE_CACHE: dict[int, QuadratureRule] = {}


def make_rule(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Probabilist Gauss-Hermite rule, exact up to degree ``2*order - 1``."""
    order = int(order)
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    rule = _RULE_CACHE.get(order)
    if rule is None:
        x, w = hermegauss(order)
        w = w / _SQRT_2PI
        # enforce exact mirror symmetry, hermegauss is symmetric only to roundoff
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
        w = w / w.sum()
        rule = QuadratureRule(nodes=x, weights=w, order=order)
        _RULE_CACHE[order] = rule
    return rule


def expect_1d(
    f: Callable[[np.ndarray], np.ndarray],
    mean=0.0,
    std=1.0,
    rule: QuadratureRule | None = None,
):
    """E[f(mean + std*z)]. ``mean`` may be an array; the result broadcasts."""
    rule = rule or make_rule()
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    pts = mean[..., None] + std[..., None] * rule.nodes
    out = f(pts) @ rule.weights
    return float(out) if out.ndim == 0 else out


def _correlation(cov) -> float:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        return float(cov)
    if cov.shape != (2, 2):
        raise ValueError("cov must be a 2x2 matrix or a scalar correlation")
    if abs(cov[0, 0] - 1.0) > 1e-12 or abs(cov[1, 1] - 1.0) > 1e-12:
        raise ValueError("cov must have unit diagonal")
    if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
        raise ValueError("cov must be symmetric")
    return float(cov[0, 1])


def correlated_nodes(c: float, rule: QuadratureRule | None = None):
    """Flattened tensor-product nodes (u, v, w) for a pair with correlation c."""
    rule = rule or make_rule()
    if abs(c) > 1.0 + 1e-12:
        raise ValueError(f"|correlation| must be <= 1, got {c}")
    c = min(1.0, max(-1.0, c))
    z1, z2 = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
    w = np.outer(rule.weights, rule.weights)
    u = z1
    v = c * z1 + math.sqrt(max(0.0, 1.0 - c * c)) * z2
    return u.ravel(), v.ravel(), w.ravel()


def expect_2d_correlated(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    cov,
    rule: QuadratureRule | None = None,
) -> float:
    """E[f(u, v)] for unit-variance normals with the given correlation.

    ``cov`` is either the 2x2 covariance or the off-diagonal entry itself.
    At |c| = 1 the pair is degenerate and the 1D rule is used directly.
    """
    rule = rule or make_rule()
    c = _correlation(cov)
    if abs(c) > 1.0 + 1e-12:
        raise ValueError(f"|correlation| must be <= 1, got {c}")
    if abs(c) >= 1.0:
        sign = 1.0 if c > 0 else -1.0
        return float(f(rule.nodes, sign * rule.nodes) @ rule.weights)
    u, v, w = correlated_nodes(c, rule)
    return float(f(u, v) @ w)


def hermite_normalized(n_max: int, z: np.ndarray) -> np.ndarray:
    """He_k(z)/sqrt(k!) for k = 0..n_max, stacked along axis 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty((n_max + 1,) + z.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = z
    for k in range(1, n_max):
        out[k + 1] = (z * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_coefficients(
    f: Callable[[np.ndarray], np.ndarray],
    mean: float,
    std: float,
    n_max: int,
    rule: QuadratureRule | None = None,
) -> np.ndarray:
    """Normalised Hermite coefficients E[He_k(z) f(std z + mean)]/sqrt(k!)."""
    rule = rule or make_rule()
    he = hermite_normalized(n_max, rule.nodes)
    return he @ (rule.weights * f(mean + std * rule.nodes))


def mehler_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    c: float,
    mean: float = 0.0,
    std: float = 1.0,
    n_terms: int = 30,
    rule: QuadratureRule | None = None,
) -> float:
    """E[f(std u + mean) f(std v + mean)] via the Mehler series in c."""
    h = hermite_coefficients(f, mean, std, n_terms, rule)
    powers = c ** np.arange(n_terms + 1)
    return float(np.sum(powers * h * h))
