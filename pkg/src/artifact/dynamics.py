"""Readout training: closed-form gradient flow, gradient descent, loss curves.

Training time tau is measured in the gauge where the flow reads
dA/dtau = -2 (A U + V^T / sqrt(Delta)), so a GD step of size eta advances
tau by eta * Delta / N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .covariance import empirical_UV, features, symmetrize
from .gep import TANH, Activation, GepCoefficients, get_activation
from .gmm import Dataset, DiffusionClock, MixtureSpec, true_score

RANK_EPS = 1e-12
SEMI_EPS = 1e-14


@dataclass
class RFModel:
    W: np.ndarray
    A: np.ndarray
    activation: Activation = TANH

    @classmethod
    def init(cls, N: int, P: int, seed=None, activation: Activation | str = TANH) -> "RFModel":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((P, N)), np.zeros((N, P)), get_activation(activation))

    def score(self, x: np.ndarray) -> np.ndarray:
        return features(np.atleast_2d(x), self.W, self.activation) @ self.A.T


def flow_factor(lam: np.ndarray, tau: float) -> np.ndarray:
    """(1 - e^{-2 lam tau}) / lam, equal to 2 tau at lam = 0."""
    lam = np.asarray(lam, dtype=float)
    x = 2.0 * lam * tau
    out = np.empty_like(lam)
    small = np.abs(x) < 1e-8
    out[small] = 2.0 * tau * (1.0 - 0.5 * x[small])
    out[~small] = -np.expm1(-x[~small]) / lam[~small]
    return out


def closed_form_readout(evals: np.ndarray, evecs: np.ndarray, V: np.ndarray,
                        clock: DiffusionClock, tau: float) -> np.ndarray:
    """A(tau) = -(1/sqrt(Delta)) V^T U^{-1} (1 - e^{-2 U tau}) in U's eigenbasis.

    Modes with lam below RANK_EPS * lam_max are treated as exact zeros and
    use the continuity value 2 tau. ``tau = inf`` gives the pseudo-inverse limit.
    """
    lam = np.where(evals < RANK_EPS * evals.max(), 0.0, evals)
    if np.isinf(tau):
        f = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
    else:
        f = flow_factor(lam, tau)
    R = V.T @ evecs  # N x P
    return -(R * f) @ evecs.T / math.sqrt(clock.delta)


def train_loss_quadratic(A: np.ndarray, U: np.ndarray, V: np.ndarray, clock: DiffusionClock) -> float:
    """1 + (Delta/N) Tr(A U A^T) + (2 sqrt(Delta)/N) Tr(V A)."""
    N = A.shape[0]
    d = clock.delta
    return float(1.0 + d / N * np.sum((A @ U) * A) + 2.0 * math.sqrt(d) / N * np.sum(V.T * A))


def train_loss_grad(A: np.ndarray, U: np.ndarray, V: np.ndarray, clock: DiffusionClock) -> np.ndarray:
    """Gradient of ``train_loss_quadratic``: 2 (Delta/N) (A U + V^T / sqrt(Delta))."""
    N = A.shape[0]
    d = clock.delta
    return 2.0 * d / N * (A @ U + V.T / math.sqrt(d))


class DivergenceError(RuntimeError):
    pass


@dataclass
class GDResult:
    taus: np.ndarray
    steps: np.ndarray
    snapshots: list[np.ndarray]
    U: np.ndarray
    V: np.ndarray


def train_gd(W: np.ndarray, dataset: Dataset, clock: DiffusionClock, eta: float,
             n_steps: int, snapshot_steps=None, n_noise_draws: int = 100, seed=None,
             method: str = "iterate", U: np.ndarray | None = None, V: np.ndarray | None = None,
             activation: Activation | str = TANH, A0: np.ndarray | None = None) -> GDResult:
    """Full-batch GD on the Monte Carlo training loss.

    ``method="iterate"`` runs the update step by step. ``method="spectral"``
    produces the same iterates, A_k = A_inf + (A_0 - A_inf)(1 - 2 eta~ U)^k, by
    raising the update map to the k-th power in U's eigenbasis; this is what
    makes millions of steps affordable.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    P, N = W.shape
    if U is None or V is None:
        Uc, Vc = empirical_UV(dataset, W, clock, n_noise_draws, seed, activation)
        U, V = Uc.U, Vc.V
    if snapshot_steps is None:
        snapshot_steps = np.unique(np.geomspace(1, n_steps, 600).astype(np.int64))
    steps = np.asarray(sorted(set(int(s) for s in snapshot_steps)), dtype=np.int64)
    if steps.size and (steps[0] < 0 or steps[-1] > n_steps):
        raise ValueError("snapshot steps must lie in [0, n_steps]")
    etil = eta * clock.delta / N
    sq = math.sqrt(clock.delta)
    A = np.zeros((N, P)) if A0 is None else np.array(A0, dtype=float)
    evals, evecs = np.linalg.eigh(symmetrize(U))
    lam_max = evals.max()
    if 2.0 * etil * lam_max >= 2.0:
        raise DivergenceError(
            f"step size unstable: 2*eta~*lam_max = {2 * etil * lam_max:.3g} >= 2; reduce eta")
    a_inf_norm = np.linalg.norm(closed_form_readout(evals, evecs, V, clock, np.inf))
    bound = 1e6 * max(a_inf_norm, 1.0)
    snaps = []
    if method == "iterate":
        k = 0
        b = 2.0 * etil * V.T / sq
        M = np.eye(P) - 2.0 * etil * U
        for s in steps:
            while k < s:
                A = A @ M - b
                k += 1
            nrm = np.linalg.norm(A)
            if not np.isfinite(nrm) or nrm > bound:
                raise DivergenceError(f"|A| = {nrm:.3e} at step {k}; eta = {eta:g} too large")
            snaps.append(A.copy())
    elif method == "spectral":
        lam = np.where(evals < RANK_EPS * lam_max, 0.0, evals)
        R = V.T @ evecs  # N x P
        A0e = A @ evecs
        for s in steps:
            g = (1.0 - 2.0 * etil * lam) ** int(s)
            # discrete sum  sum_{j<k} g^j * 2 eta~ = (1 - g^k)/lam, k*2eta~ at lam=0
            with np.errstate(divide="ignore", invalid="ignore"):
                f = np.where(lam > 0, (1.0 - g) / np.where(lam > 0, lam, 1.0), 2.0 * etil * s)
            Ae = A0e * g - (R * f) / sq
            snaps.append(Ae @ evecs.T)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GDResult(taus=steps * etil, steps=steps, snapshots=snaps, U=U, V=V)


def loss_mc(A: np.ndarray, W: np.ndarray, clock: DiffusionClock, X: np.ndarray,
            n_noise: int = 1, seed=None, activation: Activation | str = TANH,
            batch: int = 4096) -> float:
    """(1/(N n)) sum ||sqrt(Delta) A phi(W x_t / sqrt N) + xi||^2 over rows of X and noise."""
    act = get_activation(activation)
    rng = np.random.default_rng(seed)
    N = W.shape[1]
    sq = math.sqrt(clock.delta)
    total = 0.0
    count = 0
    AT = A.T * sq
    for _ in range(n_noise):
        for s in range(0, X.shape[0], batch):
            xb = X[s:s + batch]
            xi = rng.standard_normal(xb.shape)
            F = act.fn((xb * clock.decay + sq * xi) @ W.T / math.sqrt(N))
            r = F @ AT + xi
            total += float(np.sum(r * r))
            count += xb.shape[0]
    return total / (N * count)


def sample_class(spec: MixtureSpec, centroids: np.ndarray, c: int, n: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return centroids[c] + math.sqrt(spec.sigma2[c]) * rng.standard_normal((n, spec.dim))


def score_mse_mc(A: np.ndarray, W: np.ndarray, clock: DiffusionClock, spec: MixtureSpec,
                 centroids: np.ndarray, c: int, n_eval: int = 4096, seed=None,
                 activation: Activation | str = TANH) -> float:
    """(1/N) E||A phi(W x / sqrt N) - s_true(x, t)||^2 with x from class c at time t."""
    rng = np.random.default_rng(seed)
    x0 = sample_class(spec, centroids, c, n_eval, rng)
    xt = x0 * clock.decay + math.sqrt(clock.delta) * rng.standard_normal(x0.shape)
    pred = features(xt, W, activation) @ A.T
    diff = pred - true_score(xt, clock, spec, centroids)
    return float(np.sum(diff * diff) / (spec.dim * n_eval))


@dataclass
class ErrorCurves:
    taus: np.ndarray
    e_train: np.ndarray
    e_test: np.ndarray
    e_test_c: np.ndarray  # (C, T)
    e_score_c: np.ndarray  # (C, T)
    weights: tuple[float, ...] = ()
    times: list[dict] = field(default_factory=list)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"tau": self.taus, "e_train": self.e_train, "e_test": self.e_test}
        for i, row in enumerate(self.e_test_c):
            cols[f"e_test_c{i + 1}"] = row
        for i, row in enumerate(self.e_score_c):
            cols[f"e_score_c{i + 1}"] = row
        return cols


def average_curves(curves: list[ErrorCurves]) -> ErrorCurves:
    c0 = curves[0]
    return ErrorCurves(
        taus=c0.taus,
        e_train=np.mean([c.e_train for c in curves], axis=0),
        e_test=np.mean([c.e_test for c in curves], axis=0),
        e_test_c=np.mean([c.e_test_c for c in curves], axis=0),
        e_score_c=np.mean([c.e_score_c for c in curves], axis=0),
        weights=c0.weights,
    )


def semi_analytic_curves(evals: np.ndarray, evecs: np.ndarray, W: np.ndarray,
                         coeffs: GepCoefficients, pop_blocks: list[np.ndarray],
                         spec: MixtureSpec, clock: DiffusionClock, taus: np.ndarray) -> ErrorCurves:
    """Train, per-class test and score-MSE curves from eigenpairs of U_gep.

    With omega_c^q = W^T (psi_q * gamma_tilde_c)/sqrt(N), v_q = sum_c b_c omega_c^q / Gamma_c
    and f_q = (1 - e^{-2 lam_q tau})/lam_q:

      E_train   = 1 - (Delta/N) sum_q (1 - e^{-4 lam_q tau})/lam_q |v_q|^2
      E_test^c  = E_train + (Delta/N) sum_qp f_q f_p (v_q.v_p)(psi_q^T U~_c psi_p - lam_p d_qp)
                  - (2 Delta/N) sum_q f_q v_q.(omega_c^q/Gamma_c - v_q)
      E_score^c = 1/Gamma_c^2 + (E_test^c - 1)/Delta
    """
    taus = np.asarray(taus, dtype=float)
    P, N = W.shape
    C = spec.n_classes
    d = clock.delta
    Gam = clock.gamma(spec.variances)
    keep = evals > SEMI_EPS * evals.max()
    lam = evals[keep]
    psi = evecs[:, keep]
    # rows: omega_c^q for each kept q
    om = [((psi * coeffs.gamma_tilde[c][:, None]).T @ W) / math.sqrt(N) for c in range(C)]
    v = sum(spec.weights[c] / Gam[c] * om[c] for c in range(C))  # (Q, N)
    vv = v @ v.T  # (Q, Q)
    vnorm2 = np.diag(vv).copy()
    cross = [np.sum(v * (om[c] / Gam[c] - v), axis=1) for c in range(C)]
    K = [vv * (psi.T @ B @ psi) for B in pop_blocks]  # (Q, Q) each
    T = taus.size
    e_train = np.empty(T)
    e_test_c = np.empty((C, T))
    for i, tau in enumerate(taus):
        f = flow_factor(lam, tau)
        f4 = -np.expm1(-4.0 * lam * tau) / lam
        e_train[i] = 1.0 - d / N * np.sum(f4 * vnorm2)
        for c in range(C):
            quad = f @ K[c] @ f - np.sum(f * f * lam * vnorm2)
            e_test_c[c, i] = e_train[i] + d / N * quad - 2.0 * d / N * np.sum(f * cross[c])
    e_test = spec.b @ e_test_c
    e_score_c = 1.0 / Gam[:, None] ** 2 + (e_test_c - 1.0) / d
    return ErrorCurves(taus, e_train, e_test, e_test_c, e_score_c, spec.weights)


def analytic_train_error(lam: np.ndarray, rho_omega: np.ndarray, coeffs: GepCoefficients,
                         spec: MixtureSpec, clock: DiffusionClock, chi_p: float,
                         taus: np.ndarray) -> np.ndarray:
    """Large-size train error from the spectral density rho_Omega (centered classes).

    1 - (Delta chi_p / e^{-2t}) (sum_c b_c gamma_c / sigma_c)^2
        * int dlam/lam (1 - e^{-4 lam tau}) rho_Omega(lam)
    with gamma_c the same coefficient that enters the resolvent equations.
    """
    lam = np.asarray(lam, dtype=float)
    pref = clock.delta * chi_p / clock.decay ** 2 * (spec.b @ (coeffs.gamma / np.sqrt(spec.sigma2))) ** 2
    out = np.empty(len(taus))
    for i, tau in enumerate(np.asarray(taus, dtype=float)):
        integrand = -np.expm1(-4.0 * lam * tau) / lam * rho_omega
        out[i] = 1.0 - pref * np.trapezoid(integrand, lam)
    return out


@dataclass
class Times:
    tau_g: float
    tau_m: float | None
    crossed: bool
    idx_min: int


def extract_times(taus: np.ndarray, curve: np.ndarray, threshold: float = 1.0,
                  smooth: float | None = None) -> Times:
    """tau_g: argmin refined by a parabola in log tau; tau_m: first crossing of
    ``threshold`` after tau_g, linearly interpolated in log tau.

    ``smooth`` is a Gaussian kernel width in grid points (the curve is assumed
    log-spaced). When the curve never returns to the threshold, tau_m is None.
    """
    taus = np.asarray(taus, dtype=float)
    y = np.asarray(curve, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("curve contains non-finite values")
    if smooth:
        y = gaussian_filter1d(y, smooth, mode="nearest")
    lt = np.log(taus)
    i = int(np.argmin(y))
    tau_g = taus[i]
    if 0 < i < len(y) - 1:
        x0, x1, x2 = lt[i - 1:i + 2]
        y0, y1, y2 = y[i - 1:i + 2]
        den = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
        b = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / den
        if a > 0:
            xv = -b / (2 * a)
            if x0 <= xv <= x2:
                tau_g = float(np.exp(xv))
    after = np.flatnonzero(y[i:] >= threshold)
    if after.size == 0:
        return Times(float(tau_g), None, False, i)
    j = i + int(after[0])
    if j == i:
        return Times(float(tau_g), float(taus[j]), True, i)
    x0, x1 = lt[j - 1], lt[j]
    y0, y1 = y[j - 1], y[j]
    xm = x0 + (threshold - y0) * (x1 - x0) / (y1 - y0)
    return Times(float(tau_g), float(np.exp(xm)), True, i)


def gd_learning_rate(N: int, clock: DiffusionClock, factor: float = 5e-5) -> float:
    """eta = factor * N / Delta_t."""
    return factor * N / clock.delta


def theory_curves(spec: MixtureSpec, P: int, M: int, clock: DiffusionClock, taus: np.ndarray,
                  seed=None, activation: Activation | str = TANH) -> ErrorCurves:
    """One instance of the semi-analytic pipeline: draw W, centroids and data,
    build U_gep and the population blocks, then evaluate the curves."""
    from .covariance import gep_U, population_blocks
    from .gep import coeffs_vector
    from .gmm import realize_centroids, sample_dataset

    rng = np.random.default_rng(seed)
    N = spec.dim
    W = rng.standard_normal((P, N))
    cents = realize_centroids(spec, rng)
    data = sample_dataset(spec, cents, M, rng)
    co = coeffs_vector(W, spec, cents, clock, activation)
    WWt = W @ W.T
    U = gep_U(data, W, spec, cents, clock, rng, activation, coeffs=co, WWt=WWt)
    evals, evecs = np.linalg.eigh(U.U)
    blocks = population_blocks(W, spec, cents, clock, activation, coeffs=co, WWt=WWt)
    return semi_analytic_curves(evals, evecs, W, co, blocks, spec, clock, taus)


def simulate_curves(spec: MixtureSpec, P: int, M: int, clock: DiffusionClock, taus: np.ndarray,
                    seed=None, n_noise_draws: int = 100, n_test: int = 2000,
                    eta_factor: float = 5e-5, activation: Activation | str = TANH,
                    method: str = "spectral") -> ErrorCurves:
    """One GD run: Monte Carlo U and V, iterates at the steps nearest ``taus``,
    class test losses and score errors on fresh samples."""
    from .gmm import realize_centroids, sample_dataset

    act = get_activation(activation)
    rng = np.random.default_rng(seed)
    N = spec.dim
    W = rng.standard_normal((P, N))
    cents = realize_centroids(spec, rng)
    data = sample_dataset(spec, cents, M, rng)
    eta = gd_learning_rate(N, clock, eta_factor)
    etil = eta * clock.delta / N
    steps = np.maximum(np.rint(np.asarray(taus, dtype=float) / etil).astype(np.int64), 0)
    Uc, Vc = empirical_UV(data, W, clock, n_noise_draws, rng, act)
    res = train_gd(W, data, clock, eta, int(steps.max()), steps, method=method,
                   U=Uc.U, V=Vc.V, activation=act)
    by_step = dict(zip(res.steps.tolist(), res.snapshots))
    C = spec.n_classes
    sq = math.sqrt(clock.delta)
    feats, noise, targets = [], [], []
    for c in range(C):
        x0 = sample_class(spec, cents, c, n_test, rng)
        xi = rng.standard_normal(x0.shape)
        xt = x0 * clock.decay + sq * xi
        feats.append(features(xt, W, act))
        noise.append(xi)
        targets.append(true_score(xt, clock, spec, cents))
    T = len(steps)
    e_train = np.empty(T)
    e_test_c = np.empty((C, T))
    e_score_c = np.empty((C, T))
    for i, s in enumerate(steps.tolist()):
        A = by_step[s]
        e_train[i] = train_loss_quadratic(A, Uc.U, Vc.V, clock)
        for c in range(C):
            out = feats[c] @ A.T
            r = sq * out + noise[c]
            e_test_c[c, i] = float(np.sum(r * r)) / (N * n_test)
            d = out - targets[c]
            e_score_c[c, i] = float(np.sum(d * d)) / (N * n_test)
    return ErrorCurves(steps * etil, e_train, spec.b @ e_test_c, e_test_c, e_score_c, spec.weights)
