"""Resolvent pair (g_Psi, g_Omega) for centered mixtures, densities, bulks, edges."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _saddle_py
from .gep import TANH, Activation, GepCoefficients, coeffs_scalar
from .gmm import DiffusionClock, MixtureSpec

try:  # compiled kernel; the numpy version is a drop-in fallback
    from . import _saddle as _kernel
    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on the build
    _kernel = _saddle_py
    BACKEND = "numpy"

RHO_FLOOR = 1e-6
MIN_BULK_POINTS = 3
DELTA_GUARD = 10  # grid points either side of varsigma kept out of bulk logic


def default_grid(n: int = 10_000, lo: float = 1e-8, hi: float = 1e2) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def auto_grid(params: "SpectralParams", points_per_decade: int = 1000, lo: float = 1e-8,
              hi: float = 1e2) -> np.ndarray:
    """Default grid density, upper end raised to twice the asymptotic right edge if needed."""
    top = max(hi, 2.0 * mp_edges_asymptotic(params)[1])
    n = int(round(points_per_decade * math.log10(top / lo))) + 1
    return np.geomspace(lo, top, n)


def default_eps_schedule(n_eps: int = 60, start: float = 100.0, stop: float = 1e-9) -> np.ndarray:
    return np.concatenate([np.geomspace(start, stop, n_eps), [0.0]])


@dataclass(frozen=True)
class SpectralParams:
    chi_p: float
    chi_m: float
    t: float
    b: np.ndarray
    sigma2: np.ndarray
    beta_tilde: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    varsigma: np.ndarray
    h2: np.ndarray

    def __post_init__(self) -> None:
        if not (self.chi_p > 0 and self.chi_m > 0):
            raise ValueError("chi_p and chi_m must be positive")

    @classmethod
    def from_spec(cls, spec: MixtureSpec, clock: DiffusionClock, chi_p: float, chi_m: float,
                  activation: Activation | str = TANH,
                  coeffs: GepCoefficients | None = None) -> "SpectralParams":
        co = coeffs if coeffs is not None else coeffs_scalar(spec, clock, activation)
        return cls(float(chi_p), float(chi_m), clock.t, spec.b.copy(), spec.sigma2.copy(),
                   co.beta_tilde, co.beta, co.gamma, co.gamma_tilde, co.varsigma, co.h2)

    @property
    def clock(self) -> DiffusionClock:
        return DiffusionClock(self.t)

    @property
    def K(self) -> float:
        """(Delta/e^{-2t}) sum_c b_c gamma_c^2 / sigma_c^2."""
        c = self.clock
        return c.delta / c.decay ** 2 * float(np.sum(self.b * self.gamma ** 2 / self.sigma2))

    @property
    def S(self) -> float:
        """Location of the point mass: sum_c b_c varsigma_c."""
        return float(np.sum(self.b * self.varsigma))

    @property
    def g2(self) -> np.ndarray:
        return self.gamma ** 2

    def kernel_args(self):
        return (self.b, self.h2, self.g2, self.chi_p, self.chi_m, self.S, self.K)


def saddle_residuals(gP: complex, gO: complex, z: complex, params: SpectralParams):
    """Scaled residuals (F_Psi, F_Omega) of the resolvent equations.

    F_Psi is the first equation multiplied by g_Psi and F_Omega the second
    multiplied by chi_p g_Omega, so both vanish like 1/|z| on the free guess.
    """
    if gP == 0 or gO == 0:
        raise ZeroDivisionError("g_Psi and g_Omega must be non-zero")
    with np.errstate(all="raise"):
        try:
            F1, F2, *_ = _saddle_py.residual_jacobian(
                np.asarray(gP, dtype=complex), np.asarray(gO, dtype=complex),
                np.asarray(z, dtype=complex), *params.kernel_args())
        except FloatingPointError as exc:
            r = params.chi_p / params.chi_m
            D = 1.0 + r * (params.g2 * gO + params.h2 * gP)
            which = "class denominator 1 + r(gamma^2 gO + h2 gP)" if np.any(D == 0) else "1/g term"
            raise FloatingPointError(f"non-finite residual from the {which}") from exc
    if not (np.isfinite(F1) and np.isfinite(F2)):
        raise FloatingPointError("non-finite residual")
    return complex(F1), complex(F2)


@dataclass
class SpectralSolution:
    lam: np.ndarray
    g_psi: np.ndarray
    g_omega: np.ndarray
    rho: np.ndarray
    rho_omega: np.ndarray
    converged: np.ndarray
    residual: np.ndarray
    bulks: list[tuple[int, int]]  # inclusive index ranges into lam
    params: SpectralParams
    diagnostics: list[str] = field(default_factory=list)

    @property
    def point_mass(self) -> tuple[float, float]:
        """(location, weight) of the delta peak.

        U has rank at most M + N away from varsigma, so the peak carries
        1 - (chi_m + 1)/chi_p; bulks hold 1/chi_p, (chi_m - 1)/chi_p, 1/chi_p.
        """
        p = self.params
        return p.S, max(0.0, 1.0 - (p.chi_m + 1.0) / p.chi_p)

    def continuous_mass(self) -> float:
        return float(np.trapezoid(self.rho, self.lam))

    def bulk_intervals(self) -> list[tuple[float, float]]:
        return [(float(self.lam[a]), float(self.lam[b])) for a, b in self.bulks]

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "lambda": self.lam, "re_g_psi": self.g_psi.real, "im_g_psi": self.g_psi.imag,
            "re_g_omega": self.g_omega.real, "im_g_omega": self.g_omega.imag,
            "rho": self.rho, "rho_omega": self.rho_omega,
            "converged": self.converged.astype(int),
        }


def find_bulks(rho: np.ndarray, min_points: int = MIN_BULK_POINTS):
    """Maximal runs of positive density; runs shorter than ``min_points`` are
    merged into a neighbour within ``min_points`` grid steps, otherwise dropped."""
    pos = rho > 0
    runs = []
    i, n = 0, len(rho)
    while i < n:
        if pos[i]:
            j = i
            while j + 1 < n and pos[j + 1]:
                j += 1
            runs.append([i, j])
            i = j + 1
        else:
            i += 1
    notes = []
    merged: list[list] = []
    for r in (run + [run[1] - run[0] + 1 >= min_points] for run in runs):
        if merged and r[0] - merged[-1][1] <= min_points and (not r[2] or not merged[-1][2]):
            notes.append(f"merged narrow run [{r[0]}, {r[1]}] into neighbour")
            merged[-1][1] = r[1]
            merged[-1][2] = merged[-1][2] or r[2]
        else:
            merged.append(list(r))
    final = []
    for r in merged:
        if r[2]:
            final.append((r[0], r[1]))
        else:
            notes.append(f"dropped isolated narrow run [{r[0]}, {r[1]}]")
    return final, notes


def solve_grid(params: SpectralParams, lam: np.ndarray | None = None,
               eps_schedule: np.ndarray | None = None, tol: float = 1e-12,
               maxit: int = 200, accept: float = 1e-9, backend: str | None = None) -> SpectralSolution:
    """Continuation from eps = 100 down to 0 at each grid point."""
    lam = default_grid() if lam is None else np.asarray(lam, dtype=float)
    eps = default_eps_schedule() if eps_schedule is None else np.asarray(eps_schedule, dtype=float)
    if np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be strictly increasing")
    if np.any(np.diff(eps) >= 0) or eps[-1] != 0.0:
        raise ValueError("eps schedule must be strictly decreasing and end at 0")
    mod = {"cython": _kernel, "numpy": _saddle_py, None: _kernel}[backend]
    gP, gO, res, _ = mod.solve_points(lam, eps, *params.kernel_args(), tol=tol, maxit=maxit)
    conv = np.isfinite(res) & (res <= accept)
    rho = np.where(conv, gP.imag / np.pi, np.nan)
    rho_o = np.where(conv, gO.imag / np.pi, np.nan)
    rho = np.where(np.abs(rho) < RHO_FLOOR, 0.0, rho)
    rho_o = np.where(np.abs(rho_o) < RHO_FLOOR, 0.0, rho_o)
    diags = []
    nbad = int((~conv).sum())
    if nbad:
        diags.append(f"{nbad} grid points did not converge (residual > {accept:g})")
    if np.any(rho < 0):
        diags.append(f"{int((rho < 0).sum())} points with negative density set to 0")
    rho = np.where(rho < 0, 0.0, rho)
    rho_o = np.where(rho_o < 0, 0.0, rho_o)
    filled = np.where(np.isnan(rho), 0.0, rho)
    # the point mass at varsigma is smeared over a few grid points numerically
    k = int(np.searchsorted(lam, params.S))
    lo, hi = max(0, k - DELTA_GUARD), min(len(lam), k + DELTA_GUARD)
    if np.any(filled[lo:hi] > 0) or np.any(~conv[lo:hi]):
        diags.append(f"grid points [{lo}, {hi}) around the point mass excluded from bulks")
    filled[lo:hi] = 0.0
    bulks, notes = find_bulks(filled)
    return SpectralSolution(lam, gP, gO, rho, rho_o, conv, res, bulks, params, diags + notes)


# ---------------------------------------------------------------- edges

def _edge_system(x, p: SpectralParams):
    gP, gO, w = x
    cp, r = p.chi_p, p.chi_p / p.chi_m
    D = 1.0 + r * (p.g2 * gO + p.h2 * gP)
    e1 = ((1.0 - 1.0 / cp) / gP ** 2 - w / (cp * gP ** 2) + 2.0 * gO / (cp * gP ** 3)
          - r * np.sum(p.b * p.h2 * (p.h2 + w * p.g2) / D ** 2))
    e2 = (w / (cp * gO ** 2) - 1.0 / (cp * gP ** 2)
          - r * np.sum(p.b * p.g2 * (p.h2 + w * p.g2) / D ** 2))
    e3 = 1.0 / (cp * gO) - p.K - 1.0 / (cp * gP) - np.sum(p.b * p.g2 / D)
    # scaled so that each equation is O(1) near the root
    return np.array([e1 * gP ** 2, e2 * cp * gO ** 2, e3 * cp * gO])


def edge_location(gP: float, gO: float, p: SpectralParams) -> float:
    cp, r = p.chi_p, p.chi_p / p.chi_m
    D = 1.0 + r * (p.g2 * gO + p.h2 * gP)
    return float(p.S + np.sum(p.b * p.h2 / D) - (1.0 - 1.0 / cp) / gP - gO / (cp * gP ** 2))


@dataclass
class Edge:
    lam: float
    side: str  # lower | upper
    bulk: int
    g_psi: float
    g_omega: float
    omega: float
    converged: bool
    grid_lam: float


@dataclass
class EdgeSummary:
    lam_gen: float | None
    lam_mem1: float | None
    lam_mem2: float | None
    edges: list[Edge]
    merged: bool
    diagnostics: list[str] = field(default_factory=list)

    @staticmethod
    def _tau(lam):
        return None if lam is None else 1.0 / (2.0 * lam)

    @property
    def tau_gen(self):
        return self._tau(self.lam_gen)

    @property
    def tau_mem1(self):
        return self._tau(self.lam_mem1)

    @property
    def tau_mem2(self):
        return self._tau(self.lam_mem2)

    @property
    def w_g(self):
        if self.tau_gen is None or self.tau_mem1 is None:
            return None
        return self.tau_mem1 / self.tau_gen

    @property
    def w_m(self):
        if self.tau_mem1 is None or self.tau_mem2 is None:
            return None
        return self.tau_mem2 / self.tau_mem1

    def to_dict(self) -> dict:
        return {
            "lambda_gen": self.lam_gen, "lambda_mem1": self.lam_mem1, "lambda_mem2": self.lam_mem2,
            "tau_gen": self.tau_gen, "tau_mem1": self.tau_mem1, "tau_mem2": self.tau_mem2,
            "w_g": self.w_g, "w_m": self.w_m, "merged": self.merged,
            "edges": [e.__dict__ for e in self.edges], "diagnostics": self.diagnostics,
        }


def _solve_edge(sol: SpectralSolution, idx: int, side: str, bulk: int) -> Edge:
    p = sol.params
    gp, go = sol.g_psi[idx], sol.g_omega[idx]
    w0 = go.imag / gp.imag if gp.imag != 0 else 0.0
    x0 = np.array([gp.real, go.real, w0])
    res = optimize.root(_edge_system, x0, args=(p,), method="hybr", options={"xtol": 1e-13})
    x = res.x
    ok = bool(res.success) and np.all(np.isfinite(x)) and np.max(np.abs(_edge_system(x, p))) < 1e-8
    lam = edge_location(x[0], x[1], p) if ok else float("nan")
    return Edge(lam, side, bulk, float(x[0]), float(x[1]), float(x[2]), ok, float(sol.lam[idx]))


def solve_edges(params: SpectralParams, solution: SpectralSolution) -> EdgeSummary:
    """Solve the edge equations from each bulk boundary and classify the edges.

    lam_gen is the lower edge of the rightmost bulk, lam_mem1 the upper edge of
    the central bulk, lam_mem2 the lower edge of the leftmost bulk.
    """
    sol = solution
    if not sol.bulks:
        raise ValueError("solution has no resolved bulk")
    edges = []
    diags = []
    for k, (a, b) in enumerate(sol.bulks):
        for idx, side in ((a, "lower"), (b, "upper")):
            e = _solve_edge(sol, idx, side, k)
            if e.converged:
                # one grid step either way of the support boundary
                j = np.searchsorted(sol.lam, e.lam)
                if abs(j - idx) > 1:
                    diags.append(f"edge {side} of bulk {k} at {e.lam:.4g} is {abs(j - idx)} grid steps "
                                 f"from the support boundary {sol.lam[idx]:.4g}")
            else:
                diags.append(f"edge {side} of bulk {k} did not converge; using grid boundary")
                e.lam = float(sol.lam[idx])
            edges.append(e)
    nb = len(sol.bulks)
    by = {(e.bulk, e.side): e.lam for e in edges}
    merged = nb < 3
    lam_gen = by[(nb - 1, "lower")]
    lam_mem2 = by[(0, "lower")] if nb >= 2 else None
    lam_mem1 = by[(nb - 2, "upper")] if nb >= 3 else None
    if nb > 3:
        diags.append(f"{nb} bulks found; central bulk taken as the second from the right")
    if merged:
        diags.append(f"only {nb} bulk(s) resolved; timescales incomplete")
    return EdgeSummary(lam_gen, lam_mem1, lam_mem2, edges, merged, diags)


def mp_edges_asymptotic(params: SpectralParams) -> tuple[float, float]:
    """Marchenko-Pastur approximation to the rightmost bulk, large chi_p."""
    p = params
    base = p.S + float(np.sum(p.b * p.h2))
    scale = p.K + float(np.sum(p.b * p.g2))
    s = math.sqrt(p.chi_p)
    return base + scale * (1 - s) ** 2, base + scale * (1 + s) ** 2


def spectrum(spec: MixtureSpec, clock: DiffusionClock, chi_p: float, chi_m: float,
             lam=None, eps_schedule=None, activation=TANH, backend=None):
    """Convenience: params, grid solution and edges in one call."""
    params = SpectralParams.from_spec(spec, clock, chi_p, chi_m, activation)
    if lam is None:
        lam = auto_grid(params)
    sol = solve_grid(params, lam, eps_schedule, backend=backend)
    try:
        edges = solve_edges(params, sol)
    except ValueError:
        edges = None
    return params, sol, edges


@dataclass
class WindowRow:
    v: float
    b1: float
    w_g: float | None
    w_m: float | None
    merged: bool


def window_sweep(sigma1_sq: float, chi_p: float, chi_m: float, t: float,
                 v_grid, b1_grid, lam=None, eps_schedule=None,
                 activation=TANH, backend=None) -> list[WindowRow]:
    """w_g and w_m over variance ratio v = sigma_2^2/sigma_1^2 and weight b_1."""
    clock = DiffusionClock(t)
    rows = []
    for v in v_grid:
        for b1 in b1_grid:
            spec = MixtureSpec((b1, 1.0 - b1), (sigma1_sq, v * sigma1_sq), np.zeros((2, 2)), 1)
            _, _, ed = spectrum(spec, clock, chi_p, chi_m, lam, eps_schedule, activation, backend)
            if ed is None:
                rows.append(WindowRow(float(v), float(b1), None, None, True))
            else:
                rows.append(WindowRow(float(v), float(b1), ed.w_g, ed.w_m, ed.merged))
    return rows
