"""Pure-numpy saddle-point kernel, batched over the lambda grid.

Unknowns are the complex pair (gP, gO). With D_c = 1 + r (g2_c gO + h2_c gP),
r = chi_p/chi_m, the scaled residuals are

  F1 = (1 - 1/chi_p) + gO/(chi_p gP) - gP (S - z) - gP sum_c b_c h2_c / D_c
  F2 = 1 - chi_p K gO - gO/gP - chi_p gO sum_c b_c g2_c / D_c

Both are holomorphic, so Levenberg-Marquardt on the four real components
reduces to damped complex Gauss-Newton with J^H J + mu I.
"""
from __future__ import annotations

import numpy as np


def residual_jacobian(gP, gO, z, b, h2, g2, chi_p, chi_m, S, K):
    r = chi_p / chi_m
    D = 1.0 + r * (np.multiply.outer(gO, g2) + np.multiply.outer(gP, h2))
    iD = 1.0 / D
    iD2 = iD * iD
    sh = (iD * (b * h2)).sum(-1)
    sg = (iD * (b * g2)).sum(-1)
    shh = (iD2 * (b * h2 * h2)).sum(-1)
    shg = (iD2 * (b * h2 * g2)).sum(-1)
    sgg = (iD2 * (b * g2 * g2)).sum(-1)
    F1 = (1.0 - 1.0 / chi_p) + gO / (chi_p * gP) - gP * (S - z) - gP * sh
    F2 = 1.0 - chi_p * K * gO - gO / gP - chi_p * gO * sg
    J11 = -gO / (chi_p * gP * gP) - (S - z) - sh + gP * r * shh
    J12 = 1.0 / (chi_p * gP) + gP * r * shg
    J21 = gO / (gP * gP) + chi_p * gO * r * shg
    J22 = -chi_p * K - 1.0 / gP - chi_p * sg + chi_p * gO * r * sgg
    return F1, F2, J11, J12, J21, J22


def _norm(F1, F2):
    return np.sqrt(np.abs(F1) ** 2 + np.abs(F2) ** 2)


def solve_points(lams, eps_schedule, b, h2, g2, chi_p, chi_m, S, K,
                 tol=1e-12, maxit=200):
    """Continuation in eps for every lambda at once.

    Returns (gP, gO, resid, iters) where resid is the final residual norm and
    iters the iteration count summed over the schedule.
    """
    lams = np.asarray(lams, dtype=float)
    b = np.asarray(b, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    n = lams.size
    z0 = lams + 1j * eps_schedule[0]
    gP = -1.0 / z0
    gO = -1.0 / z0
    iters = np.zeros(n, dtype=np.int64)
    resid = np.full(n, np.inf)
    for eps in eps_schedule:
        z = lams + 1j * eps
        mu = np.full(n, -1.0)
        active = np.ones(n, dtype=bool)
        F1, F2, J11, J12, J21, J22 = residual_jacobian(gP, gO, z, b, h2, g2, chi_p, chi_m, S, K)
        fn = _norm(F1, F2)
        for _ in range(maxit):
            active &= fn > tol
            if not active.any():
                break
            a = np.flatnonzero(active)
            f1, f2 = F1[a], F2[a]
            j11, j12, j21, j22 = J11[a], J12[a], J21[a], J22[a]
            # normal equations (J^H J + mu I) d = -J^H F
            h11 = np.abs(j11) ** 2 + np.abs(j21) ** 2
            h22 = np.abs(j12) ** 2 + np.abs(j22) ** 2
            h12 = np.conj(j11) * j12 + np.conj(j21) * j22
            m = mu[a]
            m = np.where(m < 0, 1e-3 * np.maximum(h11, h22), m)
            r1 = -(np.conj(j11) * f1 + np.conj(j21) * f2)
            r2 = -(np.conj(j12) * f1 + np.conj(j22) * f2)
            a11 = h11 + m
            a22 = h22 + m
            det = a11 * a22 - np.abs(h12) ** 2
            d1 = (a22 * r1 - h12 * r2) / det
            d2 = (a11 * r2 - np.conj(h12) * r1) / det
            tP = gP[a] + d1
            tO = gO[a] + d2
            T = residual_jacobian(tP, tO, z[a], b, h2, g2, chi_p, chi_m, S, K)
            tn = _norm(T[0], T[1])
            ok = np.isfinite(tn) & (tn < fn[a])
            acc = a[ok]
            gP[acc] = tP[ok]
            gO[acc] = tO[ok]
            fn[acc] = tn[ok]
            F1[acc], F2[acc] = T[0][ok], T[1][ok]
            J11[acc], J12[acc], J21[acc], J22[acc] = T[2][ok], T[3][ok], T[4][ok], T[5][ok]
            m = np.where(ok, np.maximum(m / 3.0, 1e-15), m * 4.0)
            mu[a] = m
            iters[a] += 1
            step = np.sqrt(np.abs(d1) ** 2 + np.abs(d2) ** 2)
            scale = np.sqrt(np.abs(gP[a]) ** 2 + np.abs(gO[a]) ** 2)
            stalled = (~ok & (m > 1e30)) | (ok & (step <= 1e-16 * scale))
            active[a[stalled]] = False
        resid = fn
    return gP, gO, resid, iters
