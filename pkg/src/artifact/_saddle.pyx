# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled saddle-point kernel; same algorithm as _saddle_py, one point at a time."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite, fmax

cnp.import_array()

cdef inline double complex conj(double complex x) noexcept nogil:
    return x.real - 1j * x.imag


cdef inline double sq(double complex x) noexcept nogil:
    return x.real * x.real + x.imag * x.imag


cdef inline void evaluate(double complex gP, double complex gO, double complex z,
                          const double[:] b, const double[:] h2, const double[:] g2,
                          double chi_p, double r, double S, double K,
                          double complex* out) noexcept nogil:
    cdef Py_ssize_t c
    cdef double complex D, iD, iD2
    cdef double complex sh = 0, sg = 0, shh = 0, shg = 0, sgg = 0
    for c in range(b.shape[0]):
        D = 1.0 + r * (g2[c] * gO + h2[c] * gP)
        iD = 1.0 / D
        iD2 = iD * iD
        sh += b[c] * h2[c] * iD
        sg += b[c] * g2[c] * iD
        shh += b[c] * h2[c] * h2[c] * iD2
        shg += b[c] * h2[c] * g2[c] * iD2
        sgg += b[c] * g2[c] * g2[c] * iD2
    out[0] = (1.0 - 1.0 / chi_p) + gO / (chi_p * gP) - gP * (S - z) - gP * sh
    out[1] = 1.0 - chi_p * K * gO - gO / gP - chi_p * gO * sg
    out[2] = -gO / (chi_p * gP * gP) - (S - z) - sh + gP * r * shh
    out[3] = 1.0 / (chi_p * gP) + gP * r * shg
    out[4] = gO / (gP * gP) + chi_p * gO * r * shg
    out[5] = -chi_p * K - 1.0 / gP - chi_p * sg + chi_p * gO * r * sgg


def solve_points(lams, eps_schedule, b, h2, g2, double chi_p, double chi_m,
                 double S, double K, double tol=1e-12, int maxit=200):
    cdef const double[:] L = np.ascontiguousarray(lams, dtype=np.float64)
    cdef const double[:] E = np.ascontiguousarray(eps_schedule, dtype=np.float64)
    cdef const double[:] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:] hh = np.ascontiguousarray(h2, dtype=np.float64)
    cdef const double[:] gg = np.ascontiguousarray(g2, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0], ne = E.shape[0], j, k
    outP = np.empty(n, dtype=np.complex128)
    outO = np.empty(n, dtype=np.complex128)
    outR = np.empty(n, dtype=np.float64)
    outI = np.zeros(n, dtype=np.int64)
    cdef double complex[:] oP = outP
    cdef double complex[:] oO = outO
    cdef double[:] oR = outR
    cdef long long[:] oI = outI
    cdef double r = chi_p / chi_m
    cdef double complex z, gP, gO, tP, tO, d1, d2, r1, r2, h12
    cdef double complex cur[6]
    cdef double complex trial[6]
    cdef double fn, tn, mu, h11, h22, a11, a22, det, step, scale
    cdef int it, it2
    with nogil:
        for j in range(n):
            z = L[j] + 1j * E[0]
            gP = -1.0 / z
            gO = -1.0 / z
            fn = 0.0
            for k in range(ne):
                z = L[j] + 1j * E[k]
                evaluate(gP, gO, z, bb, hh, gg, chi_p, r, S, K, cur)
                fn = sqrt(sq(cur[0]) + sq(cur[1]))
                mu = -1.0
                for it in range(maxit):
                    if fn <= tol:
                        break
                    h11 = sq(cur[2]) + sq(cur[4])
                    h22 = sq(cur[3]) + sq(cur[5])
                    h12 = conj(cur[2]) * cur[3] + conj(cur[4]) * cur[5]
                    if mu < 0:
                        mu = 1e-3 * fmax(h11, h22)
                    r1 = -(conj(cur[2]) * cur[0] + conj(cur[4]) * cur[1])
                    r2 = -(conj(cur[3]) * cur[0] + conj(cur[5]) * cur[1])
                    a11 = h11 + mu
                    a22 = h22 + mu
                    det = a11 * a22 - sq(h12)
                    d1 = (a22 * r1 - h12 * r2) / det
                    d2 = (a11 * r2 - conj(h12) * r1) / det
                    tP = gP + d1
                    tO = gO + d2
                    evaluate(tP, tO, z, bb, hh, gg, chi_p, r, S, K, trial)
                    tn = sqrt(sq(trial[0]) + sq(trial[1]))
                    oI[j] += 1
                    step = sqrt(sq(d1) + sq(d2))
                    if isfinite(tn) and tn < fn:
                        gP = tP
                        gO = tO
                        fn = tn
                        for it2 in range(6):
                            cur[it2] = trial[it2]
                        mu = fmax(mu / 3.0, 1e-15)
                        scale = sqrt(sq(gP) + sq(gO))
                        if step <= 1e-16 * scale:
                            break
                    else:
                        mu = mu * 4.0
                        if mu > 1e30:
                            break
            oP[j] = gP
            oO[j] = gO
            oR[j] = fn
    return outP, outO, outR, outI
