# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-Bregman iteration kernel (hot loop of the solver).

Same contract as ``_fallback.run_admm``; the matvecs with the eigenvector
matrix go through BLAS dgemv and the vector updates are fused C loops.
"""

import numpy as np

from libc.math cimport fabs, isfinite
from scipy.linalg.cython_blas cimport dgemv


def run_admm(double[::1, :] Q, double[::1] lam, double[::1] btc, double[::1] w,
             double alpha, double mu, double relax, double tol_primal,
             double tol_dual, int max_iters, bint adapt, double mu_lo,
             double mu_hi, double[::1] z, double[::1] u):
    cdef int n = lam.shape[0]
    cdef double[::1] rhs = np.empty(n)
    cdef double[::1] t = np.empty(n)
    cdef double[::1] x = np.empty(n)
    cdef double[::1] zp = np.empty(n)
    cdef int it = 0, i, inc = 1
    cdef double r = 0.0, s = 0.0, one = 1.0, zero = 0.0
    cdef double v, kap, xr, az
    cdef char transT = b'T', transN = b'N'
    cdef bint converged = False, bad = False

    with nogil:
        while it < max_iters:
            it += 1
            for i in range(n):
                rhs[i] = btc[i] + mu * (z[i] - u[i])
            dgemv(&transT, &n, &n, &one, &Q[0, 0], &n, &rhs[0], &inc,
                  &zero, &t[0], &inc)
            for i in range(n):
                t[i] /= lam[i] + mu
            dgemv(&transN, &n, &n, &one, &Q[0, 0], &n, &t[0], &inc,
                  &zero, &x[0], &inc)
            r = 0.0
            s = 0.0
            kap = alpha / mu
            for i in range(n):
                xr = relax * x[i] + (1.0 - relax) * z[i]
                v = xr + u[i]
                zp[i] = z[i]
                az = fabs(v) - kap * w[i]
                if az > 0.0:
                    z[i] = az if v > 0.0 else -az
                else:
                    z[i] = 0.0
                u[i] += xr - z[i]
                if fabs(x[i] - z[i]) > r:
                    r = fabs(x[i] - z[i])
                if fabs(z[i] - zp[i]) > s:
                    s = fabs(z[i] - zp[i])
            s *= mu
            if not (isfinite(r) and isfinite(s)):
                bad = True
                break
            if r < tol_primal and s < tol_dual:
                converged = True
                break
            if adapt:
                if r > 10.0 * s and mu < mu_hi:
                    mu *= 2.0
                    for i in range(n):
                        u[i] /= 2.0
                elif s > 10.0 * r and mu > mu_lo:
                    mu /= 2.0
                    for i in range(n):
                        u[i] *= 2.0

    if bad:
        raise ArithmeticError("split-Bregman iterate became non-finite")
    return it, r, s, mu, converged
