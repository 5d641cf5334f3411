# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the hot smoothing kernels.

Semantics mirror `endoctrl._backend._ref`; see that module for the
contract.  Accumulation is done in row order over canonically sorted
input, so outputs are permutation invariant at the Python layer.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport NAN, exp, erf, fabs

cnp.import_array()

cdef double INV_SQRT_2PI = 0.3989422804014326779
cdef double INV_SQRT_2 = 0.7071067811865475244
cdef double GAUSS_CUTOFF = 8.0

DEF KERN_GAUSS = 0


cdef inline double _kw(double u, int kernel_id) nogil:
    if kernel_id == KERN_GAUSS:
        if fabs(u) > GAUSS_CUTOFF:
            return 0.0
        return INV_SQRT_2PI * exp(-0.5 * u * u)
    if u <= -1.0 or u >= 1.0:
        return 0.0
    return 0.75 * (1.0 - u * u)


cdef inline double _ikw(double u, int kernel_id) nogil:
    if kernel_id == KERN_GAUSS:
        return 0.5 * (1.0 + erf(u * INV_SQRT_2))
    if u <= -1.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return 0.5 + 0.75 * u - 0.25 * u * u * u


cdef int _solve_inplace(double[:, ::1] g, double[::1] b, int p) nogil:
    """Gaussian elimination with partial pivoting; solution left in b.
    Returns 0 on success, 1 when (near-)singular."""
    cdef int i, j, r, piv
    cdef double amax, tmp, f, dmax
    dmax = 0.0
    for i in range(p):
        if fabs(g[i, i]) > dmax:
            dmax = fabs(g[i, i])
    if dmax <= 0.0:
        dmax = 1e-300
    for i in range(p):
        piv = i
        amax = fabs(g[i, i])
        for r in range(i + 1, p):
            if fabs(g[r, i]) > amax:
                amax = fabs(g[r, i])
                piv = r
        if amax <= 1e-13 * dmax:
            return 1
        if piv != i:
            for j in range(p):
                tmp = g[i, j]
                g[i, j] = g[piv, j]
                g[piv, j] = tmp
            tmp = b[i]
            b[i] = b[piv]
            b[piv] = tmp
        for r in range(i + 1, p):
            f = g[r, i] / g[i, i]
            if f != 0.0:
                for j in range(i, p):
                    g[r, j] -= f * g[i, j]
                b[r] -= f * b[i]
    for i in range(p - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, p):
            tmp -= g[i, j] * b[j]
        b[i] = tmp / g[i, i]
    return 0


def local_poly_batch(y, cols, points, bw, int kernel_id, int degree):
    from ._ref import monomial_exponents

    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(
        np.atleast_2d(np.asarray(cols, dtype=np.float64)))
    cdef double[:, ::1] pv = np.ascontiguousarray(
        np.atleast_2d(np.asarray(points, dtype=np.float64)))
    cdef double[::1] bv = np.ascontiguousarray(bw, dtype=np.float64)
    cdef long[:, ::1] ev = np.ascontiguousarray(
        monomial_exponents(cv.shape[1], degree), dtype=np.int64)

    cdef Py_ssize_t n = cv.shape[0], k = cv.shape[1]
    cdef Py_ssize_t m = pv.shape[0], p = ev.shape[0]
    cdef Py_ssize_t i, j, r, t, c, e

    mean_a = np.full(m, np.nan)
    deriv_a = np.full(m, np.nan)
    ess_a = np.zeros(m)
    dens_a = np.zeros(m)
    ok_a = np.zeros(m, dtype=np.uint8)
    cdef double[::1] mean = mean_a
    cdef double[::1] deriv = deriv_a
    cdef double[::1] ess = ess_a
    cdef double[::1] dens = dens_a
    cdef unsigned char[::1] ok = ok_a

    g_a = np.zeros((p, p))
    b_a = np.zeros(p)
    a_a = np.zeros(p)
    u_a = np.zeros(k)
    cdef double[:, ::1] g = g_a
    cdef double[::1] b = b_a
    cdef double[::1] a = a_a
    cdef double[::1] u = u_a

    cdef double bw_prod = 1.0, w, sw, term
    cdef Py_ssize_t n_active
    for j in range(k):
        bw_prod *= bv[j]

    with nogil:
        for i in range(m):
            for r in range(p):
                b[r] = 0.0
                for t in range(p):
                    g[r, t] = 0.0
            sw = 0.0
            n_active = 0
            for j in range(n):
                w = 1.0
                for c in range(k):
                    u[c] = (cv[j, c] - pv[i, c]) / bv[c]
                    w *= _kw(u[c], kernel_id)
                    if w == 0.0:
                        break
                if w == 0.0:
                    continue
                sw += w
                n_active += 1
                for t in range(p):
                    term = 1.0
                    for c in range(k):
                        for e in range(ev[t, c]):
                            term *= u[c]
                    a[t] = term
                for r in range(p):
                    b[r] += w * a[r] * yv[j]
                    for t in range(r, p):
                        g[r, t] += w * a[r] * a[t]
            ess[i] = sw
            dens[i] = sw / (n * bw_prod)
            if n_active < p or sw <= 0.0:
                continue
            for r in range(p):
                for t in range(r + 1, p):
                    g[t, r] = g[r, t]
            if _solve_inplace(g, b, <int>p) != 0:
                continue
            mean[i] = b[0]
            if degree >= 1:
                deriv[i] = b[1] / bv[0]
            ok[i] = 1

    return mean_a, deriv_a, ess_a, dens_a, ok_a.astype(bool)


def smoothed_cdf_rows(d, cols, bw, double h_d, int kernel_id):
    cdef double[::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[:, ::1] cv = np.ascontiguousarray(
        np.atleast_2d(np.asarray(cols, dtype=np.float64)))
    cdef double[::1] bv = np.ascontiguousarray(bw, dtype=np.float64)
    cdef Py_ssize_t n = dv.shape[0], k = cv.shape[1]
    cdef Py_ssize_t i, j, c

    v_a = np.empty(n)
    ess_a = np.empty(n)
    cdef double[::1] v = v_a
    cdef double[::1] ess = ess_a
    cdef double w, sw, acc

    with nogil:
        for i in range(n):
            sw = 0.0
            acc = 0.0
            for j in range(n):
                w = 1.0
                for c in range(k):
                    w *= _kw((cv[i, c] - cv[j, c]) / bv[c], kernel_id)
                    if w == 0.0:
                        break
                if w == 0.0:
                    continue
                sw += w
                acc += w * _ikw((dv[i] - dv[j]) / h_d, kernel_id)
            ess[i] = sw
            if sw > 0.0:
                acc = acc / sw
                if acc < 0.0:
                    acc = 0.0
                elif acc > 1.0:
                    acc = 1.0
                v[i] = acc
            else:
                v[i] = NAN

    return v_a, ess_a
