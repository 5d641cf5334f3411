"""Pure-numpy reference implementation of the hot smoothing kernels.

The compiled extension (`endoctrl._backend._core`) implements the same
three entry points with identical semantics; this module is the fallback
selected at import time when the extension is unavailable.  Both backends
assume the caller has already put the data rows into a canonical order
(see :func:`endoctrl.smoothers.canonical_order`), which makes every output
invariant to row permutations of the original dataset.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import ndtr

GAUSSIAN = 0
EPANECHNIKOV = 1

# Gaussian weights beyond this many bandwidths are treated as exactly zero
# so that compact-support style truncation behaves identically across
# backends.
GAUSS_CUTOFF = 8.0

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def monomial_exponents(k, degree):
    """Exponent table for all monomials in k variables of total degree
    <= degree.  Row 0 is the constant; rows 1..k are the linear terms in
    column order, so coefficient index 1 is always the slope along the
    first conditioning column."""
    if degree == 0:
        return np.zeros((1, k), dtype=np.int64)
    terms = [np.zeros(k, dtype=np.int64)]
    terms.extend(np.eye(k, dtype=np.int64))
    if degree >= 2:
        for i in range(k):
            for j in range(i, k):
                e = np.zeros(k, dtype=np.int64)
                e[i] += 1
                e[j] += 1
                terms.append(e)
    return np.asarray(terms, dtype=np.int64)


def _weights(u, kernel_id):
    if kernel_id == GAUSSIAN:
        w = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
        w[np.abs(u) > GAUSS_CUTOFF] = 0.0
        return w
    w = 0.75 * (1.0 - u * u)
    w[w < 0.0] = 0.0
    return w


def _integrated(u, kernel_id):
    if kernel_id == GAUSSIAN:
        return ndtr(u)
    uc = np.clip(u, -1.0, 1.0)
    return 0.5 + 0.75 * uc - 0.25 * uc ** 3


def _product_weights(cols, point, bw, kernel_id):
    u = (cols - point[None, :]) / bw[None, :]
    w = _weights(u[:, 0], kernel_id)
    for j in range(1, cols.shape[1]):
        w = w * _weights(u[:, j], kernel_id)
    return u, w


def local_poly_batch(y, cols, points, bw, kernel_id, degree):
    """Kernel-weighted local polynomial fit at each evaluation point.

    Returns (mean, deriv, ess, dens, ok) arrays of length m.  `deriv` is
    the fitted partial derivative along the first conditioning column
    (nan for degree 0), `ess` the sum of kernel weights, `dens` the
    product-kernel density estimate at the point, and `ok` False where
    the local design was rank deficient or underdetermined.
    """
    y = np.asarray(y, dtype=np.float64)
    cols = np.atleast_2d(np.asarray(cols, dtype=np.float64))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    bw = np.asarray(bw, dtype=np.float64)
    n, k = cols.shape
    m = points.shape[0]
    exps = monomial_exponents(k, degree)
    p = exps.shape[0]

    mean = np.full(m, np.nan)
    deriv = np.full(m, np.nan)
    ess = np.zeros(m)
    dens = np.zeros(m)
    ok = np.zeros(m, dtype=bool)
    bw_prod = float(np.prod(bw))

    for i in range(m):
        u, w = _product_weights(cols, points[i], bw, kernel_id)
        sw = float(w.sum())
        ess[i] = sw
        dens[i] = sw / (n * bw_prod)
        active = w > 0.0
        if int(active.sum()) < p or sw <= 0.0:
            continue
        ua = u[active]
        wa = w[active]
        ya = y[active]
        a = np.ones((ua.shape[0], p))
        for t in range(1, p):
            for j in range(k):
                e = exps[t, j]
                if e:
                    a[:, t] *= ua[:, j] ** e
        aw = a * wa[:, None]
        g = aw.T @ a
        b = aw.T @ ya
        try:
            lu, piv = lu_factor(g, check_finite=False)
        except ValueError:
            continue
        dg = np.abs(np.diag(lu))
        if dg.min() <= 1e-13 * max(dg.max(), 1e-300):
            continue
        coef = lu_solve((lu, piv), b, check_finite=False)
        mean[i] = coef[0]
        if degree >= 1:
            deriv[i] = coef[1] / bw[0]
        ok[i] = True
    return mean, deriv, ess, dens, ok


def smoothed_cdf_rows(d, cols, bw, h_d, kernel_id):
    """Row-wise smoothed conditional CDF: for each row i,
    v_i = sum_j K((cols_i - cols_j)/bw) * G((d_i - d_j)/h_d) / sum_j K,
    with G the integrated kernel.  O(n^2); evaluated in blocks."""
    d = np.asarray(d, dtype=np.float64)
    cols = np.atleast_2d(np.asarray(cols, dtype=np.float64))
    bw = np.asarray(bw, dtype=np.float64)
    n = d.shape[0]
    v = np.empty(n)
    ess = np.empty(n)
    block = max(1, int(4e6 // max(n, 1)))
    for s in range(0, n, block):
        e = min(n, s + block)
        u = (cols[s:e, None, :] - cols[None, :, :]) / bw[None, None, :]
        w = _weights(u[:, :, 0], kernel_id)
        for j in range(1, cols.shape[1]):
            w = w * _weights(u[:, :, j], kernel_id)
        g = _integrated((d[s:e, None] - d[None, :]) / h_d, kernel_id)
        sw = w.sum(axis=1)
        ess[s:e] = sw
        with np.errstate(invalid="ignore", divide="ignore"):
            v[s:e] = (w * g).sum(axis=1) / sw
    return np.clip(v, 0.0, 1.0), ess
