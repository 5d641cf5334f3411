"""Kernel smoothing core: local-polynomial conditional means and
derivatives, smoothed conditional CDF, kernel density, and bandwidth
selection.

All estimation routines take plain numpy arrays: a response vector and an
(n, k) matrix of conditioning columns.  The first conditioning column is
the direction along which derivatives are reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from ._backend import EPANECHNIKOV, GAUSSIAN
from .errors import (
    ConfigurationError,
    DegenerateColumnError,
    NoSupportError,
    SingularFitError,
)

KERNELS = {"gaussian": GAUSSIAN, "epanechnikov": EPANECHNIKOV}

#: Default relative trimming: points whose conditioning density falls
#: below this fraction of the maximum density seen on the evaluation grid
#: are flagged.
DEFAULT_TRIM_FRACTION = 0.01


@dataclass(frozen=True)
class SmootherConfig:
    """Estimation-side choices for one kernel fit.

    ``bandwidths`` has one positive entry per conditioning dimension;
    ``None`` means "rule of thumb from the data at fit time", optionally
    scaled by ``bandwidth_scale``.  ``trim_density_floor`` is an absolute
    density floor; ``None`` selects the relative 1%-of-max rule.
    """

    kernel: str = "gaussian"
    bandwidths: tuple[float, ...] | None = None
    degree: int = 1
    trim_density_floor: float | None = None
    bandwidth_scale: float = 1.0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")
        if self.degree not in (0, 1, 2):
            raise ConfigurationError("degree must be 0, 1, or 2")
        if self.bandwidths is not None:
            bws = tuple(float(b) for b in self.bandwidths)
            if any(b <= 0 for b in bws):
                raise ConfigurationError("bandwidths must be positive")
            object.__setattr__(self, "bandwidths", bws)
        if self.bandwidth_scale <= 0:
            raise ConfigurationError("bandwidth_scale must be positive")

    def resolve_bandwidths(self, cols: np.ndarray) -> np.ndarray:
        cols = np.atleast_2d(np.asarray(cols, dtype=float))
        if self.bandwidths is not None:
            if len(self.bandwidths) != cols.shape[1]:
                raise ConfigurationError(
                    f"{len(self.bandwidths)} bandwidths for "
                    f"{cols.shape[1]} conditioning columns")
            return np.asarray(self.bandwidths, dtype=float)
        return self.bandwidth_scale * rule_of_thumb(cols)

    def with_bandwidths(self, bw) -> "SmootherConfig":
        return replace(self, bandwidths=tuple(float(b) for b in bw))


@dataclass(frozen=True)
class FitResult:
    mean: float
    derivative_wrt_first: float | None
    effective_sample_size: float
    trimmed: bool
    density: float = field(default=float("nan"))


@dataclass(frozen=True)
class DensityResult:
    value: float
    effective_sample_size: float
    trimmed: bool


def kernel_weight(u, kernel: str = "gaussian"):
    """Kernel weight at standardized distance u.  Symmetric, maximal at
    zero, integrates to one."""
    u = np.asarray(u, dtype=float)
    out = _backend._ref._weights(np.atleast_1d(u).copy(), KERNELS[kernel])
    return float(out[0]) if u.ndim == 0 else out


def integrated_kernel(u, kernel: str = "gaussian"):
    """CDF of the kernel, used for smoothed-indicator responses."""
    u = np.asarray(u, dtype=float)
    out = _backend._ref._integrated(np.atleast_1d(u), KERNELS[kernel])
    return float(out[0]) if u.ndim == 0 else out


def canonical_order(cols: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Index array putting rows into a content-based order so smoother
    outputs do not depend on the row order of the input data."""
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    keys = [cols[:, j] for j in range(cols.shape[1] - 1, -1, -1)]
    if y is not None:
        keys.insert(0, np.asarray(y, dtype=float))
    return np.lexsort(keys)


def rule_of_thumb(cols: np.ndarray) -> np.ndarray:
    """Per-dimension rule-of-thumb bandwidth 1.06 * sd * n^(-1/(4+k))."""
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    n, k = cols.shape
    if n < 10:
        raise ConfigurationError("rule_of_thumb needs at least 10 rows")
    # sort each column first so the reduction order (and hence the exact
    # floating-point result) does not depend on row order
    sd = np.sort(cols, axis=0).std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise DegenerateColumnError(
            f"zero-variance conditioning column(s) {np.nonzero(sd <= 0)[0].tolist()}")
    return 1.06 * sd * n ** (-1.0 / (4.0 + k))


def bandwidth_select(cols, method: str = "rule_of_thumb", response=None,
                     kernel: str = "gaussian", grid_size: int = 13,
                     grid_span: float = 4.0) -> np.ndarray:
    """Bandwidth vector for the conditioning columns.

    ``lscv`` minimizes the leave-one-out squared prediction error of a
    degree-0 fit of ``response`` over a log-spaced grid of multiples of
    the rule-of-thumb vector.
    """
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    rot = rule_of_thumb(cols)
    if method == "rule_of_thumb":
        return rot
    if method != "lscv":
        raise ConfigurationError(f"unknown bandwidth method {method!r}")
    if response is None:
        raise ConfigurationError("lscv requires a response column")
    if cols.shape[0] < 50:
        raise ConfigurationError("lscv needs at least 50 rows")
    y = np.asarray(response, dtype=float)
    best_bw, best_err = None, np.inf
    for mult in np.exp(np.linspace(-np.log(grid_span), np.log(grid_span), grid_size)):
        err = _loo_error(y, cols, mult * rot, KERNELS[kernel])
        if err < best_err:
            best_err, best_bw = err, mult * rot
    return best_bw


def _loo_error(y, cols, bw, kernel_id):
    n = cols.shape[0]
    err = 0.0
    used = 0
    for i in range(n):
        u = (cols - cols[i][None, :]) / bw[None, :]
        w = _backend._ref._weights(u[:, 0], kernel_id)
        for j in range(1, cols.shape[1]):
            w = w * _backend._ref._weights(u[:, j], kernel_id)
        w[i] = 0.0
        sw = w.sum()
        if sw <= 0:
            continue
        err += (y[i] - float(w @ y) / sw) ** 2
        used += 1
    return err / used if used else np.inf


def batch_fit(y, cols, points, config: SmootherConfig,
              bandwidths=None):
    """Vectorized local-polynomial fits at many evaluation points.

    Returns (mean, deriv, ess, dens, ok) arrays; rows are canonically
    reordered internally so results are permutation invariant.
    """
    y = np.asarray(y, dtype=float)
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != cols.shape[1]:
        raise ConfigurationError(
            f"evaluation points have {points.shape[1]} coordinates for "
            f"{cols.shape[1]} conditioning columns")
    bw = np.asarray(bandwidths, dtype=float) if bandwidths is not None \
        else config.resolve_bandwidths(cols)
    order = canonical_order(cols, y)
    return _backend.local_poly_batch(
        y[order], cols[order], points, bw, KERNELS[config.kernel], config.degree)


def local_poly_fit(y, cols, point, config: SmootherConfig,
                   density_floor: float = 0.0) -> FitResult:
    """Local polynomial fit of y on the conditioning columns at one point.

    mean is the local intercept; for degree >= 1 the derivative along the
    first column is reported.  Raises SingularFitError when the local
    design is rank deficient.
    """
    mean, deriv, ess, dens, ok = batch_fit(y, cols, np.atleast_2d(point), config)
    if not ok[0]:
        raise SingularFitError(
            "rank-deficient local design at evaluation point",
            effective_sample_size=float(ess[0]))
    return FitResult(
        mean=float(mean[0]),
        derivative_wrt_first=float(deriv[0]) if config.degree >= 1 else None,
        effective_sample_size=float(ess[0]),
        trimmed=bool(dens[0] < density_floor),
        density=float(dens[0]),
    )


def conditional_cdf(d_col, d_value, cond_cols, point, config: SmootherConfig,
                    d_bandwidth: float | None = None) -> float:
    """Smoothed-indicator estimate of P(D <= d_value | cond = point).

    The response is the integrated kernel of (d_value - D_i)/h_d, fitted
    with a degree-0 local fit on the conditioning columns, so the result
    is monotone in d_value and clipped to [0, 1] by construction.
    """
    d_col = np.asarray(d_col, dtype=float)
    cond_cols = np.atleast_2d(np.asarray(cond_cols, dtype=float))
    if d_bandwidth is None:
        d_bandwidth = float(rule_of_thumb(d_col[:, None])[0])
    resp = integrated_kernel((d_value - d_col) / d_bandwidth, config.kernel)
    mean, _, ess, _, ok = batch_fit(
        resp, cond_cols, np.atleast_2d(point), replace(config, degree=0))
    if not ok[0] or ess[0] <= 0:
        raise NoSupportError(
            "no observations with positive weight at conditioning point",
            density=0.0)
    return float(np.clip(mean[0], 0.0, 1.0))


def conditional_density(cols, point, config: SmootherConfig,
                        density_floor: float = 0.0) -> DensityResult:
    """Product-kernel density estimate at the point, with effective
    sample size and a trim flag against the given floor."""
    cols = np.atleast_2d(np.asarray(cols, dtype=float))
    if cols.shape[0] >= 10:
        bw = config.resolve_bandwidths(cols)
    else:
        # degenerate inputs: fall back to unit bandwidths
        bw = np.asarray(config.bandwidths, dtype=float) \
            if config.bandwidths is not None else np.ones(cols.shape[1])
    _, _, ess, dens, _ = batch_fit(
        np.zeros(cols.shape[0]), cols, np.atleast_2d(point),
        replace(config, degree=0), bandwidths=bw)
    return DensityResult(
        value=float(dens[0]),
        effective_sample_size=float(ess[0]),
        trimmed=bool(dens[0] < density_floor or ess[0] < 1.0),
    )


def smoothed_cdf_rows(d_col, cond_cols, config: SmootherConfig,
                      d_bandwidth: float | None = None):
    """Row-wise conditional CDF of each D_i given its own conditioning
    values (the control-variable construction).  Returns (v, ess)."""
    d_col = np.asarray(d_col, dtype=float)
    cond_cols = np.atleast_2d(np.asarray(cond_cols, dtype=float))
    bw = config.resolve_bandwidths(cond_cols)
    if d_bandwidth is None:
        d_bandwidth = float(rule_of_thumb(d_col[:, None])[0])
    order = canonical_order(cond_cols, d_col)
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    v_s, ess_s = _backend.smoothed_cdf_rows(
        d_col[order], cond_cols[order], bw, d_bandwidth, KERNELS[config.kernel])
    return v_s[inverse], ess_s[inverse]
