"""Data-side plausibility screens for the identifying assumptions.

None of these are formal tests: measurable separability of the treatment
and the controls is not point-identifiable from data, so the
conditional-variance screen below checks a necessary symptom (residual
treatment variation at every covariate value), and thresholds are
calibration choices, not size-controlled critical values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .dgp import DataSet
from .errors import NoSupportError
from .smoothers import DEFAULT_TRIM_FRACTION, SmootherConfig, batch_fit, kernel_weight

#: minimum residual-variance share of Var(D) before separability is
#: considered implausible
SEPARABILITY_FLOOR = 0.01
#: maximum mass of the treated-at-d_tilde rows outside the support of
#: X | D = d
OVERLAP_FAIL_MASS = 0.10
#: KS threshold for control-variable uniformity
CV_KS_THRESHOLD = 0.05

_MIN_ROWS = 100


@dataclass(frozen=True)
class DiagnosticReport:
    name: str
    statistic: float
    threshold: float
    verdict: str  # pass | warn | fail
    details: str = ""

    def to_record(self) -> dict:
        return {"name": self.name, "statistic": self.statistic,
                "threshold": self.threshold, "verdict": self.verdict,
                "details": self.details}

    def __str__(self):
        return (f"[{self.verdict.upper():4s}] {self.name}: "
                f"statistic={self.statistic:.4g} "
                f"threshold={self.threshold:.4g}  {self.details}")


def separability_check(data: DataSet, config: SmootherConfig | None = None,
                       threshold: float = SEPARABILITY_FLOOR,
                       n_grid: int = 15) -> DiagnosticReport:
    """Residual-variation screen: minimum over a covariate grid of
    Var(D | X = x) / Var(D).

    If the treatment has (almost) no conditional variation somewhere, the
    open-interval support condition behind measurable separability is
    implausible there.  Binary treatments are exempt.
    """
    data = data.public()
    config = config or SmootherConfig()
    if np.all(np.isin(np.unique(data.d), (0.0, 1.0))):
        return DiagnosticReport(
            name="separability", statistic=float("nan"), threshold=threshold,
            verdict="warn",
            details="not applicable: binary treatment is exempt from the "
                    "separability requirement")
    if data.n < _MIN_ROWS:
        return DiagnosticReport(
            name="separability", statistic=float("nan"), threshold=threshold,
            verdict="warn", details=f"insufficient data (n={data.n} < {_MIN_ROWS})")
    qs = np.linspace(0.05, 0.95, n_grid)
    points = np.column_stack(
        [np.quantile(data.x[:, j], qs) for j in range(data.k)])
    cfg0 = replace(config, degree=0)
    m1, _, _, dens, ok1 = batch_fit(data.d, data.x, points, cfg0)
    m2, _, _, _, ok2 = batch_fit(data.d ** 2, data.x, points, cfg0)
    floor = DEFAULT_TRIM_FRACTION * np.nanmax(dens)
    keep = ok1 & ok2 & (dens >= floor)
    if not keep.any():
        raise NoSupportError("no untrimmed grid points for separability check")
    cond_var = np.maximum(m2[keep] - m1[keep] ** 2, 0.0)
    stat = float(cond_var.min() / data.d.var())
    return DiagnosticReport(
        name="separability", statistic=stat, threshold=threshold,
        verdict="pass" if stat >= threshold else "fail",
        details="min_x Var(D|X=x)/Var(D) over the covariate grid")


def support_overlap(data: DataSet, d: float, d_tilde: float,
                    config: SmootherConfig | None = None,
                    threshold: float = OVERLAP_FAIL_MASS) -> DiagnosticReport:
    """Fraction of rows with D near d_tilde whose X lies where the
    estimated density of X | D = d is below the trim floor."""
    data = data.public()
    config = config or SmootherConfig()
    binary = np.all(np.isin(np.unique(data.d), (0.0, 1.0)))
    if binary:
        w_ref = (data.d == float(d)).astype(float)
        sel_rows = data.d == float(d_tilde)
    else:
        h_d = config.resolve_bandwidths(data.d[:, None])[0]
        w_ref = kernel_weight((data.d - d) / h_d, config.kernel)
        sel_rows = kernel_weight((data.d - d_tilde) / h_d, config.kernel) > 0
    if w_ref.sum() <= 0 or not sel_rows.any():
        raise NoSupportError(
            f"empty conditioning window at d={d} or d_tilde={d_tilde}")
    ref = np.flatnonzero(w_ref > 0)
    xa = data.x[ref]
    bw = config.resolve_bandwidths(xa)
    # weighted kernel density of X | D = d, evaluated where needed
    def wdens(points):
        u_all = np.zeros((points.shape[0], xa.shape[0]))
        for j in range(xa.shape[1]):
            u = (points[:, j, None] - xa[None, :, j]) / bw[j]
            u_all += np.log(np.maximum(kernel_weight(u, config.kernel), 1e-300))
        w = np.exp(u_all) * w_ref[ref][None, :]
        return w.sum(axis=1) / (w_ref[ref].sum() * np.prod(bw))

    dens_ref = wdens(xa)
    floor = DEFAULT_TRIM_FRACTION * dens_ref.max() \
        if config.trim_density_floor is None else config.trim_density_floor
    dens_t = wdens(data.x[sel_rows])
    stat = float((dens_t < floor).mean())
    return DiagnosticReport(
        name="support_overlap", statistic=stat, threshold=threshold,
        verdict="pass" if stat <= threshold else "fail",
        details=f"mass of X|D={d_tilde} outside the trimmed support of "
                f"X|D={d}")


def cv_uniformity(v, threshold: float = CV_KS_THRESHOLD) -> DiagnosticReport:
    """Kolmogorov-Smirnov distance between the control-variable column
    and Uniform(0, 1); a correctly constructed control variable is a
    probability integral transform."""
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise NoSupportError("empty control-variable column")
    stat = float(stats.kstest(v, "uniform").statistic)
    return DiagnosticReport(
        name="cv_uniformity", statistic=stat, threshold=threshold,
        verdict="pass" if stat <= threshold else "fail",
        details="KS distance of the control variable from Uniform(0,1)")
