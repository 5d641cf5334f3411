"""Treatment-effect estimators.

Two groups live here: the naive parametric baselines (OLS, 2SLS and the
population linear-projection coefficients they converge to), and the
nonparametric plug-in estimators of the conditional / unconditional local
average response, ATE and ATT, with and without a constructed control
variable for triangular models.

Every estimator operates on the public view of a DataSet (latent
structural errors are stripped on entry) and is a pure function of its
arguments, so bootstrap replicates and Monte Carlo reps can run
concurrently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .dgp import DataSet, ModelSpec, _raw_draws
from .errors import (
    ConfigurationError,
    EndoctrlError,
    InstabilityError,
    NearZeroDenominatorError,
    OverlapError,
    SingularFitError,
    SupportError,
    UnsupportedFamilyError,
    WeakInstrumentWarning,
)
from .smoothers import (
    DEFAULT_TRIM_FRACTION,
    SmootherConfig,
    batch_fit,
    canonical_order,
    kernel_weight,
    rule_of_thumb,
    smoothed_cdf_rows,
)

#: outer kernel weights are truncated this many bandwidths out
_OUTER_CUTOFF = 5.0
#: minimum |denominator derivative| for ratio estimators
_DENOM_FLOOR = 1e-3
#: first-stage F below this attaches a weak-instrument warning
_WEAK_F_FLOOR = 10.0


@dataclass(frozen=True)
class Estimate:
    """Point estimate with reproducibility metadata."""

    value: float
    estimator_id: str
    se: float | None = None
    eval_point: tuple | None = None
    n_effective: float = float("nan")
    trimmed_fraction: float = 0.0
    bandwidths: tuple | None = None

    def with_se(self, se: float) -> "Estimate":
        return replace(self, se=float(se))

    def to_record(self) -> dict:
        d, x = None, None
        if self.eval_point is not None:
            d = self.eval_point[0]
            x = list(self.eval_point[1:]) or None
        return {
            "estimator_id": self.estimator_id,
            "value": self.value,
            "se": self.se,
            "eval_d": d,
            "eval_x": x,
            "n_effective": self.n_effective,
            "trimmed_fraction": self.trimmed_fraction,
            "bandwidths": list(self.bandwidths) if self.bandwidths else None,
        }

    def csv_row(self) -> str:
        d = "" if self.eval_point is None else f"{self.eval_point[0]:.17g}"
        xs = "" if self.eval_point is None or len(self.eval_point) < 2 else \
            ";".join(f"{v:.17g}" for v in self.eval_point[1:])
        se = "" if self.se is None else f"{self.se:.17g}"
        return (f"{self.estimator_id},{d},{xs},{self.value:.17g},{se},"
                f"{self.n_effective:.17g},{self.trimmed_fraction:.17g}")


@dataclass(frozen=True)
class LinearFit:
    """Parametric least-squares fit: names, coefficients, classical SEs."""

    names: tuple
    coef: np.ndarray
    se: np.ndarray
    first_stage_f: float | None = None

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    @property
    def tau(self) -> float:
        return self["d"]


@dataclass(frozen=True)
class ControlVariableColumn:
    """Estimated control variable V_i = F(D_i | Z_i, X_i) per row."""

    v: np.ndarray
    trimmed: np.ndarray
    bandwidths: tuple
    d_bandwidth: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.size and (np.nanmin(v) < 0.0 or np.nanmax(v) > 1.0):
            raise ConfigurationError("control variable outside [0, 1]")


# --- shared helpers ----------------------------------------------------


def _design(data: DataSet, with_z: bool = False) -> tuple[np.ndarray, tuple]:
    cols = [np.ones(data.n), data.z if with_z else data.d]
    names = ["intercept", "z" if with_z else "d"]
    for j in range(data.k):
        cols.append(data.x[:, j])
        names.append(f"x{j + 1}")
    return np.column_stack(cols), tuple(names)


def _solve_ls(w_mat: np.ndarray, y: np.ndarray):
    q, r = np.linalg.qr(w_mat)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise SingularFitError("rank-deficient regression design",
                               effective_sample_size=w_mat.shape[0])
    return np.linalg.solve(r, q.T @ y), r


def _dx_cols(data: DataSet) -> np.ndarray:
    return np.column_stack([data.d, data.x])


def _resolve_floor(config: SmootherConfig, reference_densities) -> float:
    if config.trim_density_floor is not None:
        return float(config.trim_density_floor)
    ref = np.asarray(reference_densities, dtype=float)
    ref = ref[np.isfinite(ref)]
    return DEFAULT_TRIM_FRACTION * float(ref.max()) if ref.size else 0.0


def _reference_densities(cols, config, bw, cap: int = 200) -> np.ndarray:
    """Density estimates at a deterministic subset of data rows, used as
    the reference maximum for relative trimming."""
    cols = np.atleast_2d(cols)
    order = canonical_order(cols)
    idx = order[np.linspace(0, cols.shape[0] - 1, min(cap, cols.shape[0]),
                            dtype=int)]
    _, _, _, dens, _ = batch_fit(np.zeros(cols.shape[0]), cols, cols[idx],
                                 replace(config, degree=0), bandwidths=bw)
    return dens


def _outer_weights(u: np.ndarray, kernel: str) -> np.ndarray:
    w = kernel_weight(u, kernel)
    w[np.abs(u) > _OUTER_CUTOFF] = 0.0
    return w


# --- parametric baselines ---------------------------------------------


def ols_fit(data: DataSet) -> LinearFit:
    """Least-squares projection of Y on (1, D, X)."""
    data = data.public()
    w_mat, names = _design(data)
    coef, r = _solve_ls(w_mat, data.y)
    resid = data.y - w_mat @ coef
    dof = max(data.n - w_mat.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    rinv = np.linalg.inv(r)
    cov = sigma2 * rinv @ rinv.T
    return LinearFit(names=names, coef=coef, se=np.sqrt(np.diag(cov)))


def theoretical_lp(spec: ModelSpec, mc_draws: int = 10_000_000,
                   seed=0) -> LinearFit:
    """Population linear-projection coefficients of Y on (1, D, X) for a
    linear-family spec: closed-form moment algebra where available, else
    high-draw Monte Carlo moments.  Population quantities carry zero
    standard errors."""
    if spec.outcome.family != "linear":
        raise UnsupportedFamilyError(
            "theoretical_lp is defined for the linear family only")
    o, tr, er = spec.outcome, spec.treatment, spec.errors
    closed = (tr.kind == "continuous" and tr.pi_x2 == 0.0
              and er.x_dist == "normal" and er.eps_x_shape in ("zero", "linear"))
    if closed:
        c = er.eps_x_scale if er.eps_x_shape == "linear" else 0.0
        var_d = tr.pi_z ** 2 + tr.pi_x ** 2 + tr.eta_scale ** 2
        cov_dx = tr.pi_x
        m = np.array([[1.0, 0.0, 0.0],
                      [0.0, var_d, cov_dx],
                      [0.0, cov_dx, 1.0]])
        e_weps = np.array([0.0, tr.pi_x * c + tr.eta_scale * er.eps_eta, c])
        theta = np.array([o.intercept, o.tau, o.beta])
        coef = theta + np.linalg.solve(m, e_weps)
    else:
        # Monte Carlo moments, accumulated in chunks
        rng = np.random.default_rng(seed)
        p = 3
        g = np.zeros((p, p))
        b = np.zeros(p)
        chunk = 1_000_000
        left = mc_draws
        while left > 0:
            n = min(chunk, left)
            draws = _raw_draws(spec, n, rng)
            w_mat = np.column_stack([np.ones(n), draws["d"], draws["x"]])
            g += w_mat.T @ w_mat
            b += w_mat.T @ draws["y"]
            left -= n
        coef = np.linalg.solve(g, b)
    return LinearFit(names=("intercept", "d", "x1"), coef=coef,
                     se=np.zeros(3))


def tsls_fit(data: DataSet) -> LinearFit:
    """Two-stage least squares of Y on (1, D, X) with instruments
    (1, Z, X).  Attaches the first-stage F statistic; a weak first stage
    raises a WeakInstrumentWarning."""
    data = data.public()
    if data.z is None:
        raise ConfigurationError("tsls_fit requires an instrument column")
    w_mat, names = _design(data)
    a_mat, _ = _design(data, with_z=True)
    # first-stage relevance
    fs_coef, fs_r = _solve_ls(a_mat, data.d)
    fs_resid = data.d - a_mat @ fs_coef
    fs_dof = max(data.n - a_mat.shape[1], 1)
    fs_sigma2 = float(fs_resid @ fs_resid) / fs_dof
    rinv = np.linalg.inv(fs_r)
    fs_se = np.sqrt(np.diag(fs_sigma2 * rinv @ rinv.T))
    f_stat = float((fs_coef[1] / fs_se[1]) ** 2) if fs_se[1] > 0 else 0.0
    if f_stat < _WEAK_F_FLOOR:
        warnings.warn(
            f"first-stage F = {f_stat:.3g} below {_WEAK_F_FLOOR}",
            WeakInstrumentWarning, stacklevel=2)
    atw = a_mat.T @ w_mat
    diag = np.abs(np.diag(np.linalg.qr(atw, mode="r")))
    if diag.min() <= 1e-10 * max(diag.max(), 1e-300):
        raise SingularFitError("singular instrument moment matrix",
                               effective_sample_size=data.n)
    coef = np.linalg.solve(atw, a_mat.T @ data.y)
    resid = data.y - w_mat @ coef
    sigma2 = float(resid @ resid) / max(data.n - w_mat.shape[1], 1)
    what = a_mat @ np.linalg.solve(a_mat.T @ a_mat, a_mat.T @ w_mat)
    cov = sigma2 * np.linalg.inv(what.T @ what)
    return LinearFit(names=names, coef=coef, se=np.sqrt(np.diag(cov)),
                     first_stage_f=f_stat)


# --- nonparametric estimators (no instrument) -------------------------


def iv_ratio(data: DataSet, z: float, x, config: SmootherConfig | None = None,
             denominator_floor: float = _DENOM_FLOOR) -> Estimate:
    """Ratio of the z-derivatives of E[Y|X,Z] and E[D|X,Z] at (z, x)."""
    data = data.public()
    config = config or SmootherConfig()
    if config.degree < 1:
        raise ConfigurationError("iv_ratio needs degree >= 1")
    if data.z is None:
        raise ConfigurationError("iv_ratio requires an instrument column")
    cols = np.column_stack([data.z, data.x])
    bw = config.resolve_bandwidths(cols)
    point = np.concatenate([[z], np.atleast_1d(np.asarray(x, dtype=float))])
    my, dy, essy, _, oky = batch_fit(data.y, cols, point[None, :], config, bw)
    md, dd, _, _, okd = batch_fit(data.d, cols, point[None, :], config, bw)
    if not (oky[0] and okd[0]):
        raise SingularFitError("rank-deficient local design at (z, x)",
                               effective_sample_size=float(essy[0]))
    denom = float(dd[0])
    if abs(denom) < denominator_floor:
        raise NearZeroDenominatorError(
            f"|dE[D|X,Z]/dz| = {abs(denom):.3g} below floor", denominator=denom)
    return Estimate(value=float(dy[0]) / denom, estimator_id="iv_ratio",
                    eval_point=tuple(point), n_effective=float(essy[0]),
                    bandwidths=tuple(bw))


def clar_continuous(data: DataSet, d: float, x,
                    config: SmootherConfig | None = None) -> Estimate:
    """Plug-in CLAR at (d, x): local-polynomial derivative of E[Y|D,X]
    along the treatment direction."""
    data = data.public()
    config = config or SmootherConfig()
    if config.degree < 1:
        raise ConfigurationError("clar_continuous needs degree >= 1")
    cols = _dx_cols(data)
    bw = config.resolve_bandwidths(cols)
    point = np.concatenate([[d], np.atleast_1d(np.asarray(x, dtype=float))])
    floor = _resolve_floor(config, _reference_densities(cols, config, bw))
    mean, deriv, ess, dens, ok = batch_fit(data.y, cols, point[None, :],
                                           config, bw)
    if dens[0] < floor:
        raise SupportError(
            f"evaluation point trimmed: density {dens[0]:.3g} < floor "
            f"{floor:.3g}", density=float(dens[0]))
    if not ok[0]:
        raise SingularFitError("rank-deficient local design at (d, x)",
                               effective_sample_size=float(ess[0]))
    return Estimate(value=float(deriv[0]), estimator_id="clar_continuous",
                    eval_point=tuple(point), n_effective=float(ess[0]),
                    bandwidths=tuple(bw))


def _averaged_derivative(data: DataSet, points: np.ndarray,
                         outer_w: np.ndarray, cols: np.ndarray,
                         bw: np.ndarray, config: SmootherConfig,
                         estimator_id: str, eval_point: tuple) -> Estimate:
    """Kernel-weighted average of local derivatives at `points`, trimming
    low-density and singular points."""
    _, deriv, ess, dens, ok = batch_fit(data.y, cols, points, config, bw)
    floor = _resolve_floor(config, dens)
    keep = ok & (dens >= floor) & (outer_w > 0)
    if not keep.any():
        raise SupportError("all candidate evaluation points trimmed",
                           density=float(np.nanmax(dens, initial=0.0)))
    w = outer_w[keep]
    value = float(w @ deriv[keep] / w.sum())
    return Estimate(
        value=value, estimator_id=estimator_id, eval_point=eval_point,
        n_effective=float(ess[keep].sum()),
        trimmed_fraction=1.0 - keep.sum() / keep.size,
        bandwidths=tuple(bw))


def lar_continuous(data: DataSet, d: float,
                   config: SmootherConfig | None = None) -> Estimate:
    """Plug-in LAR at d: CLAR derivatives averaged over the empirical
    distribution of X among observations with D near d."""
    data = data.public()
    config = config or SmootherConfig()
    if config.degree < 1:
        raise ConfigurationError("lar_continuous needs degree >= 1")
    cols = _dx_cols(data)
    bw = config.resolve_bandwidths(cols)
    u = (data.d - d) / bw[0]
    w = _outer_weights(u, config.kernel)
    cand = np.flatnonzero(w > 0)
    if cand.size == 0:
        raise SupportError(f"no observations with D near {d}", density=0.0)
    points = np.column_stack(
        [np.full(cand.size, float(d)), data.x[cand]])
    return _averaged_derivative(data, points, w[cand], cols, bw, config,
                                "lar_continuous", (float(d),))


# --- binary-treatment estimators --------------------------------------


def _check_binary(data: DataSet) -> None:
    vals = np.unique(data.d)
    if not np.all(np.isin(vals, (0.0, 1.0))):
        raise ConfigurationError("binary estimators require D in {0, 1}")


def _arm_means(data: DataSet, points: np.ndarray,
               config: SmootherConfig):
    """Local fits of Y on X within each arm, at the given X points.
    Returns (m0, m1, keep, ess, bandwidths)."""
    _check_binary(data)
    points = np.atleast_2d(points)
    out = {}
    bw_used = None
    for arm in (0.0, 1.0):
        rows = data.d == arm
        if rows.sum() <= config.degree + data.k:
            raise OverlapError(f"arm D={int(arm)} has too few observations",
                               density=0.0)
        xa = data.x[rows]
        bw = config.resolve_bandwidths(xa)
        bw_used = bw if arm == 1.0 else bw_used
        mean, _, ess, dens, ok = batch_fit(data.y[rows], xa, points,
                                           config, bw)
        floor = _resolve_floor(config, _reference_densities(xa, config, bw))
        out[arm] = (mean, ess, dens >= floor, ok)
    m0, ess0, in0, ok0 = out[0.0]
    m1, ess1, in1, ok1 = out[1.0]
    keep = in0 & in1 & ok0 & ok1
    return m0, m1, keep, ess0 + ess1, bw_used


def clar_binary(data: DataSet, x, config: SmootherConfig | None = None) -> Estimate:
    """Binary CLAR at x: difference of within-arm local fits of Y on X."""
    data = data.public()
    config = config or SmootherConfig()
    point = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    m0, m1, keep, ess, bw = _arm_means(data, point, config)
    if not keep[0]:
        raise OverlapError(
            "an arm has no local effective sample at x", density=0.0)
    return Estimate(value=float(m1[0] - m0[0]), estimator_id="clar_binary",
                    eval_point=(float("nan"), *point[0]),
                    n_effective=float(ess[0]), bandwidths=tuple(bw))


def lar_binary(data: DataSet, d: float,
               config: SmootherConfig | None = None) -> Estimate:
    """Binary LAR at arm d: arm-difference fits averaged over the
    empirical X distribution of observations with D = d."""
    data = data.public()
    config = config or SmootherConfig()
    _check_binary(data)
    if d not in (0.0, 1.0):
        raise ConfigurationError("lar_binary requires d in {0, 1}")
    rows = data.d == float(d)
    if not rows.any():
        raise OverlapError(f"no observations with D = {int(d)}", density=0.0)
    points = data.x[rows]
    m0, m1, keep, ess, bw = _arm_means(data, points, config)
    if not keep.any():
        raise SupportError("all candidate evaluation points trimmed")
    value = float(np.mean(m1[keep] - m0[keep]))
    return Estimate(value=value, estimator_id="lar_binary",
                    eval_point=(float(d),), n_effective=float(ess[keep].sum()),
                    trimmed_fraction=1.0 - keep.sum() / keep.size,
                    bandwidths=tuple(bw))


# --- triangular-model estimators --------------------------------------


def construct_control_variable(data: DataSet,
                               config: SmootherConfig | None = None,
                               d_bandwidth: float | None = None
                               ) -> ControlVariableColumn:
    """Row-wise control variable V_i = smoothed conditional CDF of D_i
    given (Z_i, X_i)."""
    data = data.public()
    config = config or SmootherConfig()
    if data.z is None:
        raise ConfigurationError(
            "construct_control_variable requires an instrument column")
    cond = np.column_stack([data.z, data.x])
    bw = config.resolve_bandwidths(cond)
    if d_bandwidth is None:
        d_bandwidth = float(rule_of_thumb(data.d[:, None])[0]
                            * config.bandwidth_scale)
    v, ess = smoothed_cdf_rows(data.d, cond,
                               config.with_bandwidths(bw), d_bandwidth)
    dens = ess / (data.n * np.prod(bw))
    floor = _resolve_floor(config, dens)
    return ControlVariableColumn(v=v, trimmed=dens < floor,
                                 bandwidths=tuple(bw),
                                 d_bandwidth=float(d_bandwidth))


def _triangular_cols(data: DataSet, v_col: ControlVariableColumn) -> np.ndarray:
    v = np.asarray(v_col.v, dtype=float)
    if v.shape[0] != data.n:
        raise ConfigurationError("control column length mismatch")
    return np.column_stack([data.d, data.x, v])


def clar_triangular(data: DataSet, v_col: ControlVariableColumn, d: float, x,
                    config: SmootherConfig | None = None) -> Estimate:
    """CLAR at (d, x) in the triangular model: derivatives of the local
    fit of Y on (D, X, V), averaged over V-values of observations with
    (D, X) near (d, x)."""
    data = data.public()
    config = config or SmootherConfig()
    if config.degree < 1:
        raise ConfigurationError("clar_triangular needs degree >= 1")
    cols = _triangular_cols(data, v_col)
    bw = config.resolve_bandwidths(cols)
    xp = np.atleast_1d(np.asarray(x, dtype=float))
    u = (data.d - d) / bw[0]
    w = _outer_weights(u, config.kernel)
    for j in range(data.k):
        w = w * _outer_weights((data.x[:, j] - xp[j]) / bw[1 + j], config.kernel)
    w[v_col.trimmed] = 0.0
    cand = np.flatnonzero(w > 0)
    if cand.size == 0:
        raise SupportError(f"no observations with (D, X) near ({d}, {x})",
                           density=0.0)
    points = np.column_stack([
        np.full(cand.size, float(d)),
        np.tile(xp, (cand.size, 1)),
        cols[cand, -1]])
    return _averaged_derivative(data, points, w[cand], cols, bw, config,
                                "clar_triangular", (float(d), *xp))


def lar_triangular(data: DataSet, v_col: ControlVariableColumn, d: float,
                   config: SmootherConfig | None = None) -> Estimate:
    """LAR at d in the triangular model: derivatives at (d, X_i, V_i)
    averaged over observations with D near d."""
    data = data.public()
    config = config or SmootherConfig()
    if config.degree < 1:
        raise ConfigurationError("lar_triangular needs degree >= 1")
    cols = _triangular_cols(data, v_col)
    bw = config.resolve_bandwidths(cols)
    w = _outer_weights((data.d - d) / bw[0], config.kernel)
    w[v_col.trimmed] = 0.0
    cand = np.flatnonzero(w > 0)
    if cand.size == 0:
        raise SupportError(f"no observations with D near {d}", density=0.0)
    points = np.column_stack([
        np.full(cand.size, float(d)), data.x[cand], cols[cand, -1]])
    return _averaged_derivative(data, points, w[cand], cols, bw, config,
                                "lar_triangular", (float(d),))


# --- counterfactual means, ATT, ATE -----------------------------------


def counterfactual_mean(data: DataSet, d: float, d_tilde: float,
                        config: SmootherConfig | None = None,
                        mode: str = "conditional_independence",
                        v_col: ControlVariableColumn | None = None) -> Estimate:
    """Estimate of E[Y(d) | D = d_tilde]: local fits of E[Y | D=d, X
    (, V)] averaged over the covariate distribution of observations with
    D near d_tilde."""
    data = data.public()
    config = config or SmootherConfig()
    if mode == "triangular":
        if v_col is None:
            raise ConfigurationError("triangular mode requires v_col")
        cols = _triangular_cols(data, v_col)
    elif mode == "conditional_independence":
        cols = _dx_cols(data)
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    bw = config.resolve_bandwidths(cols)
    binary = np.all(np.isin(np.unique(data.d), (0.0, 1.0)))
    if binary:
        sel = data.d == float(d_tilde)
        if not sel.any():
            raise OverlapError(f"no observations with D = {d_tilde}")
        w = np.ones(int(sel.sum()))
        cand = np.flatnonzero(sel)
    else:
        wfull = _outer_weights((data.d - d_tilde) / bw[0], config.kernel)
        cand = np.flatnonzero(wfull > 0)
        if cand.size == 0:
            raise SupportError(f"no observations with D near {d_tilde}")
        w = wfull[cand]
    points = np.column_stack(
        [np.full(cand.size, float(d)), cols[cand][:, 1:]])
    mean, _, ess, dens, ok = batch_fit(data.y, cols, points, config, bw)
    floor = _resolve_floor(config, dens)
    keep = ok & (dens >= floor)
    if not keep.any():
        raise SupportError(
            "support overlap failure: all counterfactual points trimmed",
            density=float(np.nanmax(dens, initial=0.0)))
    value = float(w[keep] @ mean[keep] / w[keep].sum())
    return Estimate(value=value, estimator_id="counterfactual_mean",
                    eval_point=(float(d), float(d_tilde)),
                    n_effective=float(ess[keep].sum()),
                    trimmed_fraction=1.0 - keep.sum() / keep.size,
                    bandwidths=tuple(bw))


def _grid_derivative(data: DataSet, d: float, weights_mode: str,
                     config: SmootherConfig, mode: str,
                     v_col, estimator_id: str, d_tilde: float | None,
                     n_grid: int) -> Estimate:
    """Continuous-treatment ATT/ATE: local-linear slope, at d, of the
    counterfactual mean evaluated on a grid spanning the central 90% of D."""
    lo, hi = np.quantile(data.d, [0.05, 0.95])
    grid = np.linspace(lo, hi, n_grid)
    h_d = config.resolve_bandwidths(_dx_cols(data))[0]
    vals, trims, ness = [], [], []
    for s in grid:
        if weights_mode == "att":
            # vary the counterfactual level s at fixed treated group
            # d_tilde; the slope at s = d is the ATT derivative
            cm = counterfactual_mean(data, float(s), float(d_tilde), config,
                                     mode, v_col)
        else:
            cm = _full_population_mean(data, float(s), config, mode, v_col)
        vals.append(cm.value)
        trims.append(cm.trimmed_fraction)
        ness.append(cm.n_effective)
    vals = np.asarray(vals)
    w = _outer_weights((grid - d) / h_d, config.kernel)
    if w.sum() <= 0:
        w = np.ones_like(grid)
    a = np.column_stack([np.ones_like(grid), grid - d])
    coef, _ = _solve_ls(np.sqrt(w)[:, None] * a, np.sqrt(w) * vals)
    return Estimate(value=float(coef[1]), estimator_id=estimator_id,
                    eval_point=(float(d),),
                    n_effective=float(np.mean(ness)),
                    trimmed_fraction=float(np.mean(trims)),
                    bandwidths=(float(h_d),))


def _full_population_mean(data: DataSet, d: float, config: SmootherConfig,
                          mode: str, v_col) -> Estimate:
    cols = _triangular_cols(data, v_col) if mode == "triangular" \
        else _dx_cols(data)
    bw = config.resolve_bandwidths(cols)
    points = np.column_stack([np.full(data.n, float(d)), cols[:, 1:]])
    mean, _, ess, dens, ok = batch_fit(data.y, cols, points, config, bw)
    floor = _resolve_floor(config, dens)
    keep = ok & (dens >= floor)
    if not keep.any():
        raise SupportError("full-support condition fails everywhere",
                           density=float(np.nanmax(dens, initial=0.0)))
    return Estimate(value=float(mean[keep].mean()),
                    estimator_id="population_mean", eval_point=(float(d),),
                    n_effective=float(ess[keep].sum()),
                    trimmed_fraction=1.0 - keep.sum() / keep.size,
                    bandwidths=tuple(bw))


def att(data: DataSet, d: float | None = None, d_tilde: float | None = None,
        config: SmootherConfig | None = None,
        mode: str = "conditional_independence",
        v_col: ControlVariableColumn | None = None,
        n_grid: int = 21) -> Estimate:
    """Average treatment effect on the treated.

    Binary D: E[Y(1) - Y(0) | D = 1] via arm-specific fits averaged over
    X | D = 1 (identical to lar_binary at d = 1).  Continuous D: the
    derivative at d of the counterfactual mean with d_tilde = d, taken by
    a kernel-weighted linear fit over a grid of treatment levels.
    """
    data = data.public()
    config = config or SmootherConfig()
    binary = data.n > 0 and np.all(np.isin(np.unique(data.d), (0.0, 1.0)))
    if binary:
        est = lar_binary(data, 1.0, config)
        return replace(est, estimator_id="att")
    if d is None:
        raise ConfigurationError("continuous ATT requires a treatment level d")
    if d_tilde is None:
        d_tilde = d
    return _grid_derivative(data, d, "att", config, mode, v_col, "att",
                            float(d_tilde), n_grid)


def ate(data: DataSet, d: float | None = None,
        config: SmootherConfig | None = None,
        mode: str = "conditional_independence",
        v_col: ControlVariableColumn | None = None,
        n_grid: int = 21) -> Estimate:
    """Average treatment effect: binary D averages the arm difference over
    the full covariate distribution; continuous D differentiates the
    population counterfactual mean at d."""
    data = data.public()
    config = config or SmootherConfig()
    binary = data.n > 0 and np.all(np.isin(np.unique(data.d), (0.0, 1.0)))
    if binary:
        points = data.x
        m0, m1, keep, ess, bw = _arm_means(data, points, config)
        if not keep.any():
            raise SupportError("all evaluation points trimmed")
        return Estimate(value=float(np.mean(m1[keep] - m0[keep])),
                        estimator_id="ate",
                        n_effective=float(ess[keep].sum()),
                        trimmed_fraction=1.0 - keep.sum() / keep.size,
                        bandwidths=tuple(bw))
    if d is None:
        raise ConfigurationError("continuous ATE requires a treatment level d")
    return _grid_derivative(data, d, "ate", config, mode, v_col, "ate",
                            None, n_grid)


# --- bootstrap ---------------------------------------------------------


def bootstrap_se(estimator, data: DataSet, b: int = 200, seed=0,
                 max_failure_fraction: float = 0.10) -> float:
    """Nonparametric pairs-bootstrap standard error of a scalar-valued
    estimator closure over resampled rows.  Deterministic given seed."""
    if b < 50:
        raise ValueError("bootstrap requires B >= 50 replicates")
    data = data.public()
    rng = np.random.default_rng(seed)
    values = []
    failures = 0
    for _ in range(b):
        idx = rng.integers(0, data.n, size=data.n)
        try:
            values.append(float(estimator(data.subset(idx))))
        except EndoctrlError:
            failures += 1
    if failures > max_failure_fraction * b:
        raise InstabilityError(
            f"estimator failed in {failures}/{b} bootstrap replicates")
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
