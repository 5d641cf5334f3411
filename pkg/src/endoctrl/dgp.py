"""Structural data generating processes and ground-truth oracles.

A ModelSpec describes a triangular structural model from an enumerated
set of outcome families, treatment assignment forms, and error
structures.  Every family admits a ground-truth target (closed form or
brute-force Monte Carlo), which is what the estimator validation layer
compares against.

Outcome families (eps denotes the structural error):
  linear       y = intercept + tau*d + beta*x + eps
  additive     y = d_scale*f(d) + x_scale*h(x) + eps
  interaction  y = (base + eps_slope*eps + x_slope*x) * d + x_scale*h(x)

Treatment assignment:
  continuous   d = pi_z*z + pi_x*x + pi_x2*(x^2 - 1) + eta,
               eta ~ N(0, eta_scale^2) (strictly monotone in eta)
  binary       d = 1{s0 + s1*x + u > 0},  u ~ N(0, 1)

Error structure:
  eps = eps_x(x) + eps_eta*eta_std + noise_sd*nu,  nu ~ N(0,1)
  where eta_std is the standardized first-stage error, so eps_eta is the
  endogeneity loading of the treatment error on the outcome error.
"""

from __future__ import annotations

import copy
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ConfigurationError,
    OracleInfeasibleError,
    SupportError,
)

_D_SHAPES = {
    "linear": (lambda d: d, lambda d: np.ones_like(d)),
    "sin": (np.sin, np.cos),
    "quadratic": (lambda d: d * d, lambda d: 2.0 * d),
}

_X_SHAPES = {
    "zero": lambda x: np.zeros_like(x),
    "linear": lambda x: x,
    "square": lambda x: x * x,
    "cube": lambda x: x ** 3,
    "centered_square": lambda x: x * x - 1.0,
}

_EPS_X_SHAPES = {
    "zero": lambda x: np.zeros_like(x),
    "linear": lambda x: x,
    "centered_square": lambda x: x * x - 1.0,
}


@dataclass(frozen=True)
class OutcomeSpec:
    family: str = "linear"
    # linear family
    intercept: float = 0.0
    tau: float = 0.0
    beta: float = 0.0
    # additive family
    d_shape: str = "linear"
    d_scale: float = 1.0
    x_shape: str = "linear"
    x_scale: float = 1.0
    # interaction family
    base: float = 0.0
    eps_slope: float = 0.0
    x_slope: float = 0.0

    def __post_init__(self):
        if self.family not in ("linear", "additive", "interaction"):
            raise ConfigurationError(f"unknown outcome family {self.family!r}")
        if self.d_shape not in _D_SHAPES:
            raise ConfigurationError(f"unknown d_shape {self.d_shape!r}")
        if self.x_shape not in _X_SHAPES:
            raise ConfigurationError(f"unknown x_shape {self.x_shape!r}")


@dataclass(frozen=True)
class TreatmentSpec:
    kind: str = "continuous"
    # continuous assignment
    pi_z: float = 0.0
    pi_x: float = 0.0
    pi_x2: float = 0.0
    eta_scale: float = 1.0
    # binary threshold
    s0: float = 0.0
    s1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("continuous", "binary"):
            raise ConfigurationError(f"unknown treatment kind {self.kind!r}")


@dataclass(frozen=True)
class ErrorSpec:
    x_dist: str = "normal"
    x_df: int = 3
    z_present: bool = False
    eps_x_shape: str = "zero"
    eps_x_scale: float = 0.0
    eps_eta: float = 0.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.x_dist not in ("normal", "chi2"):
            raise ConfigurationError(f"unknown x_dist {self.x_dist!r}")
        if self.eps_x_shape not in _EPS_X_SHAPES:
            raise ConfigurationError(f"unknown eps_x_shape {self.eps_x_shape!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Declarative structural model; see module docstring for the forms."""

    name: str
    outcome: OutcomeSpec
    treatment: TreatmentSpec
    errors: ErrorSpec

    def validate(self) -> None:
        if self.treatment.kind == "continuous" and self.treatment.eta_scale <= 0:
            raise ConfigurationError(
                "continuous treatment requires eta_scale > 0 (strict "
                "monotonicity in the assignment error)")
        if self.treatment.pi_z != 0.0 and not self.errors.z_present:
            raise ConfigurationError("pi_z != 0 but no instrument declared")

    @property
    def treatment_kind(self) -> str:
        return self.treatment.kind

    @property
    def true_tau(self) -> float | None:
        """Scalar treatment coefficient when the family admits one."""
        o = self.outcome
        if o.family == "linear":
            return o.tau
        if o.family == "additive" and o.d_shape == "linear":
            return o.d_scale
        if o.family == "interaction" and o.eps_slope == 0.0 and o.x_slope == 0.0:
            return o.base
        return None

    # --- structural functions ------------------------------------------

    def outcome_value(self, d, x, eps):
        o = self.outcome
        if o.family == "linear":
            return o.intercept + o.tau * d + o.beta * x + eps
        if o.family == "additive":
            return (o.d_scale * _D_SHAPES[o.d_shape][0](d)
                    + o.x_scale * _X_SHAPES[o.x_shape](x) + eps)
        return ((o.base + o.eps_slope * eps + o.x_slope * x) * d
                + o.x_scale * _X_SHAPES[o.x_shape](x))

    def outcome_dd(self, d, x, eps):
        """Structural partial derivative of the outcome w.r.t. treatment."""
        o = self.outcome
        if o.family == "linear":
            return np.broadcast_to(np.float64(o.tau), np.shape(d)).copy() \
                if np.ndim(d) else float(o.tau)
        if o.family == "additive":
            return o.d_scale * _D_SHAPES[o.d_shape][1](np.asarray(d, dtype=float))
        return o.base + o.eps_slope * eps + o.x_slope * x

    def outcome_binary_delta(self, x, eps):
        """m(1, x, eps) - m(0, x, eps)."""
        return self.outcome_value(np.ones_like(x), x, eps) \
            - self.outcome_value(np.zeros_like(x), x, eps)

    def eps_mean_given_x(self, x):
        return self.errors.eps_x_scale * _EPS_X_SHAPES[self.errors.eps_x_shape](
            np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"name": self.name, "outcome": asdict(self.outcome),
                "treatment": asdict(self.treatment), "errors": asdict(self.errors)}

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelSpec":
        try:
            spec = cls(
                name=payload["name"],
                outcome=OutcomeSpec(**payload.get("outcome", {})),
                treatment=TreatmentSpec(**payload.get("treatment", {})),
                errors=ErrorSpec(**payload.get("errors", {})),
            )
        except TypeError as exc:
            raise ConfigurationError(f"bad model spec: {exc}") from exc
        spec.validate()
        return spec


@dataclass(frozen=True)
class DataSet:
    """Columnar sample.  Latent columns carry the structural errors and
    are oracle-only: `public()` strips them and estimators operate on the
    public view."""

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    z: np.ndarray | None = None
    latent: dict | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        d = np.asarray(self.d, dtype=float)
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if x.shape[0] != y.shape[0] and x.shape[1] == y.shape[0]:
            x = x.T
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", x)
        if self.z is not None:
            object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        n = y.shape[0]
        cols = [y, d] + [x[:, j] for j in range(x.shape[1])]
        if self.z is not None:
            cols.append(self.z)
        if self.latent:
            cols.extend(np.asarray(v, dtype=float) for v in self.latent.values())
        for c in cols:
            if c.shape[0] != n:
                raise ConfigurationError("column length mismatch in DataSet")
            if n and not np.all(np.isfinite(c)):
                raise ConfigurationError("non-finite values in DataSet")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def has_instrument(self) -> bool:
        return self.z is not None

    def public(self) -> "DataSet":
        """View without latent columns; what estimators are allowed to see."""
        if self.latent is None:
            return self
        return DataSet(y=self.y, d=self.d, x=self.x, z=self.z, latent=None)

    def subset(self, idx) -> "DataSet":
        return DataSet(
            y=self.y[idx], d=self.d[idx], x=self.x[idx],
            z=None if self.z is None else self.z[idx],
            latent=None if self.latent is None
            else {k: np.asarray(v)[idx] for k, v in self.latent.items()})

    def to_csv(self, path) -> None:
        header = ["y", "d"] + [f"x{j + 1}" for j in range(self.k)]
        cols = [self.y, self.d] + [self.x[:, j] for j in range(self.k)]
        if self.z is not None:
            header.append("z")
            cols.append(self.z)
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        np.savetxt(buf, np.column_stack(cols) if self.n else
                   np.empty((0, len(cols))), delimiter=",", fmt="%.17g")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    @classmethod
    def from_csv(cls, path, mapping: dict | None = None) -> "DataSet":
        import csv as _csv

        with open(path, newline="") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            rows = [list(map(float, r)) for r in reader if r]
        arr = np.asarray(rows, dtype=float) if rows else np.empty((0, len(header)))
        byname = {h: arr[:, j] for j, h in enumerate(header)}
        mapping = mapping or {}

        def col(role, default):
            name = mapping.get(role, default)
            if name is None:
                return None
            if name not in byname:
                raise ConfigurationError(f"column {name!r} not found in CSV")
            return byname[name]

        y = col("y", "y")
        d = col("d", "d")
        xnames = mapping.get("x") or [h for h in header if h.startswith("x")]
        if isinstance(xnames, str):
            xnames = xnames.split("+")
        x = np.column_stack([byname[nm] for nm in xnames])
        z = col("z", "z" if "z" in byname else None)
        return cls(y=y, d=d, x=x, z=z)


@dataclass(frozen=True)
class OracleValue:
    """Ground-truth target with its Monte Carlo standard error (zero for
    closed forms) and a provenance tag."""

    value: float
    mc_se: float = 0.0
    method: str = "closed_form"

    def __float__(self):
        return float(self.value)


def sample(spec: ModelSpec, n: int, seed) -> DataSet:
    """Draw n observations from the structural model; deterministic given
    (spec, n, seed)."""
    spec.validate()
    if n < 0:
        raise ConfigurationError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    draws = _raw_draws(spec, n, rng)
    return DataSet(
        y=draws["y"], d=draws["d"], x=draws["x"][:, None],
        z=draws["z"] if spec.errors.z_present else None,
        latent={"eps": draws["eps"], "eta": draws["eta"]})


def _raw_draws(spec: ModelSpec, n: int, rng) -> dict:
    er, tr = spec.errors, spec.treatment
    if er.x_dist == "normal":
        x = rng.standard_normal(n)
    else:
        df = er.x_df
        x = (rng.chisquare(df, n) - df) / np.sqrt(2.0 * df)
    z = rng.standard_normal(n)
    eta_std = rng.standard_normal(n)
    nu = rng.standard_normal(n)
    eps = (spec.eps_mean_given_x(x) + er.eps_eta * eta_std + er.noise_sd * nu)
    if tr.kind == "continuous":
        eta = tr.eta_scale * eta_std
        d = tr.pi_z * z + tr.pi_x * x + tr.pi_x2 * (x * x - 1.0) + eta
    else:
        eta = eta_std
        d = (tr.s0 + tr.s1 * x + eta_std > 0).astype(float)
    y = spec.outcome_value(d, x, eps)
    return {"y": y, "d": d, "x": x, "z": z, "eps": eps, "eta": eta}


def _conditional_eps_mean(spec: ModelSpec, d: float, x: float,
                          mc_draws: int, seed) -> tuple[float, float]:
    """MC estimate of E[eps | D = d, X = x] via a kernel window on D."""
    rng = np.random.default_rng(seed)
    er, tr = spec.errors, spec.treatment
    eta_std = rng.standard_normal(mc_draws)
    nu = rng.standard_normal(mc_draws)
    xv = np.full(mc_draws, float(x))
    z = rng.standard_normal(mc_draws)
    eps = spec.eps_mean_given_x(xv) + er.eps_eta * eta_std + er.noise_sd * nu
    dd = (tr.pi_z * z + tr.pi_x * xv + tr.pi_x2 * (xv * xv - 1.0)
          + tr.eta_scale * eta_std)
    delta = 0.1 * max(dd.std(), 1e-12)
    u = (dd - d) / delta
    w = np.maximum(0.0, 1.0 - u * u)
    if (w > 0).mean() < 1e-4:
        raise OracleInfeasibleError(
            f"window acceptance rate below floor at d={d}")
    mean = float(w @ eps / w.sum())
    var = float((w * w) @ (eps - mean) ** 2 / w.sum() ** 2)
    return mean, np.sqrt(var)


def true_clar(spec: ModelSpec, d: float, x: float,
              mc_draws: int = 400_000, seed=0) -> OracleValue:
    """Ground-truth conditional local average response at (d, x)."""
    if spec.treatment_kind != "continuous":
        raise ConfigurationError("true_clar requires a continuous treatment")
    o = spec.outcome
    if o.family == "linear":
        return OracleValue(o.tau)
    if o.family == "additive":
        return OracleValue(
            float(o.d_scale * _D_SHAPES[o.d_shape][1](np.float64(d))))
    # interaction: beta(d, x) = base + x_slope*x + eps_slope * E[eps|D=d,X=x]
    if spec.errors.eps_eta == 0.0:
        # Assumption-1 families: E[eps|D,X] = E[eps|X], known in closed form
        return OracleValue(float(
            o.base + o.x_slope * x
            + o.eps_slope * spec.eps_mean_given_x(np.float64(x))))
    m, se = _conditional_eps_mean(spec, d, x, mc_draws, seed)
    return OracleValue(float(o.base + o.x_slope * x + o.eps_slope * m),
                       mc_se=abs(o.eps_slope) * se, method="monte_carlo")


def true_lar(spec: ModelSpec, d: float, mc_draws: int = 1_000_000,
             seed=0) -> OracleValue:
    """Brute-force local average response at d: draws (X, eps) from the
    conditional law given D near d (kernel-reweighted window of width
    0.1 SD of D) and averages the structural derivative."""
    if spec.treatment_kind != "continuous":
        raise ConfigurationError("true_lar requires a continuous treatment")
    o = spec.outcome
    if o.family == "linear":
        return OracleValue(o.tau)
    if o.family == "additive":
        return OracleValue(
            float(o.d_scale * _D_SHAPES[o.d_shape][1](np.float64(d))))
    rng = np.random.default_rng(seed)
    draws = _raw_draws(spec, mc_draws, rng)
    dd = draws["d"]
    delta = 0.1 * max(dd.std(), 1e-12)
    u = (dd - d) / delta
    w = np.maximum(0.0, 1.0 - u * u)
    if (w > 0).mean() < 1e-4:
        raise OracleInfeasibleError(
            f"window acceptance rate below floor at d={d}")
    g = spec.outcome_dd(dd, draws["x"], draws["eps"])
    g = np.broadcast_to(np.asarray(g, dtype=float), dd.shape)
    mean = float(w @ g / w.sum())
    var = float((w * w) @ (g - mean) ** 2 / w.sum() ** 2)
    return OracleValue(mean, mc_se=np.sqrt(var), method="monte_carlo")


class BinaryEffects:
    """Ground-truth effects for a binary-treatment spec."""

    def __init__(self, spec: ModelSpec, mc_draws: int = 1_000_000, seed=0):
        if spec.treatment_kind != "binary":
            raise ConfigurationError(
                "true_binary_effects requires a binary treatment")
        self.spec = spec
        rng = np.random.default_rng(seed)
        self._draws = _raw_draws(spec, mc_draws, rng)
        self._delta = spec.outcome_binary_delta(
            self._draws["x"], self._draws["eps"])

    def _closed_form_delta(self):
        o = self.spec.outcome
        if o.family == "linear":
            return o.tau
        if o.family == "additive":
            f = _D_SHAPES[o.d_shape][0]
            return float(o.d_scale * (f(np.float64(1.0)) - f(np.float64(0.0))))
        return None

    def clar(self, d: float, x: float) -> OracleValue:
        cf = self._closed_form_delta()
        o = self.spec.outcome
        if cf is not None:
            return OracleValue(cf)
        if self.spec.errors.eps_eta == 0.0:
            return OracleValue(float(
                o.base + o.x_slope * x
                + o.eps_slope * self.spec.eps_mean_given_x(np.float64(x))))
        arm = self._draws["d"] == d
        near = arm & (np.abs(self._draws["x"] - x)
                      <= 0.1 * self._draws["x"].std())
        if near.sum() < 100:
            raise OracleInfeasibleError(f"too few draws near (d={d}, x={x})")
        vals = self._delta[near]
        return OracleValue(float(vals.mean()),
                           mc_se=float(vals.std(ddof=1) / np.sqrt(near.sum())),
                           method="monte_carlo")

    def lar(self, d: float) -> OracleValue:
        cf = self._closed_form_delta()
        if cf is not None:
            return OracleValue(cf)
        arm = self._draws["d"] == d
        if not arm.any():
            raise SupportError(f"no mass at D = {d}")
        vals = self._delta[arm]
        return OracleValue(float(vals.mean()),
                           mc_se=float(vals.std(ddof=1) / np.sqrt(arm.sum())),
                           method="monte_carlo")

    def ate(self) -> OracleValue:
        d = self._draws["d"]
        if not (d == 0).any() or not (d == 1).any():
            raise SupportError("a treatment arm has no mass; ATE undefined")
        cf = self._closed_form_delta()
        if cf is not None:
            return OracleValue(cf)
        return OracleValue(float(self._delta.mean()),
                           mc_se=float(self._delta.std(ddof=1)
                                       / np.sqrt(self._delta.size)),
                           method="monte_carlo")

    def att(self) -> OracleValue:
        return self.lar(1.0)


def true_binary_effects(spec: ModelSpec, mc_draws: int = 1_000_000,
                        seed=0) -> BinaryEffects:
    return BinaryEffects(spec, mc_draws=mc_draws, seed=seed)


# --- shipped model registry -------------------------------------------


def _linear(name, tau=2.0, beta=1.0, **kw):
    return dict(name=name,
                outcome=dict(family="linear", tau=tau, beta=beta), **kw)


_REGISTRY: dict[str, dict] = {
    # exogenous-control baseline: OLS consistent
    "linear_exog": _linear(
        "linear_exog",
        treatment=dict(kind="continuous", pi_x=0.8),
        errors=dict(noise_sd=1.0)),
    # endogenous control, bias loads on the control coefficient only
    "linear_endo_beta": _linear(
        "linear_endo_beta",
        treatment=dict(kind="continuous", pi_x=0.8),
        errors=dict(eps_x_shape="linear", eps_x_scale=0.5)),
    # endogenous control with nonlinear treatment assignment and skewed
    # control: the OLS treatment coefficient itself is inconsistent
    "linear_endo_tau": _linear(
        "linear_endo_tau",
        treatment=dict(kind="continuous", pi_x=0.8, pi_x2=0.5),
        errors=dict(x_dist="chi2", x_df=3,
                    eps_x_shape="centered_square", eps_x_scale=0.8)),
    # triangular model, exogenous control: 2SLS consistent
    "triangular_exog": _linear(
        "triangular_exog",
        treatment=dict(kind="continuous", pi_z=1.0, pi_x=0.8),
        errors=dict(z_present=True, eps_eta=0.8)),
    # triangular model with an endogenous control: 2SLS inconsistent,
    # the control-variable estimators recover tau
    "triangular_endo": _linear(
        "triangular_endo",
        treatment=dict(kind="continuous", pi_z=1.0, pi_x=0.8),
        errors=dict(z_present=True, x_dist="chi2", x_df=3,
                    eps_x_shape="centered_square", eps_x_scale=0.8,
                    eps_eta=0.8)),
    # heterogeneous-effect interaction model under conditional independence
    "interaction": dict(
        name="interaction",
        outcome=dict(family="interaction", base=1.0, eps_slope=0.5,
                     x_shape="square", x_scale=1.0),
        treatment=dict(kind="continuous", pi_x=0.5),
        errors=dict(eps_x_shape="centered_square", eps_x_scale=0.5)),
    # heterogeneous-effect triangular model
    "interaction_triangular": dict(
        name="interaction_triangular",
        outcome=dict(family="interaction", base=1.0, eps_slope=0.5,
                     x_shape="square", x_scale=1.0),
        treatment=dict(kind="continuous", pi_z=1.0, pi_x=0.8),
        errors=dict(z_present=True, eps_x_shape="centered_square",
                    eps_x_scale=0.5, eps_eta=0.8)),
    # additive nonlinear outcome
    "additive_sin": dict(
        name="additive_sin",
        outcome=dict(family="additive", d_shape="sin", x_shape="cube"),
        treatment=dict(kind="continuous", pi_x=0.8),
        errors=dict(eps_x_shape="linear", eps_x_scale=0.5)),
    # binary constant-effect model with endogenous control
    "binary_constant": _linear(
        "binary_constant", tau=1.5,
        treatment=dict(kind="binary", s1=0.5),
        errors=dict(eps_x_shape="centered_square", eps_x_scale=0.5)),
    # noiseless Y = D * X with threshold assignment on X itself
    "binary_dx": dict(
        name="binary_dx",
        outcome=dict(family="interaction", x_slope=1.0, x_shape="zero"),
        treatment=dict(kind="binary", s1=1.0),
        errors=dict(noise_sd=0.0)),
    # zero-noise linear model (exactness checks)
    "noiseless_linear": _linear(
        "noiseless_linear",
        treatment=dict(kind="continuous", pi_x=0.8),
        errors=dict(noise_sd=0.0)),
    # zero-noise linear triangular model
    "noiseless_triangular": _linear(
        "noiseless_triangular",
        treatment=dict(kind="continuous", pi_z=1.0, pi_x=0.8),
        errors=dict(z_present=True, noise_sd=0.0)),
}


def list_dgps() -> list[str]:
    return sorted(_REGISTRY)


def _deep_merge(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in (overrides or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def make_spec(name: str, overrides: dict | None = None) -> ModelSpec:
    """Instantiate a registered model, optionally deep-merging overrides
    into its declarative form."""
    if name not in _REGISTRY:
        raise ConfigurationError(
            f"unknown DGP {name!r}; known: {', '.join(list_dgps())}")
    return ModelSpec.from_dict(_deep_merge(_REGISTRY[name], overrides or {}))
