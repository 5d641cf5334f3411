"""Declarative Monte Carlo experiment runner.

An experiment binds a registered DGP, a replication plan, a set of
estimator tasks and diagnostics into a seeded study.  Replicate r draws
its RNG stream from (master_seed, r) only, so results are independent of
execution order and worker count; aggregation merges per-replicate
records sorted by replicate index.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import diagnostics as diag_mod
from . import dgp as dgp_mod
from . import estimators as est_mod
from .errors import ConfigurationError, EndoctrlError, ExperimentError
from .smoothers import SmootherConfig

_TRIANGULAR_IDS = {"clar_triangular", "lar_triangular"}


@dataclass(frozen=True)
class EstimatorTask:
    id: str
    eval: dict = field(default_factory=dict)
    smoother: dict = field(default_factory=dict)
    mode: str = "conditional_independence"

    def config(self) -> SmootherConfig:
        kw = dict(self.smoother)
        if "bandwidths" in kw and kw["bandwidths"] is not None:
            kw["bandwidths"] = tuple(kw["bandwidths"])
        return SmootherConfig(**kw)

    def needs_control_variable(self) -> bool:
        return self.id in _TRIANGULAR_IDS or self.mode == "triangular"

    def label(self) -> str:
        pts = ",".join(f"{k}={v}" for k, v in sorted(self.eval.items()))
        return f"{self.id}({pts})" if pts else self.id


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dgp_name: str
    n: int
    reps: int
    master_seed: int
    estimators: tuple
    dgp_overrides: dict = field(default_factory=dict)
    diagnostics: tuple = ()
    oracle_draws: int = 1_000_000
    oracle_seed: int = 12345
    control_variable: dict = field(default_factory=dict)
    workers: int = 1
    version: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.n < 0:
            raise ConfigurationError("n must be nonnegative")
        known = set(ESTIMATOR_REGISTRY)
        for task in self.estimators:
            if task.id not in known:
                raise ConfigurationError(
                    f"unknown estimator id {task.id!r}; known: "
                    f"{', '.join(sorted(known))}")

    def spec(self) -> dgp_mod.ModelSpec:
        return dgp_mod.make_spec(self.dgp_name, self.dgp_overrides)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigurationError("config root must be a mapping")
        dgp_block = raw.get("dgp")
        if not isinstance(dgp_block, dict) or "name" not in dgp_block:
            raise ConfigurationError("config needs a dgp: {name: ...} block")
        tasks = []
        for i, block in enumerate(raw.get("estimators", []) or []):
            if not isinstance(block, dict) or "id" not in block:
                raise ConfigurationError(
                    f"estimators[{i}] must be a mapping with an 'id'")
            tasks.append(EstimatorTask(
                id=block["id"], eval=block.get("eval", {}) or {},
                smoother=block.get("smoother", {}) or {},
                mode=block.get("mode", "conditional_independence")))
        try:
            return cls(
                name=raw.get("name", "experiment"),
                dgp_name=dgp_block["name"],
                dgp_overrides=dgp_block.get("overrides", {}) or {},
                n=int(raw["n"]), reps=int(raw["reps"]),
                master_seed=int(raw["master_seed"]),
                estimators=tuple(tasks),
                diagnostics=tuple(raw.get("diagnostics", []) or []),
                oracle_draws=int(raw.get("oracle_draws", 1_000_000)),
                oracle_seed=int(raw.get("oracle_seed", 12345)),
                control_variable=raw.get("control_variable", {}) or {},
                workers=int(raw.get("workers",
                                    os.environ.get("ENDOCTRL_WORKERS", 1))),
                version=int(raw.get("version", 1)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" at line {mark.line + 1}" if mark else ""
            raise ConfigurationError(f"malformed config {path}{where}: {exc}")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}")
        return cls.from_dict(raw)


# --- estimator registry -----------------------------------------------


def _x_point(task, data):
    if "x" in task.eval:
        return task.eval["x"]
    return float(np.median(data.x[:, 0]))


def _run_ols(data, task, config, ctx):
    return est_mod.ols_fit(data)[task.eval.get("coefficient", "d")]


def _run_tsls(data, task, config, ctx):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", est_mod.WeakInstrumentWarning)
        return est_mod.tsls_fit(data)[task.eval.get("coefficient", "d")]


def _run_iv_ratio(data, task, config, ctx):
    return est_mod.iv_ratio(data, task.eval.get("z", 0.0),
                            _x_point(task, data), config)


def _run_clar_continuous(data, task, config, ctx):
    return est_mod.clar_continuous(data, task.eval.get("d", 0.0),
                                   _x_point(task, data), config)


def _run_lar_continuous(data, task, config, ctx):
    return est_mod.lar_continuous(data, task.eval.get("d", 0.0), config)


def _run_clar_binary(data, task, config, ctx):
    return est_mod.clar_binary(data, _x_point(task, data), config)


def _run_lar_binary(data, task, config, ctx):
    return est_mod.lar_binary(data, task.eval.get("d", 1.0), config)


def _run_clar_triangular(data, task, config, ctx):
    return est_mod.clar_triangular(data, ctx["v_col"],
                                   task.eval.get("d", 0.0),
                                   _x_point(task, data), config)


def _run_lar_triangular(data, task, config, ctx):
    return est_mod.lar_triangular(data, ctx["v_col"],
                                  task.eval.get("d", 0.0), config)


def _run_att(data, task, config, ctx):
    return est_mod.att(data, d=task.eval.get("d"),
                       d_tilde=task.eval.get("d_tilde"), config=config,
                       mode=task.mode, v_col=ctx.get("v_col"))


def _run_ate(data, task, config, ctx):
    return est_mod.ate(data, d=task.eval.get("d"), config=config,
                       mode=task.mode, v_col=ctx.get("v_col"))


ESTIMATOR_REGISTRY = {
    "ols": _run_ols,
    "tsls": _run_tsls,
    "iv_ratio": _run_iv_ratio,
    "clar_continuous": _run_clar_continuous,
    "lar_continuous": _run_lar_continuous,
    "clar_binary": _run_clar_binary,
    "lar_binary": _run_lar_binary,
    "clar_triangular": _run_clar_triangular,
    "lar_triangular": _run_lar_triangular,
    "att": _run_att,
    "ate": _run_ate,
}

DIAGNOSTIC_NAMES = ("separability", "support_overlap", "cv_uniformity")


def list_estimators() -> list[str]:
    return sorted(ESTIMATOR_REGISTRY)


# --- oracle resolution ------------------------------------------------


def oracle_for(spec: dgp_mod.ModelSpec, task: EstimatorTask,
               mc_draws: int, seed) -> dgp_mod.OracleValue | None:
    """Ground-truth target for one estimator task, or None when the task
    has no scalar structural target (e.g. the biased baselines still
    target tau so their bias is visible)."""
    kind = spec.treatment_kind
    if task.id in ("ols", "tsls", "iv_ratio") or (
            task.id in ("clar_triangular", "lar_triangular") and
            spec.true_tau is not None):
        return None if spec.true_tau is None \
            else dgp_mod.OracleValue(spec.true_tau)
    if kind == "continuous":
        if task.id in ("clar_continuous", "clar_triangular"):
            d = task.eval.get("d", 0.0)
            x = task.eval.get("x", 0.0)
            return dgp_mod.true_clar(spec, d, x, mc_draws=mc_draws, seed=seed)
        if task.id in ("lar_continuous", "lar_triangular", "att", "ate"):
            if task.id in ("att", "ate") and spec.true_tau is not None:
                return dgp_mod.OracleValue(spec.true_tau)
            d = task.eval.get("d", 0.0)
            return dgp_mod.true_lar(spec, d, mc_draws=mc_draws, seed=seed)
        return None
    effects = dgp_mod.true_binary_effects(spec, mc_draws=mc_draws, seed=seed)
    if task.id == "clar_binary":
        return effects.clar(task.eval.get("d", 1.0), task.eval.get("x", 0.0))
    if task.id == "lar_binary":
        return effects.lar(task.eval.get("d", 1.0))
    if task.id == "att":
        return effects.att()
    if task.id == "ate":
        return effects.ate()
    return None


# --- replication ------------------------------------------------------


def _replicate_seed(master_seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(rep,))


def _run_replicate(config: ExperimentConfig, rep: int) -> dict:
    spec = config.spec()
    data = dgp_mod.sample(spec, config.n, _replicate_seed(config.master_seed, rep))
    public = data.public()
    ctx = {}
    need_v = any(t.needs_control_variable() for t in config.estimators) \
        or "cv_uniformity" in config.diagnostics
    if need_v and public.z is not None:
        cv_kw = dict(config.control_variable)
        d_bw = cv_kw.pop("d_bandwidth", None)
        ctx["v_col"] = est_mod.construct_control_variable(
            public, SmootherConfig(**cv_kw) if cv_kw else None,
            d_bandwidth=d_bw)
    results = []
    for task in config.estimators:
        try:
            out = ESTIMATOR_REGISTRY[task.id](public, task, task.config(), ctx)
            value = out.value if isinstance(out, est_mod.Estimate) else float(out)
            trimmed = out.trimmed_fraction \
                if isinstance(out, est_mod.Estimate) else 0.0
            results.append({"value": value, "trimmed": trimmed, "error": None})
        except EndoctrlError as exc:
            results.append({"value": None, "trimmed": None,
                            "error": f"{type(exc).__name__}: {exc}"})
    diags = []
    for name in config.diagnostics:
        dname, kwargs = (name, {}) if isinstance(name, str) \
            else (name["name"], {k: v for k, v in name.items() if k != "name"})
        try:
            if dname == "separability":
                rep_out = diag_mod.separability_check(public, **kwargs)
            elif dname == "support_overlap":
                rep_out = diag_mod.support_overlap(
                    public, kwargs.pop("d", 1.0), kwargs.pop("d_tilde", 0.0),
                    **kwargs)
            elif dname == "cv_uniformity":
                if "v_col" not in ctx:
                    raise ConfigurationError(
                        "cv_uniformity needs an instrument column")
                rep_out = diag_mod.cv_uniformity(ctx["v_col"].v, **kwargs)
            else:
                raise ConfigurationError(f"unknown diagnostic {dname!r}")
            diags.append({"name": rep_out.name, "statistic": rep_out.statistic,
                          "verdict": rep_out.verdict})
        except EndoctrlError as exc:
            diags.append({"name": dname, "statistic": None,
                          "verdict": "error",
                          "details": f"{type(exc).__name__}: {exc}"})
    return {"rep": rep, "estimates": results, "diagnostics": diags}


def _replicate_star(args):
    return _run_replicate(*args)


# --- aggregation ------------------------------------------------------


@dataclass(frozen=True)
class TaskSummary:
    estimator_id: str
    label: str
    eval_d: float | None
    eval_x: float | None
    oracle: float | None
    oracle_se: float | None
    oracle_method: str | None
    mean: float | None
    bias: float | None
    sd: float | None
    rmse: float | None
    trimmed_frac: float | None
    failures: int
    successes: int


@dataclass(frozen=True)
class ExperimentSummary:
    name: str
    dgp_name: str
    n: int
    reps: int
    master_seed: int
    tasks: tuple
    diagnostics: tuple
    wall_time: float = 0.0  # informational only; excluded from exports

    def to_dict(self) -> dict:
        out = {"name": self.name, "dgp_name": self.dgp_name, "n": self.n,
               "reps": self.reps, "master_seed": self.master_seed,
               "tasks": [asdict(t) for t in self.tasks],
               "diagnostics": [dict(d) for d in self.diagnostics]}
        return out


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    """Execute the replication plan and aggregate bias/SD/RMSE per task
    against the once-computed oracle values."""
    t0 = time.perf_counter()
    spec = config.spec()
    oracles = [oracle_for(spec, task, config.oracle_draws, config.oracle_seed)
               for task in config.estimators]
    reps = range(config.reps)
    if config.workers > 1 and config.reps > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_replicate_star,
                                    [(config, r) for r in reps],
                                    chunksize=max(1, config.reps // (4 * config.workers))))
    else:
        records = [_run_replicate(config, r) for r in reps]
    records.sort(key=lambda r: r["rep"])

    tasks = []
    for j, task in enumerate(config.estimators):
        vals = [r["estimates"][j]["value"] for r in records]
        good = np.asarray([v for v in vals if v is not None], dtype=float)
        failures = sum(v is None for v in vals)
        if failures > 0.5 * config.reps:
            raise ExperimentError(
                f"estimator {task.label()} failed in {failures}/{config.reps} "
                f"replicates")
        trims = [r["estimates"][j]["trimmed"] for r in records
                 if r["estimates"][j]["trimmed"] is not None]
        oracle = oracles[j]
        mean = float(good.mean()) if good.size else None
        sd = float(good.std(ddof=0)) if good.size else None
        bias = None if (mean is None or oracle is None) \
            else mean - oracle.value
        rmse = None if (bias is None or sd is None) \
            else float(np.hypot(bias, sd))
        tasks.append(TaskSummary(
            estimator_id=task.id, label=task.label(),
            eval_d=task.eval.get("d"), eval_x=task.eval.get("x"),
            oracle=None if oracle is None else oracle.value,
            oracle_se=None if oracle is None else oracle.mc_se,
            oracle_method=None if oracle is None else oracle.method,
            mean=mean, bias=bias, sd=sd, rmse=rmse,
            trimmed_frac=float(np.mean(trims)) if trims else None,
            failures=failures, successes=len(good)))

    diag_summaries = []
    for j, name in enumerate(config.diagnostics):
        stats = [r["diagnostics"][j]["statistic"] for r in records]
        good = np.asarray([s for s in stats if s is not None], dtype=float)
        verdicts = [r["diagnostics"][j]["verdict"] for r in records]
        dname = name if isinstance(name, str) else name["name"]
        diag_summaries.append({
            "name": dname,
            "median_statistic": float(np.median(good)) if good.size else None,
            "pass_fraction": float(np.mean([v == "pass" for v in verdicts])),
            "errors": int(sum(v == "error" for v in verdicts))})

    return ExperimentSummary(
        name=config.name, dgp_name=config.dgp_name, n=config.n,
        reps=config.reps, master_seed=config.master_seed,
        tasks=tuple(tasks), diagnostics=tuple(diag_summaries),
        wall_time=time.perf_counter() - t0)


# --- export -----------------------------------------------------------

CSV_HEADER = ("estimator_id,eval_d,eval_x,oracle,mean,bias,sd,rmse,"
              "trimmed_frac,failures")


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{float(v):.17g}"


def export(summary: ExperimentSummary, fmt: str, path) -> None:
    """Write the summary in a schema-stable format.  Output depends only
    on the aggregate results, so identical experiments export
    byte-identical files."""
    if fmt == "csv":
        lines = [CSV_HEADER]
        for t in summary.tasks:
            lines.append(",".join([
                t.estimator_id, _fmt(t.eval_d), _fmt(t.eval_x),
                _fmt(t.oracle), _fmt(t.mean), _fmt(t.bias), _fmt(t.sd),
                _fmt(t.rmse), _fmt(t.trimmed_frac), str(t.failures)]))
        payload = "\n".join(lines) + "\n"
    elif fmt == "json":
        payload = canonical_json(summary.to_dict())
    else:
        raise ConfigurationError(f"unknown export format {fmt!r}")
    try:
        with open(path, "w") as fh:
            fh.write(payload)
    except OSError as exc:
        raise ExperimentError(f"cannot write {path}: {exc}") from exc


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"),
                      allow_nan=True) + "\n"
