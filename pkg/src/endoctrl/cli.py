"""Command line interface.

Exit codes: 0 success, 1 configuration error (bad config file, unknown
subcommand), 2 runtime error during execution.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics as diag_mod
from . import dgp as dgp_mod
from . import estimators as est_mod
from .errors import ConfigurationError, EndoctrlError
from .harness import (
    ExperimentConfig,
    export,
    list_estimators,
    oracle_for,
    run_experiment,
)


def _resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    shipped = resources.files("endoctrl").joinpath("configs", f"{arg}.yaml")
    if shipped.is_file():
        return Path(str(shipped))
    raise ConfigurationError(f"config {arg!r} not found (no such file and "
                             f"no shipped config of that name)")


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_yaml(_resolve_config(args.config))
    if args.workers is not None:
        config = dataclasses.replace(config, workers=args.workers)
    summary = run_experiment(config)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    export(summary, "csv", outdir / f"{summary.name}.csv")
    export(summary, "json", outdir / f"{summary.name}.json")
    print(f"experiment {summary.name}: dgp={summary.dgp_name} "
          f"n={summary.n} reps={summary.reps} "
          f"wall_time={summary.wall_time:.1f}s")
    for t in summary.tasks:
        oracle = "n/a" if t.oracle is None else f"{t.oracle:.4g}"
        bias = "n/a" if t.bias is None else f"{t.bias:+.4g}"
        print(f"  {t.label:40s} oracle={oracle:>8s} mean={t.mean:.4g} "
              f"bias={bias} sd={t.sd:.4g} failures={t.failures}")
    for d in summary.diagnostics:
        print(f"  diag {d['name']:20s} median_stat="
              f"{d['median_statistic']:.4g} pass={d['pass_fraction']:.0%}")
    print(f"wrote {outdir / (summary.name + '.csv')} and .json")
    return 0


def _cmd_oracle(args) -> int:
    config = ExperimentConfig.from_yaml(_resolve_config(args.config))
    spec = config.spec()
    print(f"dgp={spec.name} treatment={spec.treatment_kind} "
          f"true_tau={spec.true_tau}")
    for task in config.estimators:
        oracle = oracle_for(spec, task, config.oracle_draws, config.oracle_seed)
        if oracle is None:
            print(f"  {task.label():40s} oracle: n/a")
        else:
            se = "" if oracle.mc_se == 0 else f" +- {oracle.mc_se:.2g} (MC)"
            print(f"  {task.label():40s} oracle: {oracle.value:.6g}{se} "
                  f"[{oracle.method}]")
    return 0


def _parse_mapping(text: str) -> dict:
    mapping = {}
    for part in text.split(","):
        if "=" not in part:
            raise ConfigurationError(f"bad --map entry {part!r}; use role=col")
        role, col = part.split("=", 1)
        if role == "x":
            mapping["x"] = col.split("+")
        else:
            mapping[role] = col
    return mapping


def _cmd_diagnose(args) -> int:
    mapping = _parse_mapping(args.map) if args.map else None
    data = dgp_mod.DataSet.from_csv(args.csv, mapping)
    print(f"loaded {data.n} rows, {data.k} control column(s), "
          f"instrument={'yes' if data.has_instrument else 'no'}")
    binary = np.all(np.isin(np.unique(data.d), (0.0, 1.0)))

    print(str(diag_mod.separability_check(data)))
    fit = est_mod.ols_fit(data)
    coefs = " ".join(f"{n}={c:.4g}(se {s:.2g})"
                     for n, c, s in zip(fit.names, fit.coef, fit.se))
    print(f"ols: {coefs}")
    if data.has_instrument:
        tfit = est_mod.tsls_fit(data)
        print(f"tsls: d={tfit.tau:.4g} (first-stage F={tfit.first_stage_f:.1f})")
        v_col = est_mod.construct_control_variable(data)
        print(str(diag_mod.cv_uniformity(v_col.v)))
    if binary:
        print(str(diag_mod.support_overlap(data, 1.0, 0.0)))
        estimate = est_mod.att(data)
        print(f"att (binary): {estimate.value:.4g} "
              f"trimmed={estimate.trimmed_fraction:.2%}")
    else:
        d0 = float(np.median(data.d))
        x0 = float(np.median(data.x[:, 0]))
        estimate = est_mod.clar_continuous(data, d0, x0)
        print(f"clar at (median D, median X)=({d0:.3g},{x0:.3g}): "
              f"{estimate.value:.4g}")
        if data.has_instrument:
            tri = est_mod.clar_triangular(data, v_col, d0, x0)
            print(f"clar with control variable: {tri.value:.4g}")
    return 0


def _cmd_list_dgps(args) -> int:
    for name in dgp_mod.list_dgps():
        spec = dgp_mod.make_spec(name)
        print(f"{name:24s} {spec.treatment_kind:10s} "
              f"family={spec.outcome.family:11s} "
              f"instrument={'yes' if spec.errors.z_present else 'no':3s} "
              f"true_tau={spec.true_tau}")
    return 0


def _cmd_list_estimators(args) -> int:
    for name in list_estimators():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endoctrl",
        description="Treatment-effect estimation with endogenous controls: "
                    "Monte Carlo experiments, estimators, diagnostics.")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a YAML config or shipped name")
    p_run.add_argument("--output-dir", default="results")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle",
                              help="print ground-truth values for a config")
    p_oracle.add_argument("config")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_diag = sub.add_parser("diagnose",
                            help="run diagnostics and estimators on a CSV")
    p_diag.add_argument("csv")
    p_diag.add_argument("--map", default=None,
                        help="column mapping, e.g. y=wage,d=educ,x=a+b,z=qob")
    p_diag.set_defaults(func=_cmd_diagnose)

    sub.add_parser("list-dgps", help="list registered models") \
        .set_defaults(func=_cmd_list_dgps)
    sub.add_parser("list-estimators", help="list estimator ids") \
        .set_defaults(func=_cmd_list_estimators)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if not getattr(args, "func", None):
        parser.print_usage()
        return 1
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EndoctrlError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
