"""Nonparametric treatment-effect estimation with potentially endogenous
control variables, plus the Monte Carlo machinery to validate every
estimator against ground-truth oracles.
"""

from ._backend import BACKEND
from .dgp import DataSet, ModelSpec, list_dgps, make_spec, sample
from .smoothers import SmootherConfig
from .harness import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DataSet",
    "ExperimentConfig",
    "ModelSpec",
    "SmootherConfig",
    "list_dgps",
    "make_spec",
    "run_experiment",
    "sample",
    "__version__",
]
