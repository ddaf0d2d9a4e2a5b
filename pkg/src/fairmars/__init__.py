"""Fairness-aware multivariate adaptive regression splines."""

from .backward import gcv, run_backward
from .basis import BasisFunction, HingeTerm, design_matrix, eval_basis, eval_hinge
from .dataset import Dataset, FoldPlan, load_csv, make_folds
from .errors import (ConfigError, DataError, FairMarsError, InputError, ModelFormatError,
                     ParseError, PreconditionError, RankDeficiencyError)
from .evaluation import cross_validate, lambda_sweep, metrics, select_lambda
from .fairness import DisparityReport, disparity, subgroup_weights
from .forward import ForwardConfig, run_forward
from .model import FairMarsModel, export_rules, fit, fit_faircoef, load, predict, save

__version__ = "0.1.0"

__all__ = [
    "BasisFunction", "ConfigError", "DataError", "Dataset", "DisparityReport",
    "FairMarsError", "FairMarsModel", "FoldPlan", "ForwardConfig", "HingeTerm",
    "InputError", "ModelFormatError", "ParseError", "PreconditionError",
    "RankDeficiencyError", "cross_validate", "design_matrix", "disparity", "eval_basis",
    "eval_hinge", "export_rules", "fit", "fit_faircoef", "gcv", "lambda_sweep", "load",
    "load_csv", "make_folds", "metrics", "predict", "run_backward", "run_forward", "save",
    "select_lambda", "subgroup_weights",
]
