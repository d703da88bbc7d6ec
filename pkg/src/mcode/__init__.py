"""Multi-label outlier detection with dependency-aware label models."""

from .dataset import Dataset, load_arff, load_csv, load_dataset, save_arff, save_csv
from .dbr import DbrModel, compute_rho, pseudo_likelihood, train_dbr
from .errors import (
    ArgumentError,
    ConvergenceError,
    MCODEError,
    NumericError,
    ParseError,
    UndefinedMetricError,
    ValidationError,
)
from .injector import InjectionReport, inject_instance_noise, inject_variable_noise

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConvergenceError",
    "Dataset",
    "DbrModel",
    "InjectionReport",
    "MCODEError",
    "NumericError",
    "ParseError",
    "UndefinedMetricError",
    "ValidationError",
    "compute_rho",
    "inject_instance_noise",
    "inject_variable_noise",
    "load_arff",
    "load_csv",
    "load_dataset",
    "pseudo_likelihood",
    "save_arff",
    "save_csv",
    "train_dbr",
]
