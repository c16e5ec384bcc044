"""Tabular density estimation and synthesis with adversarial random forests."""

from .tabular import (
    Column,
    Schema,
    Dataset,
    infer_schema,
    load_csv,
    save_csv,
    load_schema,
    save_schema,
    split_train_test,
)
from .forest import ForestConfig, Forest, fit_forest, oob_accuracy
from .arf import ArfConfig, ArfModel, arf_fit
from .forde import FordeFitConfig, FordeModel, forde_fit, log_density, nll
from .forge import forge_sample, conditional_sample
from .persist import save_model, load_model

__version__ = "0.1.0"

__all__ = [
    "Column",
    "Schema",
    "Dataset",
    "infer_schema",
    "load_csv",
    "save_csv",
    "load_schema",
    "save_schema",
    "split_train_test",
    "ForestConfig",
    "Forest",
    "fit_forest",
    "oob_accuracy",
    "ArfConfig",
    "ArfModel",
    "arf_fit",
    "FordeFitConfig",
    "FordeModel",
    "forde_fit",
    "log_density",
    "nll",
    "forge_sample",
    "conditional_sample",
    "save_model",
    "load_model",
    "__version__",
]
