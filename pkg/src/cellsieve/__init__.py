"""Noise-filtered drug sensitivity prediction.

Training samples are scored by the angle between each expression profile and
its projection onto the smallest-eigenvalue eigenvector(s) of the squared
Manhattan distance matrix; the lowest-angle samples are kept and used to fit
ridge regression or epsilon-SVR models, which are then evaluated against binary
clinical outcomes.
"""

from .errors import CellSieveError, ConvergenceError, InputError
from .linalg import EigenDecomposition, as_matrix, eigh_symmetric, matmul
from .noise_filter import (
    FilterConfig,
    FilterReport,
    filter_training_set,
    manhattan_distance_matrix,
    project_onto_subspace,
    sample_degrees,
    select_samples,
    smallest_eigenvectors,
)
from .learners import (
    KernelSpec,
    RidgeModel,
    SvrModel,
    kernel_eval,
    predict,
    train_ridge,
    train_svr,
)
from .evaluation import (
    EvalReport,
    auc_midrank,
    evaluate,
    incomplete_beta_reg,
    mauc,
    roc_points,
    welch_t_test,
)

__version__ = "0.1.0"

__all__ = [
    "CellSieveError",
    "ConvergenceError",
    "InputError",
    "EigenDecomposition",
    "as_matrix",
    "eigh_symmetric",
    "matmul",
    "FilterConfig",
    "FilterReport",
    "filter_training_set",
    "manhattan_distance_matrix",
    "project_onto_subspace",
    "sample_degrees",
    "select_samples",
    "smallest_eigenvectors",
    "KernelSpec",
    "RidgeModel",
    "SvrModel",
    "kernel_eval",
    "predict",
    "train_ridge",
    "train_svr",
    "EvalReport",
    "auc_midrank",
    "evaluate",
    "incomplete_beta_reg",
    "mauc",
    "roc_points",
    "welch_t_test",
]
