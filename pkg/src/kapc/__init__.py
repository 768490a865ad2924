"""Kernelized additive principal components.

An additive principal component (APC) of variables ``X_1, ..., X_p`` is a
set of transforms ``phi_j`` whose sum has small variance relative to the
total variance of the transforms.  Here every ``phi_j`` lives in a
reproducing kernel Hilbert space and is regularized by a norm penalty.
"""

from kapc.direct import DirectSolution, solve_direct, solve_oracle_exact
from kapc.exceptions import DataError, DegenerateError, KapcError, SolverError
from kapc.gram import center_gram, validate_kernel_matrix
from kapc.kernels import KernelSpec, cross_kernel, eval_kernel, kernel_matrix, null_space_basis
from kapc.model import ApcModel, fit_model
from kapc.power import fit_power, power_step, solve_power, star_inner_product
from kapc.problem import ApcComponent, ApcProblem, SolverConfig, VariableBlock, make_block
from kapc.selection import (
    CvResult,
    alpha_grid,
    calibrate_alpha_for_df,
    cross_validate,
    df_preset_target,
    standardize,
)
from kapc.simulation import estimation_error, estimation_errors, generate_simulation, true_transforms
from kapc.smoother import (
    PenalizedSmoother,
    degrees_of_freedom,
    evaluate_transform,
    fit_penalized_regression,
    hat_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ApcComponent",
    "ApcModel",
    "ApcProblem",
    "CvResult",
    "DataError",
    "DegenerateError",
    "DirectSolution",
    "KapcError",
    "KernelSpec",
    "PenalizedSmoother",
    "SolverConfig",
    "SolverError",
    "VariableBlock",
    "alpha_grid",
    "calibrate_alpha_for_df",
    "center_gram",
    "cross_kernel",
    "cross_validate",
    "degrees_of_freedom",
    "df_preset_target",
    "estimation_error",
    "estimation_errors",
    "eval_kernel",
    "evaluate_transform",
    "fit_model",
    "fit_penalized_regression",
    "fit_power",
    "generate_simulation",
    "hat_matrix",
    "kernel_matrix",
    "make_block",
    "null_space_basis",
    "power_step",
    "solve_direct",
    "solve_oracle_exact",
    "solve_power",
    "standardize",
    "star_inner_product",
    "true_transforms",
    "validate_kernel_matrix",
]
