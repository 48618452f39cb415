"""Profit-margin bound estimation with shape-constrained adjustment.

Estimators turn historical (current, next) margin pairs into per-bin
lower/upper bounds; :func:`adjust` projects those bounds onto monotone,
convex-lower / concave-upper profiles by solving a QP with the bundled
ADMM solver.
"""

from .adjuster import CC, MN, MN_CC, NA, VARIANTS, AdjustmentVariant, adjust, constraint_residuals
from .demo import LinearDemandModel, margins_to_price_box, optimize_two_products
from .domain import (BinnedData, BoundsProfile, CostPricePair, MarginGrid, OperationRecord,
                     Provenance, bin_of, group_by_bin, load_operations, price_from_margin,
                     write_operations)
from .estimators import (IntervalRuleBounds, OneClassSVMBounds, QuantileBounds, best_interval,
                         estimate_dm, estimate_ml, estimate_nr, fit_ocsvm, quantile)
from .evaluation import EvalReport, improvement_rate, make_folds, rmse, run_ablation
from .exceptions import PriceBoundsError
from .profile_io import read_profile, write_profile
from .qp import QpProblem, QpSettings, QpSolution, QpStatus, solve

__version__ = "0.1.0"

__all__ = [
    "AdjustmentVariant", "BinnedData", "BoundsProfile", "CC", "CostPricePair", "EvalReport",
    "IntervalRuleBounds", "LinearDemandModel", "MN", "MN_CC", "MarginGrid", "NA",
    "OneClassSVMBounds", "OperationRecord", "PriceBoundsError", "Provenance", "QpProblem",
    "QpSettings", "QpSolution", "QpStatus", "QuantileBounds", "VARIANTS", "adjust",
    "best_interval", "bin_of", "constraint_residuals", "estimate_dm", "estimate_ml",
    "estimate_nr", "fit_ocsvm", "group_by_bin", "improvement_rate", "load_operations",
    "make_folds", "margins_to_price_box", "optimize_two_products", "price_from_margin",
    "quantile", "read_profile", "rmse", "run_ablation", "solve", "write_operations",
    "write_profile",
]
