"""Bound estimators: quantile rule, interval rules and one-class SVM."""

from ._base import BaseBoundsEstimator, fill_empty_bins
from .ocsvm import (OcsvmConfig, OcsvmModel, OneClassSVMBounds, anomaly_score,
                    estimate_ml, extract_boundary, fit_ocsvm)
from .quantile import QuantileBounds, QuantileConfig, estimate_nr, quantile
from .rules import (IncidenceRow, IntervalRuleBounds, RuleConfig, best_interval,
                    estimate_dm, incidence)

ESTIMATORS = {"nr": QuantileBounds, "dm": IntervalRuleBounds, "ml": OneClassSVMBounds}

__all__ = [
    "BaseBoundsEstimator", "ESTIMATORS", "IncidenceRow", "IntervalRuleBounds",
    "OcsvmConfig", "OcsvmModel", "OneClassSVMBounds", "QuantileBounds", "QuantileConfig",
    "RuleConfig", "anomaly_score", "best_interval", "estimate_dm", "estimate_ml",
    "estimate_nr", "extract_boundary", "fill_empty_bins", "fit_ocsvm", "incidence", "quantile",
]
