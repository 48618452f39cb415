"""Chronological cross-validation of the estimators and adjustment variants.

For every product, fold, estimator setting and step size the estimator
is fitted on the training folds and adjusted with each variant. The
result is compared with the same estimator (no adjustment) applied to
the held-out fold. RMSEs are in percentage points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .adjuster import VARIANTS, AdjustmentVariant, adjust
from .domain import BoundsProfile, MarginGrid, group_by_bin, split_by_product
from .estimators import (OcsvmConfig, QuantileConfig, RuleConfig, estimate_dm, estimate_ml,
                         estimate_nr, fit_ocsvm)
from .exceptions import InvalidInputError, PriceBoundsError, UndefinedMetricError
from .qp import QpSettings

HYPERPARAMS = {"nr": "q", "dm": "min_support", "ml": "nu"}
DEFAULT_GRID = {"nr": (0.0, 0.05, 0.1), "dm": (0.8, 0.9, 1.0), "ml": (0.01, 0.03, 0.05)}
DEFAULT_STEPS = (0.001, 0.0001)
# Variant whose RMSE feeds the improvement rate, per estimator.
COMPARISON = {"nr": "MN-CC", "dm": "MN-CC", "ml": "CC"}
REPORT_COLUMNS = ("estimator", "hyperparam", "step_size", "product",
                  "NA", "MN", "CC", "MN_CC", "improvement")


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of records to ``k`` contiguous chronological folds.

    ``assignment[j]`` is the 0-based fold of record ``j`` (input order).
    """

    k: int
    assignment: np.ndarray

    @property
    def sizes(self) -> list:
        return np.bincount(self.assignment, minlength=self.k).tolist()

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def make_folds(records, k: int = 5) -> FoldPlan:
    """Sort by timestamp and cut into ``k`` blocks; larger blocks come first."""
    k = int(k)
    n = len(records)
    if k < 2:
        raise InvalidInputError("k must be at least 2")
    if n < k:
        raise InvalidInputError(f"need at least k={k} records, got {n}")
    order = sorted(range(n), key=lambda j: records[j].timestamp)
    base, extra = divmod(n, k)
    sizes = [base + 1] * extra + [base] * (k - extra)
    assignment = np.empty(n, dtype=int)
    assignment[order] = np.repeat(np.arange(k), sizes)
    return FoldPlan(k, assignment)


def rmse(profile: BoundsProfile, reference: BoundsProfile) -> float:
    """RMSE in percentage points over the reference's positive-weight bins.

    Lower and upper residuals are pooled, so a bin contributes two terms.
    """
    if profile.grid != reference.grid:
        raise InvalidInputError("profiles are on different grids")
    mask = reference.weight > 0
    if not mask.any():
        raise UndefinedMetricError("reference profile has no positive-weight bin")
    d = 100.0 * np.concatenate([profile.lower[mask] - reference.lower[mask],
                                profile.upper[mask] - reference.upper[mask]])
    return float(np.sqrt(np.mean(d * d)))


def improvement_rate(rmse_na: float, rmse_variant: float) -> float:
    """``100 * (1 - rmse_variant / rmse_na)``."""
    if not rmse_na > 0:
        raise UndefinedMetricError("improvement rate needs a positive NA RMSE")
    return 100.0 * (1.0 - rmse_variant / rmse_na)


def estimate_profile(estimator: str, value: float, binned, model=None, ocsvm_options=None):
    """Run one estimator; returns ``(profile, model)`` (model is None unless ML)."""
    if estimator == "nr":
        return estimate_nr(binned, config=QuantileConfig(value)), None
    if estimator == "dm":
        return estimate_dm(binned, config=RuleConfig(value)), None
    if estimator == "ml":
        config = OcsvmConfig(nu=value, **(ocsvm_options or {}))
        if model is None:
            model = fit_ocsvm(binned.points(), config)
        return estimate_ml(binned, config=config, model=model), model
    raise InvalidInputError(f"unknown estimator {estimator!r}")


@dataclass
class EvalRow:
    estimator: str
    hyperparam: float
    step_size: float
    product: str
    comparison: str
    rmse: dict = field(default_factory=dict)
    fold_rmse: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def improvement(self) -> float:
        if self.error or "NA" not in self.rmse or self.comparison not in self.rmse:
            return math.nan
        try:
            return improvement_rate(self.rmse["NA"], self.rmse[self.comparison])
        except UndefinedMetricError:
            return math.nan


@dataclass
class EvalReport:
    rows: list
    k: int = 5

    @property
    def failures(self) -> list:
        return [r for r in self.rows if r.error]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            vals = [r.rmse.get(v, math.nan) for v in ("NA", "MN", "CC", "MN-CC")]
            writer.writerow([r.estimator, repr(r.hyperparam), repr(r.step_size), r.product]
                            + [f"{v:.6f}" for v in vals] + [f"{r.improvement:.4f}"])
        return buf.getvalue()

    def to_table(self) -> str:
        head = (f"{'est':<4}{'param':>7}{'step':>8}  {'product':<12}"
                f"{'NA':>9}{'MN':>9}{'CC':>9}{'MN-CC':>9}{'impr%':>8}")
        lines = [head, "-" * len(head)]
        for r in self.rows:
            cells = "".join(f"{r.rmse.get(v, math.nan):9.4f}" for v in ("NA", "MN", "CC", "MN-CC"))
            line = (f"{r.estimator:<4}{r.hyperparam:>7g}{r.step_size:>8g}  {r.product:<12.12}"
                    f"{cells}{r.improvement:8.2f}")
            if r.error:
                line += f"  FAILED: {r.error}"
            lines.append(line)
        return "\n".join(lines)


def _fit_side(cache, key, estimator, value, binned, ocsvm_options):
    """Estimate, reusing an ML model fitted on the same records for another step size."""
    model = cache.get(key) if estimator == "ml" else None
    profile, model = estimate_profile(estimator, value, binned, model, ocsvm_options)
    if estimator == "ml":
        cache[key] = model
    return profile


def run_ablation(records, products: Optional[Sequence[str]] = None, grid: Optional[dict] = None,
                 step_sizes=DEFAULT_STEPS, variants=("NA", "MN", "CC", "MN-CC"), k: int = 5,
                 r_min: float = 0.003, r_max: float = 0.011, comparison: Optional[dict] = None,
                 ocsvm_options: Optional[dict] = None,
                 qp_settings: Optional[QpSettings] = None) -> EvalReport:
    """Cross-validate every (estimator, hyperparameter, step, product) cell.

    ``grid`` maps estimator id to hyperparameter values (default: all three
    estimators with their standard grids). A cell whose fit, adjustment or
    metric fails in any fold is kept in the report with ``error`` set.
    """
    grid = DEFAULT_GRID if grid is None else grid
    comparison = {**COMPARISON, **(comparison or {})}
    variants = [AdjustmentVariant.parse(v).name for v in variants]
    for est in grid:
        if est not in HYPERPARAMS:
            raise InvalidInputError(f"unknown estimator {est!r}")
        if comparison[est] not in variants:
            raise InvalidInputError(f"comparison variant {comparison[est]} not in {variants}")
    by_product = split_by_product(records)
    if products is None:
        products = sorted(by_product)
    grids = {step: MarginGrid(r_min, r_max, step) for step in step_sizes}

    rows = []
    for product in products:
        recs = by_product.get(product)
        if not recs:
            raise InvalidInputError(f"no records for product {product!r}")
        plan = make_folds(recs, k)
        cur = np.array([r.current_margin for r in recs])
        nxt = np.array([r.next_margin for r in recs])
        cache: dict = {}
        for est, values in grid.items():
            for value in values:
                for step, mgrid in grids.items():
                    row = EvalRow(est, float(value), float(step), product, comparison[est],
                                  fold_rmse={v: [] for v in variants})
                    try:
                        for f in range(plan.k):
                            tr, te = plan.train_indices(f), plan.test_indices(f)
                            train = group_by_bin((cur[tr], nxt[tr]), mgrid)
                            test = group_by_bin((cur[te], nxt[te]), mgrid)
                            est_prof = _fit_side(cache, (est, value, f, "train"), est, value,
                                                 train, ocsvm_options)
                            ref = _fit_side(cache, (est, value, f, "test"), est, value,
                                            test, ocsvm_options)
                            for v in variants:
                                adj = adjust(est_prof, VARIANTS[v], qp_settings)
                                row.fold_rmse[v].append(rmse(adj, ref))
                        row.rmse = {v: float(np.mean(row.fold_rmse[v])) for v in variants}
                    except PriceBoundsError as exc:
                        row.error = f"{type(exc).__name__}: {exc}"
                    rows.append(row)
    return EvalReport(rows, k)
