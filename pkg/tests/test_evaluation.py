import csv
import io
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from pricebounds.domain import BoundsProfile, MarginGrid, OperationRecord
from pricebounds.evaluation import (REPORT_COLUMNS, EvalRow, improvement_rate, make_folds,
                                    rmse, run_ablation)
from pricebounds.exceptions import InvalidInputError, UndefinedMetricError
from pricebounds.synthgen import SCENARIOS, generate

T0 = datetime(2024, 1, 1, tzinfo=timezone.utc)
GRID4 = MarginGrid(0.0, 0.04, 0.01)


def records(days):
    return [OperationRecord("p", T0 + timedelta(days=int(d)), 0.005, 0.006) for d in days]


def prof(lower, upper, weight=None, grid=GRID4):
    w = np.ones(grid.n_bins) if weight is None else np.asarray(weight, float)
    return BoundsProfile(grid, np.asarray(lower, float), np.asarray(upper, float), w)


class TestFolds:
    def test_even(self):
        plan = make_folds(records(range(10)), 5)
        assert plan.sizes == [2, 2, 2, 2, 2]
        assert_array_equal(plan.assignment, np.repeat(np.arange(5), 2))

    def test_remainder_first(self):
        assert make_folds(records(range(11)), 5).sizes == [3, 2, 2, 2, 2]

    def test_sorted_by_time(self):
        days = [9, 3, 0, 7, 1, 8, 2, 6, 4, 5]
        plan = make_folds(records(days), 5)
        for j, d in enumerate(days):
            assert plan.assignment[j] == d // 2
        for f in range(5):
            assert set(plan.test_indices(f)).isdisjoint(plan.train_indices(f))

    def test_too_few(self):
        with pytest.raises(InvalidInputError):
            make_folds(records(range(4)), 5)


class TestRmse:
    def test_identical(self):
        p = prof([0.01] * 4, [0.02] * 4)
        assert rmse(p, p) == 0.0

    def test_lower_shift(self):
        # +0.1 percentage points on every lower bound.
        a = prof([0.01] * 4, [0.02] * 4)
        b = prof([0.011] * 4, [0.02] * 4)
        assert rmse(b, a) == pytest.approx(0.07071067811865475, rel=1e-12)
        assert rmse(a, b) == rmse(b, a)

    def test_single_bin_reference(self):
        a = prof([0.01, 0.0, 0.0, 0.0], [0.02, 0.0, 0.0, 0.0], [0, 3, 0, 0])
        b = prof([0.01, 0.002, 0.5, 0.5], [0.02, 0.002, 0.5, 0.5])
        assert rmse(b, a) == pytest.approx(100 * 0.002, rel=1e-12)

    def test_no_weight(self):
        a = prof([0.0] * 4, [0.0] * 4, [0] * 4)
        with pytest.raises(UndefinedMetricError):
            rmse(a, a)

    def test_grid_mismatch(self):
        with pytest.raises(InvalidInputError):
            rmse(prof([0] * 4, [0] * 4), prof([0] * 8, [0] * 8, grid=MarginGrid(0, 0.08, 0.01)))


class TestImprovementRate:
    @pytest.mark.parametrize("na, v, expected, tol", [
        (0.199, 0.179, 10.0, 0.1),
        (0.176, 0.159, 9.5, 0.2),
        (0.2, 0.2, 0.0, 0.0),
    ])
    def test_rows(self, na, v, expected, tol):
        assert abs(improvement_rate(na, v) - expected) <= tol

    def test_zero_na(self):
        with pytest.raises(UndefinedMetricError):
            improvement_rate(0.0, 0.1)

    def test_row_property(self):
        row = EvalRow("nr", 0.05, 0.001, "A", "MN-CC", rmse={"NA": 0.199, "MN-CC": 0.179})
        assert row.improvement == pytest.approx(100 * (1 - 0.179 / 0.199))
        row.error = "boom"
        assert math.isnan(row.improvement)


@pytest.fixture(scope="module")
def synth():
    recs, _, _ = generate(SCENARIOS["A"].with_seed(1), 600)
    return recs


def test_ablation_report(synth):
    grid = {"nr": (0.05,), "dm": (0.9,)}
    rep = run_ablation(synth, grid=grid, step_sizes=(0.001,))
    assert len(rep.rows) == 2 and not rep.failures
    for row in rep.rows:
        assert set(row.rmse) == {"NA", "MN", "CC", "MN-CC"}
        assert all(len(v) == 5 for v in row.fold_rmse.values())
        assert row.improvement == pytest.approx(
            100 * (1 - row.rmse["MN-CC"] / row.rmse["NA"]))
    parsed = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(parsed[0]) == REPORT_COLUMNS
    assert len(parsed) == 3
    assert "MN-CC" in rep.to_table()
    # Same data, same report.
    again = run_ablation(synth, grid=grid, step_sizes=(0.001,))
    assert again.to_csv() == rep.to_csv()


def test_ablation_failed_cell_is_reported():
    # Every test fold lies outside the grid, so the metric is undefined.
    recs = [OperationRecord("p", T0 + timedelta(days=d), 0.02, 0.02) for d in range(10)]
    recs[:8] = [OperationRecord("p", T0 + timedelta(days=d), 0.005, 0.006) for d in range(8)]
    rep = run_ablation(recs, grid={"nr": (0.0,)}, step_sizes=(0.001,))
    assert len(rep.failures) == 1
    assert "NoDataError" in rep.rows[0].error or "UndefinedMetric" in rep.rows[0].error
    assert "FAILED" in rep.to_table()
    assert "nan" in rep.to_csv()


def test_ablation_ml_cell(synth):
    rep = run_ablation(synth, grid={"ml": (0.05,)}, step_sizes=(0.001,),
                       ocsvm_options={"max_samples": 200, "random_state": 0})
    assert not rep.failures
    assert rep.rows[0].comparison == "CC"


def test_ablation_rejects_bad_grid(synth):
    with pytest.raises(InvalidInputError):
        run_ablation(synth, grid={"xx": (1,)})
    with pytest.raises(InvalidInputError):
        run_ablation(synth, grid={"nr": (0.0,)}, variants=("NA", "MN"))
