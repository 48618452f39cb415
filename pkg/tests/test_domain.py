import io
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from pricebounds.domain import (BoundsProfile, CostPricePair, MarginGrid, OperationRecord,
                                Provenance, bin_of, group_by_bin, load_operations,
                                price_from_margin, write_operations)
from pricebounds.exceptions import FormatError, InvalidInputError, OutOfDomainError

GRID = MarginGrid(0.003, 0.011, 0.001)


def _rec(cur, nxt, ts="2024-01-01T00:00:00Z", pid="p"):
    return OperationRecord(pid, datetime.fromisoformat(ts.replace("Z", "+00:00")), cur, nxt)


class TestMarginGrid:
    def test_bin_count(self):
        assert GRID.n_bins == 8
        assert MarginGrid(0.003, 0.011, 0.0001).n_bins == 80
        # Non-dividing step rounds up.
        assert MarginGrid(0.0, 1.0, 0.3).n_bins == 4

    @pytest.mark.parametrize("margin, expected", [
        (0.003, 1),
        (0.011, 8),
        (0.0041, 2),
        (0.004, 2),      # interior edge goes to the higher bin
        (0.0109999, 8),
        (0.02, None),
        (0.0029, None),
    ])
    def test_bin_of(self, margin, expected):
        assert bin_of(GRID, margin) == expected

    def test_bin_of_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            GRID.bin_of(float("nan"))
        with pytest.raises(InvalidInputError):
            GRID.bins([0.004, float("inf")])

    def test_edges_and_centers(self):
        assert_allclose(GRID.lower_edges, 0.003 + 0.001 * np.arange(8))
        assert_allclose(GRID.upper_edges[-1], 0.011)
        assert_array_equal(GRID.bins(GRID.centers), np.arange(1, 9))

    def test_last_edge_clamped(self):
        g = MarginGrid(0.0, 1.0, 0.3)
        assert g.upper_edges[-1] == 1.0
        assert g.bin_of(1.0) == 4

    @pytest.mark.parametrize("kw", [dict(r_min=0.01, r_max=0.003), dict(delta=0.0),
                                    dict(delta=-0.001), dict(r_max=float("inf"))])
    def test_invalid_grid(self, kw):
        with pytest.raises(InvalidInputError):
            MarginGrid(**kw)

    @given(st.floats(0.003, 0.011), st.floats(0.003, 0.011),
           st.sampled_from([0.001, 0.0001, 0.0003]))
    def test_bin_of_total_and_monotone(self, a, b, delta):
        g = MarginGrid(0.003, 0.011, delta)
        lo, hi = min(a, b), max(a, b)
        i, j = g.bin_of(lo), g.bin_of(hi)
        assert 1 <= i <= g.n_bins and 1 <= j <= g.n_bins
        assert i <= j

    @given(st.sampled_from([0.001, 0.0001, 0.0007]))
    def test_center_round_trip(self, delta):
        g = MarginGrid(0.003, 0.011, delta)
        assert [g.bin_of(c) for c in g.centers] == list(range(1, g.n_bins + 1))


class TestGroupByBin:
    def test_example(self):
        recs = [_rec(0.0031, 0.005), _rec(0.0032, 0.004), _rec(0.0045, 0.006)]
        b = group_by_bin(recs, GRID)
        assert_array_equal(b.counts, [2, 1, 0, 0, 0, 0, 0, 0])
        assert_array_equal(b.next_margins[0], [0.004, 0.005])
        assert b.n_excluded == 0

    def test_all_out_of_domain(self):
        recs = [_rec(0.02, 0.005), _rec(0.001, 0.004)]
        b = group_by_bin(recs, GRID)
        assert b.counts.sum() == 0
        assert b.n_excluded == 2

    def test_empty(self):
        b = group_by_bin([], GRID)
        assert b.counts.sum() == 0 and b.n_excluded == 0
        assert b.points().shape == (0, 2)

    @given(st.lists(st.floats(0.0, 0.02), max_size=60))
    def test_mass_conservation(self, cur):
        b = group_by_bin((np.array(cur), np.zeros(len(cur))), GRID)
        assert b.counts.sum() + b.n_excluded == len(cur)
        assert b.n_records == len(cur)

    def test_array_input_matches_records(self):
        rng = np.random.default_rng(0)
        cur, nxt = rng.uniform(0.002, 0.012, 50), rng.uniform(0.003, 0.011, 50)
        a = group_by_bin((cur, nxt), GRID)
        b = group_by_bin([_rec(c, n) for c, n in zip(cur, nxt)], GRID)
        for x, y in zip(a.next_margins, b.next_margins):
            assert_array_equal(x, y)


class TestPrice:
    @pytest.mark.parametrize("cost, margin, price", [(100, 0.10, 110), (100, 0.0, 100),
                                                     (250, 0.004, 251)])
    def test_examples(self, cost, margin, price):
        assert price_from_margin(cost, margin) == pytest.approx(price, rel=1e-15)
        assert CostPricePair(cost, margin).price == pytest.approx(price, rel=1e-15)

    @pytest.mark.parametrize("cost", [0, -5, float("nan")])
    def test_bad_cost(self, cost):
        with pytest.raises(InvalidInputError):
            price_from_margin(cost, 0.01)

    @given(st.floats(0.01, 1e6), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
    def test_strictly_increasing(self, cost, a, b):
        # Strict whenever 1 + a and 1 + b are distinct floats.
        if 1.0 + a < 1.0 + b:
            assert price_from_margin(cost, a) < price_from_margin(cost, b)
        elif a <= b:
            assert price_from_margin(cost, a) <= price_from_margin(cost, b)


class TestRecords:
    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            _rec(float("nan"), 0.004)

    def test_naive_timestamp_is_utc(self):
        r = OperationRecord("p", datetime(2024, 1, 1), 0.004, 0.005)
        assert r.timestamp.tzinfo == timezone.utc


CSV_OK = """product_id,timestamp,current_margin,next_margin
a,2024-01-02T00:00:00Z,0.004,0.005
b,2024-01-01T12:00:00+09:00,0.006,0.0061
a,2024-01-03T00:00:00Z,0.007,0.007
"""


class TestLoadOperations:
    def test_three_rows_in_order(self):
        recs = load_operations(io.StringIO(CSV_OK))
        assert [r.product_id for r in recs] == ["a", "b", "a"]
        assert recs[1].timestamp == datetime(2024, 1, 1, 3, tzinfo=timezone.utc)
        assert recs[2].next_margin == 0.007

    def test_header_only(self):
        assert load_operations(io.StringIO(",".join(
            ["product_id", "timestamp", "current_margin", "next_margin"]) + "\n")) == []

    def test_missing_header(self):
        with pytest.raises(FormatError, match="line 1"):
            load_operations(io.StringIO("a,2024-01-01,0.004,0.005\n"))

    def test_bad_margin_names_line(self):
        bad = CSV_OK + "c,2024-01-04T00:00:00Z,abc,0.004\n"
        with pytest.raises(FormatError, match="line 5"):
            load_operations(io.StringIO(bad))

    def test_bad_timestamp(self):
        bad = CSV_OK.replace("2024-01-03T00:00:00Z", "yesterday")
        with pytest.raises(FormatError, match="line 4"):
            load_operations(io.StringIO(bad))

    def test_percent_unit(self):
        text = CSV_OK.replace("0.004,0.005", "0.4,0.5")
        recs = load_operations(io.StringIO(text), percent=True)
        assert recs[0].current_margin == pytest.approx(0.004)

    def test_bytes_stream_and_round_trip(self, tmp_path):
        recs = load_operations(io.BytesIO(CSV_OK.encode()))
        buf = io.StringIO()
        write_operations(recs, buf)
        path = tmp_path / "ops.csv"
        path.write_text(buf.getvalue())
        again = load_operations(path)
        assert again == recs


class TestBoundsProfile:
    def test_shape_checks(self):
        with pytest.raises(InvalidInputError):
            BoundsProfile(GRID, np.zeros(7), np.zeros(8), np.zeros(8))
        with pytest.raises(InvalidInputError):
            BoundsProfile(GRID, np.zeros(8), np.zeros(8), -np.ones(8))

    def test_read_only_and_bounds_at(self):
        p = BoundsProfile(GRID, np.arange(8.0), np.arange(8.0) + 1, np.ones(8))
        with pytest.raises(ValueError):
            p.lower[0] = 5
        assert p.bounds_at(0.0041) == (1.0, 2.0)
        with pytest.raises(OutOfDomainError):
            p.bounds_at(0.5)

    def test_provenance(self):
        assert str(Provenance("adjusted", "MN-CC")) == "adjusted:MN-CC"
        assert Provenance.parse("estimated:nr(q=0.05)").label == "nr(q=0.05)"
        with pytest.raises(InvalidInputError):
            Provenance("guessed", "x")
