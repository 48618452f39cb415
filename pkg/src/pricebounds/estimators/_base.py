"""Shared machinery for the bound estimators."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .._validation import check_current_margins, check_margin_pairs
from ..domain import BinnedData, BoundsProfile, MarginGrid, Provenance, group_by_bin
from ..exceptions import NoDataError


def fill_empty_bins(lower, upper, has_data):
    """Linear interpolation over bins without an estimate.

    Interpolates in bin-index space between the nearest bins that have one
    and extends the end values as constants.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    has_data = np.asarray(has_data, dtype=bool)
    if not has_data.any():
        raise NoDataError("every bin is empty")
    if has_data.all():
        return lower.copy(), upper.copy()
    idx = np.arange(lower.size)
    known = idx[has_data]
    return (np.interp(idx, known, lower[has_data]),
            np.interp(idx, known, upper[has_data]))


def make_profile(grid, lower, upper, has_data, counts, label, notes=()):
    lower, upper = fill_empty_bins(lower, upper, has_data)
    weight = np.where(has_data, counts, 0.0)
    return BoundsProfile(grid, lower, upper, weight, Provenance("estimated", label, tuple(notes)))


class BaseBoundsEstimator(BaseEstimator):
    """sklearn-compatible wrapper around a bin-level estimation routine.

    ``fit`` takes either an (n, 2) array of ``[current, next]`` margins or
    current margins ``X`` with next margins ``y``. ``predict`` maps current
    margins to an (n, 2) array of ``[lower, upper]`` bounds, NaN outside
    the grid domain.

    Subclasses implement ``_estimate(binned)`` returning a BoundsProfile.
    """

    def _grid(self):
        return MarginGrid(self.r_min, self.r_max, self.delta)

    def fit(self, X, y=None):
        cur, nxt = check_margin_pairs(X, y)
        binned = group_by_bin((cur, nxt), self._grid())
        return self.fit_binned(binned)

    def fit_binned(self, binned: BinnedData):
        self.grid_ = binned.grid
        self.n_excluded_ = binned.n_excluded
        self.profile_ = self._estimate(binned)
        return self

    def predict(self, X):
        check_is_fitted(self, "profile_")
        cur = check_current_margins(X)
        bins = self.grid_.bins(cur)
        out = np.full((cur.size, 2), np.nan)
        inside = bins > 0
        out[inside, 0] = self.profile_.lower[bins[inside] - 1]
        out[inside, 1] = self.profile_.upper[bins[inside] - 1]
        return out

    def score(self, X, y=None):
        """Fraction of (current, next) pairs whose next margin is within bounds."""
        cur, nxt = check_margin_pairs(X, y)
        b = self.predict(cur)
        inside = ~np.isnan(b[:, 0])
        if not inside.any():
            return float("nan")
        ok = (nxt[inside] >= b[inside, 0]) & (nxt[inside] <= b[inside, 1])
        return float(ok.mean())
