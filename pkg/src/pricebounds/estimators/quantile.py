"""Quantile-rule bounds: the q- and (1-q)-quantiles of each bin's next margins."""

import math
from dataclasses import dataclass

import numpy as np

from .._validation import check_fraction
from ..domain import BinnedData
from ..exceptions import EmptyBinError
from ._base import BaseBoundsEstimator, make_profile


@dataclass(frozen=True)
class QuantileConfig:
    q: float = 0.05

    def __post_init__(self):
        check_fraction(self.q, "q", 0.0, 0.5)


def quantile(values, q: float) -> float:
    """Order-statistic quantile with linear interpolation.

    ``values`` must be sorted ascending. With ``t = 1 - q + q * n`` the
    result is the t-th smallest value (1-based) when t is an integer and
    the linear blend of its two neighbouring order statistics otherwise.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise EmptyBinError("quantile of an empty bin")
    q = check_fraction(q, "q")
    t = 1.0 - q + q * n
    if abs(t - round(t)) < 1e-12:
        return float(values[int(round(t)) - 1])
    lo, hi = math.floor(t), math.ceil(t)
    return float((hi - t) * values[lo - 1] + (t - lo) * values[hi - 1])


def estimate_nr(binned: BinnedData, grid=None, config: QuantileConfig = QuantileConfig()):
    grid = grid or binned.grid
    n = grid.n_bins
    lower, upper = np.zeros(n), np.zeros(n)
    counts = binned.counts
    has = counts > 0
    for i in np.flatnonzero(has):
        r = binned.next_margins[i]
        lower[i] = quantile(r, config.q)
        upper[i] = quantile(r, 1.0 - config.q)
    return make_profile(grid, lower, upper, has, counts, f"nr(q={config.q:g})")


class QuantileBounds(BaseBoundsEstimator):
    """Bounds from per-bin quantiles of the observed next margins.

    Parameters
    ----------
    q : float in [0, 0.5]
        Lower-tail fraction; the upper bound uses ``1 - q``.
    r_min, r_max, delta : float
        Margin grid.
    """

    def __init__(self, q=0.05, r_min=0.003, r_max=0.011, delta=0.001):
        self.q = q
        self.r_min = r_min
        self.r_max = r_max
        self.delta = delta

    def _estimate(self, binned):
        return estimate_nr(binned, binned.grid, QuantileConfig(self.q))
