"""Optimized-confidence interval rules over next-margin bins.

For each current-margin bin the next margins are reduced to a 0/1
incidence row over next-margin bins. An interval ``[s, t]`` of bins has

    support    = (# positive bins in [s, t]) / (# positive bins)
    confidence = (# positive bins in [s, t]) / (t - s + 1)

and the bounds come from the most confident interval whose support
reaches the minimum.
"""

from dataclasses import dataclass

import numpy as np

from .._validation import check_fraction
from ..domain import BinnedData
from ..exceptions import EmptyBinError, InfeasibleSupportError
from ._base import BaseBoundsEstimator, make_profile


@dataclass(frozen=True)
class RuleConfig:
    min_support: float = 0.9

    def __post_init__(self):
        check_fraction(self.min_support, "min_support", 0.0, 1.0, low_open=True)


@dataclass(frozen=True, eq=False)
class IncidenceRow:
    bin_index: int
    bits: np.ndarray


def incidence(binned: BinnedData, grid=None) -> list:
    """One row per current-margin bin; next margins outside the grid are dropped."""
    grid = grid or binned.grid
    rows = []
    for i, nxt in enumerate(binned.next_margins, start=1):
        bits = np.zeros(grid.n_bins, dtype=bool)
        j = grid.bins(nxt) if len(nxt) else np.zeros(0, dtype=int)
        bits[j[j > 0] - 1] = True
        rows.append(IncidenceRow(i, bits))
    return rows


def best_interval(row, min_support: float) -> tuple:
    """Return the 1-based ``(s, t)`` of the optimized-confidence interval.

    Exhaustive over all O(n^2) intervals. Ties in confidence go to the
    shorter interval, then to the smaller ``s``.
    """
    bits = np.asarray(row.bits if isinstance(row, IncidenceRow) else row, dtype=bool)
    min_support = check_fraction(min_support, "min_support", 0.0, 1.0, low_open=True)
    total = int(bits.sum())
    if total == 0:
        raise EmptyBinError("incidence row has no positive bin")
    n = bits.size
    cs = np.concatenate([[0], np.cumsum(bits)])
    s, t = np.triu_indices(n)
    hits = cs[t + 1] - cs[s]
    length = t - s + 1
    ok = hits >= min_support * total - 1e-9
    if not ok.any():
        raise InfeasibleSupportError(f"no interval reaches support {min_support}")
    conf = hits[ok] / length[ok]
    order = np.lexsort((s[ok], length[ok], -conf))
    k = order[0]
    return int(s[ok][k]) + 1, int(t[ok][k]) + 1


def estimate_dm(binned: BinnedData, grid=None, config: RuleConfig = RuleConfig()):
    grid = grid or binned.grid
    n = grid.n_bins
    lower, upper = np.zeros(n), np.zeros(n)
    has = np.zeros(n, dtype=bool)
    lo_edges, hi_edges = grid.lower_edges, grid.upper_edges
    for row in incidence(binned, grid):
        if not row.bits.any():
            continue
        s, t = best_interval(row, config.min_support)
        i = row.bin_index - 1
        lower[i], upper[i] = lo_edges[s - 1], hi_edges[t - 1]
        has[i] = True
    return make_profile(grid, lower, upper, has, binned.counts,
                        f"dm(min_support={config.min_support:g})")


class IntervalRuleBounds(BaseBoundsEstimator):
    """Bounds from optimized-confidence interval rules.

    Parameters
    ----------
    min_support : float in (0, 1]
    r_min, r_max, delta : float
        Margin grid, shared by current and next margins.
    """

    def __init__(self, min_support=0.9, r_min=0.003, r_max=0.011, delta=0.001):
        self.min_support = min_support
        self.r_min = r_min
        self.r_max = r_max
        self.delta = delta

    def _estimate(self, binned):
        return estimate_dm(binned, binned.grid, RuleConfig(self.min_support))
