"""One-class SVM boundary bounds.

The model is fitted on standardized ``(current, next)`` pairs by solving
the standard one-class SVM dual

    minimize    1/2 a' Q a
    subject to  0 <= a_k <= 1 / (nu K),  sum_k a_k = 1

with ``Q`` the RBF kernel matrix, using the package's QP solver. For each
current-margin bin the decision function is scanned along the next-margin
axis at the bin centre; sign changes (refined by bisection) form the
boundary set whose extremes become the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .._validation import check_fraction
from ..domain import BinnedData, MarginGrid
from ..exceptions import (ConvergenceError, DegenerateModelError,
                          InsufficientDataError, InvalidInputError)
from ..qp import QpProblem, QpSettings, solve
from ._base import BaseBoundsEstimator, make_profile


BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class OcsvmConfig:
    nu: float = 0.05
    gamma: Union[float, str] = "auto"
    boundary_resolution: int = 512
    tol: float = 1e-6
    max_iter: int = 20000
    max_samples: int = 1000
    random_state: int = 0

    def __post_init__(self):
        check_fraction(self.nu, "nu", 0.0, 1.0, low_open=True)
        if self.gamma != "auto":
            g = float(self.gamma)
            if not g > 0:
                raise InvalidInputError("gamma must be positive")
        if int(self.boundary_resolution) < 2:
            raise InvalidInputError("boundary_resolution must be at least 2")
        if self.max_samples < 2:
            raise InvalidInputError("max_samples must be at least 2")


def rbf_kernel(X, Y, gamma):
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    d2 = (np.sum(X * X, axis=1)[:, None] + np.sum(Y * Y, axis=1)[None, :] - 2.0 * X @ Y.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass(frozen=True, eq=False)
class OcsvmModel:
    """Fitted one-class SVM in standardized coordinates.

    ``points`` are the standardized training points and ``alpha`` their
    dual coefficients (zeros included); ``mean``/``scale`` map raw
    ``(current, next)`` pairs into that space.
    """

    points: np.ndarray
    alpha: np.ndarray
    rho: float
    gamma: float
    nu: float
    mean: np.ndarray
    scale: np.ndarray
    kkt_residual: float = 0.0

    @property
    def n_train(self) -> int:
        return self.points.shape[0]

    @property
    def upper_bound(self) -> float:
        return 1.0 / (self.nu * self.n_train)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 1e-10 * self.upper_bound)

    def standardize(self, X):
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        """``sum_k alpha_k K(x_k, x) - rho`` for raw (current, next) pairs."""
        sv = self.support
        Z = self.standardize(X)
        out = np.empty(Z.shape[0])
        step = 8192
        for i in range(0, Z.shape[0], step):
            K = rbf_kernel(Z[i:i + step], self.points[sv], self.gamma)
            out[i:i + step] = K @ self.alpha[sv] - self.rho
        return out

    def predict(self, X) -> np.ndarray:
        return anomaly_score(self, X)


def anomaly_score(model_or_values, X=None) -> np.ndarray:
    """+1 (normal) where the decision value is >= 0, -1 otherwise."""
    values = model_or_values if X is None else model_or_values.decision_function(X)
    return np.where(np.asarray(values, dtype=float) >= 0, 1, -1)


def fit_ocsvm(points, config: OcsvmConfig = OcsvmConfig(), qp_settings=None) -> OcsvmModel:
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientDataError("one-class SVM needs at least 2 points")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("points must be finite")
    if X.shape[0] > config.max_samples:
        rng = np.random.default_rng(config.random_state)
        X = X[np.sort(rng.choice(X.shape[0], config.max_samples, replace=False))]
    K = X.shape[0]
    if config.nu * K < 1 - 1e-12:
        raise InsufficientDataError(f"nu * K = {config.nu * K:g} < 1; the dual is infeasible")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Z = (X - mean) / scale
    if config.gamma == "auto":
        var = Z.var(axis=0).mean()
        gamma = 1.0 / (2 * Z.shape[1] * var) if var > 0 else 1.0
    else:
        gamma = float(config.gamma)

    Q = rbf_kernel(Z, Z, gamma)
    C = 1.0 / (config.nu * K)
    A = sp.vstack([np.ones((1, K)), sp.identity(K)], format="csc")
    l = np.concatenate([[1.0], np.zeros(K)])
    u = np.concatenate([[1.0], np.full(K, C)])
    settings = qp_settings or QpSettings(eps_primal=config.tol, eps_dual=config.tol,
                                         max_iter=config.max_iter)
    sol = solve(QpProblem(Q, np.zeros(K), A, l, u), settings)
    residual = max(sol.primal_residual, sol.dual_residual)
    if not sol.solved:
        raise ConvergenceError(f"one-class SVM dual not solved ({sol.status.value})", residual)
    alpha = np.clip(sol.x, 0.0, C)
    alpha[alpha < 1e-12 * C] = 0.0
    alpha = alpha / alpha.sum()
    # Stationarity on a free coefficient reads (Q a)_k = -y_sum, so the
    # offset is minus the multiplier of the sum-to-one row. Free support
    # vectors sit exactly on the boundary; shifting rho down by the
    # solver accuracy keeps rounding noise from scoring them as outliers.
    rho = -float(sol.y[0]) - (BOUNDARY_SLACK + 4.0 * residual)
    return OcsvmModel(points=Z, alpha=alpha, rho=rho, gamma=gamma, nu=float(config.nu),
                      mean=mean, scale=scale, kkt_residual=residual)


def _bisect(model, cur, lo, hi, tol):
    """Vectorized bisection of sign changes on ``[lo, hi]`` at fixed ``cur``."""
    f_lo = model.decision_function(np.column_stack([cur, lo])) >= 0
    width = float(np.max(hi - lo)) if lo.size else 0.0
    steps = int(np.ceil(np.log2(max(width / tol, 1.0)))) if width > 0 else 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        f_mid = model.decision_function(np.column_stack([cur, mid])) >= 0
        same = f_mid == f_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def boundary_crossings(model: OcsvmModel, grid: MarginGrid, resolution=512, tol=None):
    """Return ``(crossings, positive_any, first_pos, last_pos)`` per bin.

    ``crossings[i]`` lists the next margins where the decision function
    changes sign along the column through the centre of bin ``i + 1``.
    """
    tol = grid.delta / 100 if tol is None else tol
    b = np.linspace(grid.r_min, grid.r_max, int(resolution))
    centers = grid.centers
    n = grid.n_bins
    cc, bb = np.meshgrid(centers, b, indexing="ij")
    pos = (model.decision_function(np.column_stack([cc.ravel(), bb.ravel()])) >= 0).reshape(n, -1)
    change = pos[:, 1:] != pos[:, :-1]
    rows, cols = np.nonzero(change)
    roots = _bisect(model, centers[rows], b[cols], b[cols + 1], tol)
    crossings = [roots[rows == i] for i in range(n)]
    return crossings, pos.any(axis=1), pos[:, 0], pos[:, -1]


def extract_boundary(model: OcsvmModel, grid: MarginGrid, config: OcsvmConfig = OcsvmConfig(),
                     counts=None):
    """Bounds from the extreme boundary crossings of each bin's column.

    A column that is positive at a domain edge uses that edge in place of
    a crossing. Columns with no positive region get interpolated bounds
    and weight 0. ``counts`` (defaults to zeros) become the weights.
    """
    n = grid.n_bins
    counts = np.zeros(n) if counts is None else np.asarray(counts, dtype=float)
    crossings, any_pos, first_pos, last_pos = boundary_crossings(
        model, grid, config.boundary_resolution)
    if not any_pos.any():
        raise DegenerateModelError("decision function is negative on the whole grid")
    lower, upper = np.zeros(n), np.zeros(n)
    edge_bins = []
    for i in range(n):
        if not any_pos[i]:
            continue
        pts = list(crossings[i])
        if first_pos[i]:
            pts.append(grid.r_min)
        if last_pos[i]:
            pts.append(grid.r_max)
        if first_pos[i] or last_pos[i]:
            edge_bins.append(i + 1)
        lower[i], upper[i] = min(pts), max(pts)
    notes = [f"edge_bins={','.join(map(str, edge_bins))}"] if edge_bins else []
    # Bins without data keep their boundary bounds; their count, hence weight, is 0.
    return make_profile(grid, lower, upper, any_pos, counts, f"ml(nu={config.nu:g})", notes)


def estimate_ml(binned: BinnedData, grid=None, config: OcsvmConfig = OcsvmConfig(), model=None):
    grid = grid or binned.grid
    if model is None:
        model = fit_ocsvm(binned.points(), config)
    return extract_boundary(model, grid, config, counts=binned.counts)


class OneClassSVMBounds(BaseBoundsEstimator):
    """Bounds from the boundary of a one-class SVM fitted to all operations.

    Parameters
    ----------
    nu : float in (0, 1]
    gamma : float or "auto"
        RBF width in standardized coordinates; "auto" is ``1 / (2 d var)``.
    boundary_resolution : int
        Next-margin samples per column before bisection.
    max_samples : int
        Training points are subsampled (seeded by ``random_state``) above this.
    """

    def __init__(self, nu=0.05, gamma="auto", boundary_resolution=512, tol=1e-6,
                 max_iter=20000, max_samples=1000, random_state=0,
                 r_min=0.003, r_max=0.011, delta=0.001):
        self.nu = nu
        self.gamma = gamma
        self.boundary_resolution = boundary_resolution
        self.tol = tol
        self.max_iter = max_iter
        self.max_samples = max_samples
        self.random_state = random_state
        self.r_min = r_min
        self.r_max = r_max
        self.delta = delta

    def _config(self):
        return OcsvmConfig(nu=self.nu, gamma=self.gamma,
                           boundary_resolution=self.boundary_resolution, tol=self.tol,
                           max_iter=self.max_iter, max_samples=self.max_samples,
                           random_state=self.random_state)

    def _estimate(self, binned):
        config = self._config()
        self.model_ = fit_ocsvm(binned.points(), config)
        return estimate_ml(binned, binned.grid, config, model=self.model_)

    def decision_function(self, X):
        return self.model_.decision_function(X)
