"""Two-product revenue maximization under price bounds.

Demand is linear in both prices::

    q1 = a11 p1 + a12 p2 + b1
    q2 = a21 p1 + a22 p2 + b2

and revenue ``p1 q1 + p2 q2`` is maximized over a price box, typically
derived from margin bounds via :func:`margins_to_price_box`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BoundsProfile, price_from_margin
from .exceptions import InvalidInputError
from .qp import QpProblem, QpSettings, solve

GRID_POINTS = 1001


@dataclass(frozen=True)
class LinearDemandModel:
    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float

    @property
    def A(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]], dtype=float)

    @property
    def b(self) -> np.ndarray:
        return np.array([self.b1, self.b2], dtype=float)

    @property
    def hessian(self) -> np.ndarray:
        return self.A + self.A.T

    def is_concave(self, tol: float = 1e-12) -> bool:
        """Revenue is concave iff the Hessian ``A + A'`` is negative semidefinite."""
        return bool(np.linalg.eigvalsh(self.hessian).max() <= tol)

    def demand(self, p) -> np.ndarray:
        return self.A @ np.asarray(p, dtype=float) + self.b

    def revenue(self, p) -> float:
        p = np.asarray(p, dtype=float)
        return float(p @ self.demand(p))


@dataclass(frozen=True)
class DemoResult:
    prices: np.ndarray
    revenue: float
    method: str
    active: tuple

    def summary(self) -> str:
        act = ", ".join(self.active) if self.active else "none"
        return (f"prices: p1={self.prices[0]:.6g} p2={self.prices[1]:.6g}\n"
                f"revenue: {self.revenue:.6g}\n"
                f"active bounds: {act}\n"
                f"method: {self.method}")


def _check_box(lower, upper):
    lo = np.asarray(lower, dtype=float).reshape(2)
    hi = np.asarray(upper, dtype=float).reshape(2)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InvalidInputError("price box must be finite")
    if np.any(lo > hi):
        raise InvalidInputError(f"empty price box: lower {lo} exceeds upper {hi}")
    return lo, hi


def _active(p, lo, hi, tol):
    out = []
    for k in range(2):
        if abs(p[k] - lo[k]) <= tol:
            out.append(f"p{k + 1}=lower")
        elif abs(p[k] - hi[k]) <= tol:
            out.append(f"p{k + 1}=upper")
    return tuple(out)


def grid_search(model: LinearDemandModel, lower, upper, points: int = GRID_POINTS):
    """Best of a ``points x points`` grid over the box; returns ``(prices, revenue)``."""
    lo, hi = _check_box(lower, upper)
    g1 = np.linspace(lo[0], hi[0], points)
    g2 = np.linspace(lo[1], hi[1], points)
    P1, P2 = np.meshgrid(g1, g2, indexing="ij")
    A, b = model.A, model.b
    R = (P1 * (A[0, 0] * P1 + A[0, 1] * P2 + b[0])
         + P2 * (A[1, 0] * P1 + A[1, 1] * P2 + b[1]))
    i, j = np.unravel_index(np.argmax(R), R.shape)
    p = np.array([g1[i], g2[j]])
    return p, model.revenue(p)


def optimize_two_products(model: LinearDemandModel, lower, upper,
                          qp_settings: QpSettings = None) -> DemoResult:
    """Maximize revenue over the box ``lower <= p <= upper``.

    Concave instances are solved as a QP on prices rescaled to order one.
    Otherwise a 1001 x 1001 grid search is used. ``method`` records which.
    """
    lo, hi = _check_box(lower, upper)
    scale = max(float(np.max(np.abs(np.concatenate([lo, hi])))), 1.0)
    tol = 1e-9 * scale
    if not model.is_concave():
        p, rev = grid_search(model, lo, hi)
        return DemoResult(p, rev, "grid", _active(p, lo, hi, tol))
    # With p = scale * x, -revenue / scale^2 = 1/2 x'(-H)x - (b / scale)'x.
    P = -model.hessian
    q = -model.b / scale
    prob = QpProblem(P, q, np.eye(2), lo / scale, hi / scale)
    sol = solve(prob, qp_settings or QpSettings(eps_primal=1e-9, eps_dual=1e-9))
    if not sol.solved:
        p, rev = grid_search(model, lo, hi)
        return DemoResult(p, rev, "grid", _active(p, lo, hi, tol))
    p = np.clip(sol.x * scale, lo, hi)
    return DemoResult(p, model.revenue(p), "qp", _active(p, lo, hi, tol))


def margins_to_price_box(bounds: BoundsProfile, current_margin: float, cost: float) -> tuple:
    """Price interval implied by the margin bounds of the current margin's bin."""
    lower, upper = bounds.bounds_at(current_margin)
    return price_from_margin(cost, lower), price_from_margin(cost, upper)
