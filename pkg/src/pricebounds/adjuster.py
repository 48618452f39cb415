"""Shape-constrained adjustment of estimated bounds.

The adjusted bounds minimize the count-weighted squared distance to the
estimated ones subject to any of

* monotonicity:  lower and upper bounds non-decreasing in the bin index,
* convexity of the lower bounds and concavity of the upper bounds
  (second differences >= 0 and <= 0 respectively),
* lower <= upper in every bin (on in every variant except NA).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .domain import BoundsProfile, Provenance
from .exceptions import InvalidInputError, PriceBoundsError
from .qp import QpProblem, QpSettings, solve

# Solver works in percentage points so residual tolerances stay meaningful
# next to margins of order 1e-3.
_SCALE = 100.0

# Relative weight given to zero-weight bins; keeps the projection unique.
ZERO_WEIGHT_RIDGE = 1e-4

# Along a zero-weight direction the curvature is only 2 * ZERO_WEIGHT_RIDGE,
# so a KKT residual r leaves an error of about r / (2 * ridge) there. The
# tolerance is tightened to keep that error far below 1e-6 in margin units.
DEFAULT_QP_SETTINGS = QpSettings(eps_primal=1e-9, eps_dual=1e-9)


@dataclass(frozen=True)
class AdjustmentVariant:
    monotonicity: bool
    convexity_concavity: bool

    @property
    def name(self) -> str:
        return {(False, False): "NA", (True, False): "MN",
                (False, True): "CC", (True, True): "MN-CC"}[
            (self.monotonicity, self.convexity_concavity)]

    @property
    def is_identity(self) -> bool:
        return not (self.monotonicity or self.convexity_concavity)

    @classmethod
    def parse(cls, name) -> "AdjustmentVariant":
        if isinstance(name, AdjustmentVariant):
            return name
        key = str(name).upper().replace("_", "-")
        try:
            return VARIANTS[key]
        except KeyError:
            raise InvalidInputError(
                f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None

    def __str__(self):
        return self.name


NA = AdjustmentVariant(False, False)
MN = AdjustmentVariant(True, False)
CC = AdjustmentVariant(False, True)
MN_CC = AdjustmentVariant(True, True)
VARIANTS = {"NA": NA, "MN": MN, "CC": CC, "MN-CC": MN_CC}


def _diff_rows(n, order):
    """Rows of the ``order``-th forward difference operator on n points."""
    D = sp.identity(n, format="csr")
    for _ in range(order):
        D = D[1:] - D[:-1]
    return sp.csr_matrix(D)


def constraint_blocks(n: int, variant: AdjustmentVariant, lb_le_ub: bool = True) -> list:
    """Return ``[(name, A, l, u), ...]`` over the stacked vector [lower; upper]."""
    blocks = []
    Z = lambda rows: sp.csr_matrix((rows, n))  # noqa: E731
    if variant.monotonicity:
        D1 = _diff_rows(n, 1)
        k = D1.shape[0]
        blocks.append(("monotone_lower", sp.hstack([D1, Z(k)]), np.zeros(k), np.full(k, np.inf)))
        blocks.append(("monotone_upper", sp.hstack([Z(k), D1]), np.zeros(k), np.full(k, np.inf)))
    if variant.convexity_concavity:
        D2 = _diff_rows(n, 2)
        k = D2.shape[0]
        blocks.append(("convex_lower", sp.hstack([D2, Z(k)]), np.zeros(k), np.full(k, np.inf)))
        blocks.append(("concave_upper", sp.hstack([Z(k), D2]), np.full(k, -np.inf), np.zeros(k)))
    if lb_le_ub:
        eye = sp.identity(n, format="csr")
        blocks.append(("lower_le_upper", sp.hstack([eye, -eye]), np.full(n, -np.inf), np.zeros(n)))
    return blocks


def constraint_residuals(profile: BoundsProfile, variant) -> dict:
    """Largest violation of each active constraint family, in margin units."""
    variant = AdjustmentVariant.parse(variant)
    if variant.is_identity:
        return {}
    x = np.concatenate([profile.lower, profile.upper])
    out = {}
    for name, A, l, u in constraint_blocks(profile.n_bins, variant):
        if A.shape[0] == 0:
            out[name] = 0.0
            continue
        Ax = A @ x
        viol = np.maximum(np.maximum(l - Ax, Ax - u), 0.0)
        out[name] = float(viol.max())
    return out


def build_problem(estimated: BoundsProfile, variant: AdjustmentVariant,
                  ridge: float = ZERO_WEIGHT_RIDGE) -> QpProblem:
    """Assemble the adjustment QP in percentage-point units.

    Variables are ordered ``[lower_1..lower_n, upper_1..upper_n]``. Weights
    are normalized by their mean over positive entries, which leaves the
    minimizer unchanged.
    """
    n = estimated.n_bins
    w = np.asarray(estimated.weight, dtype=float)
    pos = w > 0
    scale = w[pos].mean() if pos.any() else 1.0
    w = w / scale
    w = np.where(pos, w, ridge)
    w2 = np.concatenate([w, w])
    target = _SCALE * np.concatenate([estimated.lower, estimated.upper])
    P = sp.diags(2.0 * w2, format="csc")
    q = -2.0 * w2 * target
    blocks = constraint_blocks(n, variant)
    A = sp.vstack([b[1] for b in blocks], format="csc")
    l = np.concatenate([b[2] for b in blocks])
    u = np.concatenate([b[3] for b in blocks])
    return QpProblem(P, q, A, l, u)


def adjust(estimated: BoundsProfile, variant="MN-CC",
           qp_settings: Optional[QpSettings] = None) -> BoundsProfile:
    """Project an estimated profile onto the selected shape constraints.

    NA returns ``estimated`` untouched. Other variants always enforce
    lower <= upper. Bins with zero weight stay in the problem and are
    pinned only by the constraints plus a small ridge towards their
    (interpolated) estimate, which makes the solution unique.
    """
    variant = AdjustmentVariant.parse(variant)
    if variant.is_identity:
        return estimated
    n = estimated.n_bins
    if variant.convexity_concavity and n < 3:
        raise InvalidInputError("convexity/concavity needs at least 3 bins")
    if variant.monotonicity and n < 2:
        raise InvalidInputError("monotonicity needs at least 2 bins")

    problem = build_problem(estimated, variant)
    sol = solve(problem, qp_settings or DEFAULT_QP_SETTINGS)
    if not sol.solved:
        # The set always contains constant profiles, so this is a solver failure.
        raise PriceBoundsError(
            f"adjustment QP ended with status {sol.status.value} "
            f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e})")
    x = sol.x / _SCALE
    lower, upper = x[:n], x[n:]
    # Snap float noise on lb <= ub so the invariant holds exactly.
    upper = np.maximum(upper, lower)
    notes = (f"qp_iterations={sol.iterations}", f"polished={sol.polished}")
    return estimated.replace(lower=lower, upper=upper,
                             provenance=Provenance("adjusted", variant.name, notes))
