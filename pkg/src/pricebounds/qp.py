"""Convex quadratic programming by operator splitting (ADMM).

Solves::

    minimize    1/2 x' P x + q' x
    subject to  l <= A x <= u

with the over-relaxed ADMM iteration popularized by OSQP: one matrix
factorization per value of rho, a projection onto the box ``[l, u]`` per
iteration, optional residual-balancing updates of rho, and a final
polishing step that re-solves the equality-constrained problem on the
guessed active set.

Sign convention for the multipliers ``y``: stationarity reads
``P x + q + A' y = 0``; ``y_i > 0`` only when row ``i`` sits on its upper
bound and ``y_i < 0`` only when it sits on its lower bound.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import nnls

from .exceptions import InvalidProblemError

INF = np.inf


class QpStatus(enum.Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_primal: float = 1e-6
    eps_dual: float = 1e-6
    eps_infeasible: float = 1e-7
    max_iter: int = 20000
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    check_interval: int = 10
    polish: bool = True
    polish_interval: int = 100
    polish_delta: float = 1e-7
    polish_refine_iter: int = 5
    scaling_iter: int = 10
    polish_max_active_iter: int = 5
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.rho <= 0 or self.sigma <= 0:
            raise InvalidProblemError("rho and sigma must be positive")
        if not 0 < self.alpha < 2:
            raise InvalidProblemError("alpha must lie in (0, 2)")
        if self.eps_primal <= 0 or self.eps_dual <= 0:
            raise InvalidProblemError("tolerances must be positive")
        if self.max_iter < 1:
            raise InvalidProblemError("max_iter must be positive")


def _as_matrix(M, shape):
    if sp.issparse(M):
        M = sp.csc_matrix(M, dtype=float)
    else:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.size == 0:
            M = M.reshape(shape)
    return M


class QpProblem:
    """Problem data in standard form. ``l``/``u`` may hold +-inf."""

    def __init__(self, P, q, A=None, l=None, u=None):
        q = np.asarray(q, dtype=float).ravel()
        n = q.size
        P = _as_matrix(P, (n, n))
        if A is None:
            A = np.zeros((0, n))
        A = _as_matrix(A, (0, n))
        m = A.shape[0]
        l = np.full(m, -INF) if l is None else np.asarray(l, dtype=float).ravel()
        u = np.full(m, INF) if u is None else np.asarray(u, dtype=float).ravel()

        if P.shape != (n, n):
            raise InvalidProblemError(f"P has shape {P.shape}, expected {(n, n)}")
        if A.shape[1] != n:
            raise InvalidProblemError(f"A has {A.shape[1]} columns, expected {n}")
        if l.shape != (m,) or u.shape != (m,):
            raise InvalidProblemError("l and u must have one entry per row of A")
        if np.any(np.isnan(l)) or np.any(np.isnan(u)) or not np.all(np.isfinite(q)):
            raise InvalidProblemError("problem data contains NaN")
        if np.any(l > u):
            raise InvalidProblemError("l must not exceed u")
        asym = abs(P - P.T).max() if sp.issparse(P) else np.max(np.abs(P - P.T), initial=0.0)
        if asym > 1e-9 * max(1.0, abs(P).max() if P.size else 1.0):
            raise InvalidProblemError("P must be symmetric")

        self.P, self.q, self.A, self.l, self.u = P, q, A, l, u

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.l.size

    @property
    def sparse(self) -> bool:
        return sp.issparse(self.P) or sp.issparse(self.A)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def residuals(self, x, y) -> tuple:
        """Return (primal, dual, complementarity) KKT residuals at ``(x, y)``.

        The complementarity term is large when a multiplier is non-zero on
        a row that is not at the bound its sign points to.
        """
        Ax = self.A @ x
        primal = _norm_inf(np.maximum(self.l - Ax, 0.0)) if self.m else 0.0
        primal = max(primal, _norm_inf(np.maximum(Ax - self.u, 0.0)) if self.m else 0.0)
        dual = _norm_inf(self.P @ x + self.q + self.A.T @ y)
        if self.m:
            with np.errstate(invalid="ignore"):
                gap = np.where(y > 0, self.u - Ax, np.where(y < 0, Ax - self.l, 0.0))
            gap = np.where(np.isinf(gap), np.abs(y), np.abs(gap))
            comp = _norm_inf(np.minimum(np.abs(y), gap))
        else:
            comp = 0.0
        return primal, dual, comp


@dataclass(frozen=True, eq=False)
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: QpStatus
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float = float("nan")
    polished: bool = False
    rho: float = float("nan")

    @property
    def solved(self) -> bool:
        return self.status is QpStatus.SOLVED


def _norm_inf(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


class _Factor:
    """Solve with ``P + sigma I + A' diag(rho) A`` (positive definite)."""

    def __init__(self, P, A, sigma: float, rho_vec: np.ndarray):
        n = P.shape[0]
        if sp.issparse(P):
            M = P + sigma * sp.identity(n, format="csc")
            if A.shape[0]:
                As = sp.csc_matrix(A)
                M = M + As.T @ sp.diags(rho_vec) @ As
            self._solve = spla.factorized(sp.csc_matrix(M))
        else:
            M = P + sigma * np.eye(n)
            if A.shape[0]:
                if sp.issparse(A):
                    M = M + (A.T @ sp.diags(rho_vec) @ A).toarray()
                else:
                    M = M + (A.T * rho_vec) @ A
            cf = sla.cho_factor(M, lower=True, check_finite=False)
            self._solve = lambda b: sla.cho_solve(cf, b, check_finite=False)

    def __call__(self, b):
        return self._solve(b)


def _col_norms(M, axis):
    if sp.issparse(M):
        if M.shape[axis] == 0 or M.nnz == 0:
            return np.zeros(M.shape[1 - axis])
        return np.asarray(abs(M).max(axis=axis).todense()).ravel()
    if M.shape[axis] == 0:
        return np.zeros(M.shape[1 - axis])
    return np.abs(M).max(axis=axis)


def _equilibrate(prob: QpProblem, iters: int):
    """Modified Ruiz equilibration of the KKT matrix plus cost scaling.

    Returns ``(P, q, A, l, u, D, E, c)`` with ``P = c D P0 D``,
    ``q = c D q0``, ``A = E A0 D`` and bounds scaled by ``E``.
    """
    # Each matrix keeps its own storage: a dense kernel matrix with a
    # sparse bound block is common.
    P = sp.csc_matrix(prob.P) if sp.issparse(prob.P) else np.array(prob.P)
    A = sp.csc_matrix(prob.A) if sp.issparse(prob.A) else np.array(prob.A)
    q, l, u = prob.q.copy(), prob.l.copy(), prob.u.copy()
    n, m = prob.n, prob.m
    D, E, c = np.ones(n), np.ones(m), 1.0

    def scale(M, left, right):
        if sp.issparse(M):
            return sp.csc_matrix(sp.diags(left) @ M @ sp.diags(right))
        return left[:, None] * M * right[None, :]

    for _ in range(iters):
        col = np.maximum(_col_norms(P, 0), _col_norms(A, 0))
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        d[col == 0] = 1.0
        e = np.ones(m)
        if m:
            row = _col_norms(A, 1)
            e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
            e[row == 0] = 1.0
        P = scale(P, d, d)
        A = scale(A, e, d)
        q = d * q
        D, E = D * d, E * e
        pn = _col_norms(P, 0)
        gamma = max(pn.mean() if pn.size else 0.0, _norm_inf(q))
        gamma = 1.0 / np.clip(gamma, 1e-4, 1e4) if gamma > 0 else 1.0
        P, q, c = P * gamma, q * gamma, c * gamma
    with np.errstate(invalid="ignore"):
        l, u = E * l, E * u
    return P, q, A, l, u, D, E, c


def _rho_vector(l, u, rho: float) -> np.ndarray:
    rho_vec = np.full(l.size, rho)
    rho_vec[np.isinf(l) & np.isinf(u)] = 1e-6
    rho_vec[l == u] = 1e3 * rho
    return rho_vec


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def _kkt_solve(P, q, A, lower, upper, l, u, settings: QpSettings, x0=None, y0=None):
    """Solve the KKT system with the rows in ``lower | upper`` held tight.

    Active rows with a single nonzero fix their variable and are
    eliminated first, so box-constrained problems reduce to their free
    block. Iterative refinement on the delta-regularized matrix acts as a
    proximal-point iteration, so when ``P`` is singular on the active
    face the result is the solution closest to the start ``(x0, y0)``.
    """
    n, m = P.shape[0], A.shape[0]
    act = np.flatnonzero(lower | upper)
    target = np.where(lower, l, u)
    nnz = np.count_nonzero(A[act], axis=1)
    single = act[nnz == 1]
    fixed_val = np.full(n, np.nan)
    fixed_row = np.full(n, -1)
    for r in single:
        j = int(np.flatnonzero(A[r])[0])
        if fixed_row[j] < 0:
            fixed_row[j] = r
            fixed_val[j] = target[r] / A[r, j]
    fixed = fixed_row >= 0
    free = np.flatnonzero(~fixed)
    rows = np.setdiff1d(act, fixed_row[fixed])
    x = np.where(fixed, fixed_val, 0.0)

    nf, k = free.size, rows.size
    Pf = P[np.ix_(free, free)]
    Af = A[np.ix_(rows, free)]
    K = np.block([[Pf, Af.T], [Af, np.zeros((k, k))]])
    d = settings.polish_delta
    Kreg = K + np.diag(np.concatenate([np.full(nf, d), np.full(k, -d)]))
    xb = x[fixed]
    rhs = np.concatenate([-q[free] - P[np.ix_(free, fixed)] @ xb,
                          target[rows] - A[np.ix_(rows, fixed)] @ xb])
    try:
        lu = sla.lu_factor(Kreg, check_finite=False) if nf + k else None
    except (ValueError, np.linalg.LinAlgError):
        return None
    if lu is not None:
        if x0 is None:
            sol = sla.lu_solve(lu, rhs, check_finite=False)
        else:
            sol = np.concatenate([x0[free], np.zeros(k) if y0 is None else y0[rows]])
        for _ in range(settings.polish_refine_iter):
            sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            return None
        x[free] = sol[:nf]
    y = np.zeros(m)
    if lu is not None:
        y[rows] = sol[nf:]
    # Multipliers of the eliminated rows follow from stationarity.
    jf = np.flatnonzero(fixed)
    if jf.size:
        grad = P[jf] @ x + q[jf] + A[:, jf].T @ y
        r = fixed_row[jf]
        y[r] = -grad / A[r, jf]
    return x, y


def _polish(prob: QpProblem, x, z, y, settings: QpSettings, thorough=True):
    """Active-set refinement starting from the ADMM guess ``(z, y)``.

    Solves the equality-constrained KKT system on the current guess, then
    adds rows the solution violates and drops rows whose multiplier has
    the wrong sign, until the guess is consistent. ``z`` and ``y`` are in
    the units of the original problem. Without ``thorough`` the costly
    sign-consistent multiplier search is skipped.
    """
    l, u = prob.l, prob.u
    eq = l == u
    lower = ((z - l < -y) & np.isfinite(l)) | eq
    upper = (u - z < y) & np.isfinite(u) & ~eq
    P, A = _dense(prob.P), _dense(prob.A)
    tol = max(settings.eps_primal, settings.eps_dual)
    seen = set()
    xp, yp = x, y
    for _ in range(settings.polish_max_active_iter):
        key = (lower.tobytes(), upper.tobytes())
        if key in seen:
            return None
        seen.add(key)
        out = _kkt_solve(P, prob.q, A, lower, upper, l, u, settings, xp, yp)
        if out is None:
            return None
        xp, yp = out
        Ax = A @ xp
        viol_l = (Ax < l - settings.eps_primal) & ~lower
        viol_u = (Ax > u + settings.eps_primal) & ~upper
        wrong_l = lower & ~eq & (yp > tol)
        wrong_u = upper & (yp < -tol)
        if not (viol_l.any() or viol_u.any()):
            if not (wrong_l.any() or wrong_u.any()):
                return xp, yp
            if not thorough:
                return None
            ys = _sign_consistent_multipliers(prob, xp, P, A, settings)
            if prob.residuals(xp, ys)[1] <= settings.eps_dual:
                return xp, ys
        lower = (lower & ~wrong_l) | viol_l
        upper = (upper & ~wrong_u) | viol_u
    return None


def _least_distance_polish(prob: QpProblem, settings: QpSettings):
    """Exact solve of a strictly convex QP by least-distance programming.

    With ``P = L L'`` and ``v = L'(x - x_hat)`` the problem becomes
    ``min |v|`` subject to ``E v >= f``, which Lawson and Hanson reduce
    to one non-negative least-squares problem. Degenerate (linearly
    dependent) active rows are harmless here, unlike in the KKT solve.
    Returns None when ``P`` is not positive definite.
    """
    P, A = _dense(prob.P), _dense(prob.A)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return None
    x_hat = -sla.cho_solve((L, True), prob.q)
    fl, fu = np.isfinite(prob.l), np.isfinite(prob.u)
    G = np.vstack([A[fl], -A[fu]])
    h = np.concatenate([prob.l[fl], -prob.u[fu]])
    if G.shape[0] == 0:
        return x_hat, np.zeros(prob.m)
    E = sla.solve_triangular(L, G.T, lower=True).T   # G L^{-T}
    f = h - G @ x_hat
    if np.all(f <= 0):
        return x_hat, np.zeros(prob.m)
    n = prob.n
    M = np.vstack([E.T, f[None, :]])
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    t, _ = nnls(M, rhs, maxiter=max(100, 10 * M.shape[1]))
    r = M @ t - rhs
    if abs(r[n]) < 1e-14:
        return None
    v = -r[:n] / r[n]
    x = x_hat + sla.solve_triangular(L.T, v, lower=False)
    # Rebuild the active set from the multipliers and finish exactly.
    lam = t / -r[n]
    scale = max(_norm_inf(lam), 1e-300)
    on = lam > 1e-10 * scale
    m_l = int(fl.sum())
    lower = np.zeros(prob.m, bool)
    upper = np.zeros(prob.m, bool)
    lower[np.flatnonzero(fl)[on[:m_l]]] = True
    upper[np.flatnonzero(fu)[on[m_l:]]] = True
    eq = prob.l == prob.u
    lower |= eq & (lower | upper)
    upper &= ~eq
    out = _kkt_solve(P, prob.q, A, lower, upper, prob.l, prob.u, settings)
    tol = max(settings.eps_primal, settings.eps_dual)
    if out is not None:
        r_p, r_d, r_c = prob.residuals(*out)
        if r_p <= settings.eps_primal and r_d <= settings.eps_dual and r_c <= tol:
            return out
    for xc in ([out[0]] if out is not None else []) + [x]:
        yc = _sign_consistent_multipliers(prob, xc, P, A, settings)
        r_p, r_d, _ = prob.residuals(xc, yc)
        if r_p <= settings.eps_primal and r_d <= settings.eps_dual:
            return xc, yc
    return None


def _sign_consistent_multipliers(prob: QpProblem, x, P, A, settings: QpSettings):
    """Multipliers of correct sign that best satisfy stationarity at ``x``.

    Dependent active rows make the multipliers of the KKT solve
    non-unique, and the regularized solve may pick a wrong-signed
    combination; a non-negative least-squares fit over every row that is
    tight at ``x`` recovers a valid one when it exists.
    """
    Ax = A @ x
    tol = 10 * max(settings.eps_primal, 1e-12)
    at_l = np.flatnonzero(np.isfinite(prob.l) & (Ax - prob.l <= tol))
    at_u = np.flatnonzero(np.isfinite(prob.u) & (prob.u - Ax <= tol))
    g = P @ x + prob.q
    y = np.zeros(prob.m)
    if at_l.size + at_u.size == 0:
        return y
    # y = t_u - t_l with t >= 0.
    M = np.hstack([A[at_u].T, -A[at_l].T])
    t, _ = nnls(M, -g, maxiter=50 * M.shape[1])
    np.add.at(y, at_u, t[:at_u.size])
    np.add.at(y, at_l, -t[at_u.size:])
    return y


def solve(problem: QpProblem, settings: Optional[QpSettings] = None) -> QpSolution:
    """Solve ``problem`` and return a :class:`QpSolution`.

    Deterministic for fixed inputs and settings. ``status`` is SOLVED only
    when the primal, dual and complementarity residuals of the returned
    ``(x, y)`` are all within the configured tolerances (measured on the
    unscaled problem).
    """
    s = settings or QpSettings()
    prob = problem
    n, m = prob.n, prob.m
    eps = max(s.eps_primal, s.eps_dual)

    trace_fh = open(s.trace_path, "w", newline="") if s.trace_path else None
    trace = csv.writer(trace_fh) if trace_fh else None
    if trace:
        trace.writerow(["iteration", "primal_residual", "dual_residual", "rho"])

    rho = s.rho

    def finish(status, x, y, it, polished=False):
        if trace_fh:
            trace_fh.close()
        r_p, r_d, _ = prob.residuals(x, y)
        return QpSolution(x=x, y=y, status=status, primal_residual=r_p,
                          dual_residual=r_d, iterations=it,
                          objective=prob.objective(x), polished=polished, rho=rho)

    if m == 0:
        Pd = _dense(prob.P)
        x = np.linalg.lstsq(Pd, -prob.q, rcond=None)[0]
        r_d = _norm_inf(Pd @ x + prob.q)
        return finish(QpStatus.SOLVED if r_d <= s.eps_dual else QpStatus.MAX_ITER, x, np.zeros(0), 0)

    P, q, A, l, u, D, E, c = _equilibrate(prob, s.scaling_iter)

    def unscale(x, z, y):
        return D * x, z / E, E * y / c

    def try_polish(x0, z0, y0, thorough=True):
        if not s.polish:
            return None
        for attempt in (lambda: _polish(prob, x0, z0, y0, s, thorough),
                        lambda: _least_distance_polish(prob, s)):
            out = attempt()
            if out is None:
                continue
            r_p, r_d, r_c = prob.residuals(*out)
            if r_p <= s.eps_primal and r_d <= s.eps_dual and r_c <= eps:
                return out
        return None

    rho_vec = _rho_vector(l, u, rho)
    factor = _Factor(P, A, s.sigma, rho_vec)
    x = np.zeros(n)
    z = np.clip(np.zeros(m), l, u)
    y = np.zeros(m)
    alpha, sigma = s.alpha, s.sigma
    # Early polish attempts back off geometrically after each failure.
    next_polish = s.polish_interval
    it = 0
    for it in range(1, s.max_iter + 1):
        y_prev = y
        x_t = factor(sigma * x - q + A.T @ (rho_vec * z - y))
        z_t = A @ x_t
        x = alpha * x_t + (1 - alpha) * x
        z_relax = alpha * z_t + (1 - alpha) * z
        z_new = np.clip(z_relax + y / rho_vec, l, u)
        y = y + rho_vec * (z_relax - z_new)
        z = z_new

        if it % s.check_interval and it != s.max_iter:
            continue

        xo, zo, yo = unscale(x, z, y)
        Ax, Px, Aty = prob.A @ xo, prob.P @ xo, prob.A.T @ yo
        r_prim = _norm_inf(Ax - zo)
        r_dual = _norm_inf(Px + prob.q + Aty)
        if trace:
            trace.writerow([it, r_prim, r_dual, rho])

        converged = r_prim <= s.eps_primal and r_dual <= s.eps_dual
        if converged or it >= next_polish:
            polished = try_polish(xo, zo, yo, thorough=converged)
            if polished is not None:
                return finish(QpStatus.SOLVED, *polished, it, polished=True)
            if it >= next_polish:
                next_polish = 2 * it
        if converged:
            return finish(QpStatus.SOLVED, xo, yo, it)

        dy = y - y_prev
        ndy = _norm_inf(dy)
        if ndy > s.eps_infeasible:
            pos, neg = np.maximum(dy, 0), np.minimum(dy, 0)
            if np.all(np.isfinite(u) | (pos <= 0)) and np.all(np.isfinite(l) | (neg >= 0)):
                support = (np.sum(np.where(pos > 0, u, 0.0) * pos)
                           + np.sum(np.where(neg < 0, l, 0.0) * neg))
                if (_norm_inf(A.T @ dy) <= s.eps_infeasible * ndy
                        and support <= -s.eps_infeasible * ndy):
                    return finish(QpStatus.INFEASIBLE, xo, yo, it)

        if s.adaptive_rho and it % s.adaptive_rho_interval == 0:
            Axs, Pxs, Atys = A @ x, P @ x, A.T @ y
            rp = _norm_inf(Axs - z) / max(_norm_inf(Axs), _norm_inf(z), 1e-12)
            rd = _norm_inf(Pxs + q + Atys) / max(_norm_inf(Pxs), _norm_inf(Atys), _norm_inf(q), 1e-12)
            new_rho = float(np.clip(rho * np.sqrt(rp / max(rd, 1e-30)), 1e-6, 1e6))
            if new_rho > 5 * rho or new_rho < 0.2 * rho:
                rho = new_rho
                rho_vec = _rho_vector(l, u, rho)
                factor = _Factor(P, A, sigma, rho_vec)

    xo, zo, yo = unscale(x, z, y)
    polished = try_polish(xo, zo, yo)
    if polished is not None:
        return finish(QpStatus.SOLVED, *polished, it, polished=True)
    return finish(QpStatus.MAX_ITER, xo, yo, it)
