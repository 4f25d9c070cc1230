"""A small, deterministic two-phase simplex solver.

The preprocessing code only ever solves desk-scale LPs (initialization and
facial reduction certificates), so the basis inverse is kept dense and
updated in product form, with a full refactorization every
``REFACTOR_EVERY`` pivots. Pricing and the ratio test both follow Bland's
rule, so the pivot sequence is a pure function of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConvergenceError, NumericalBreakdownError

__all__ = ["LinearProgram", "LPSolution", "Feasibility", "solve", "feasibility_certificate"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
MAX_REFACTOR_RETRIES = 3


def _dense(M, n_cols):
    if M is None:
        return np.zeros((0, n_cols))
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, n_cols))
    return np.atleast_2d(M)


@dataclass
class LinearProgram:
    """``min (or max) c^T x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, lower <= x <= upper``.

    Missing bounds default to ``0 <= x < inf``.
    """

    objective: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray = None
    A_ub: object = None
    b_ub: np.ndarray = None
    var_lower: np.ndarray = None
    var_upper: np.ndarray = None
    maximize: bool = False

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        nv = self.objective.size
        self.A_eq = _dense(self.A_eq, nv)
        self.A_ub = _dense(self.A_ub, nv)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, float).ravel()
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, float).ravel()
        self.var_lower = (
            np.zeros(nv) if self.var_lower is None else np.asarray(self.var_lower, float).ravel()
        )
        self.var_upper = (
            np.full(nv, np.inf)
            if self.var_upper is None
            else np.asarray(self.var_upper, float).ravel()
        )
        for name, M, v in (("eq", self.A_eq, self.b_eq), ("ub", self.A_ub, self.b_ub)):
            if M.shape[1] != nv or M.shape[0] != v.size:
                raise ValueError(
                    f"A_{name} has shape {M.shape}, expected ({v.size}, {nv})"
                )
        if self.var_lower.size != nv or self.var_upper.size != nv:
            raise ValueError("bound vectors must match the objective length")
        if np.any(self.var_lower == np.inf) or np.any(self.var_upper == -np.inf):
            raise ValueError("lower bounds of +inf or upper bounds of -inf are not allowed")
        if np.any(self.var_lower > self.var_upper):
            bad = np.flatnonzero(self.var_lower > self.var_upper)
            raise ValueError(f"lower bound exceeds upper bound for variables {bad.tolist()}")

    @property
    def n_vars(self):
        return self.objective.size


@dataclass
class LPSolution:
    status: str
    x: np.ndarray = field(default=None)
    objective_value: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


class Feasibility(NamedTuple):
    feasible: bool
    x: np.ndarray | None


# ---------------------------------------------------------------------------


class _StandardForm:
    """``min c^T y  s.t.  M y = h, y >= 0`` with ``x = T y + t0``."""

    def __init__(self, lp: LinearProgram):
        nv = lp.n_vars
        lo, up = lp.var_lower, lp.var_upper
        T_cols = []  # (x index, sign)
        t0 = np.zeros(nv)
        bound_rows = []  # (y columns, coefficients, rhs)
        for j in range(nv):
            if np.isfinite(lo[j]):
                t0[j] = lo[j]
                T_cols.append((j, 1.0))
                if np.isfinite(up[j]):
                    bound_rows.append(([len(T_cols) - 1], [1.0], up[j] - lo[j]))
            else:
                # split free variables; an upper bound becomes an explicit row
                # (reflecting about a large bound would cancel digits)
                T_cols.append((j, 1.0))
                T_cols.append((j, -1.0))
                if np.isfinite(up[j]):
                    bound_rows.append(([len(T_cols) - 2, len(T_cols) - 1], [1.0, -1.0], up[j]))
        ny = len(T_cols)
        T = np.zeros((nv, ny))
        for col, (j, s) in enumerate(T_cols):
            T[j, col] = s
        m_eq, m_ub, m_bd = lp.A_eq.shape[0], lp.A_ub.shape[0], len(bound_rows)
        n_slack = m_ub + m_bd
        M = np.zeros((m_eq + m_ub + m_bd, ny + n_slack))
        h = np.zeros(m_eq + m_ub + m_bd)
        M[:m_eq, :ny] = lp.A_eq @ T
        h[:m_eq] = lp.b_eq - lp.A_eq @ t0
        M[m_eq:m_eq + m_ub, :ny] = lp.A_ub @ T
        M[m_eq:m_eq + m_ub, ny:ny + m_ub] = np.eye(m_ub)
        h[m_eq:m_eq + m_ub] = lp.b_ub - lp.A_ub @ t0
        for i, (cols, coefs, rhs) in enumerate(bound_rows):
            r = m_eq + m_ub + i
            M[r, cols] = coefs
            M[r, ny + m_ub + i] = 1.0
            h[r] = rhs
        sign = 1.0 if not lp.maximize else -1.0
        c = np.zeros(ny + n_slack)
        c[:ny] = sign * (lp.objective @ T)
        self.c0 = sign * float(lp.objective @ t0)
        self.sign = sign
        self.M, self.h, self.c = M, h, c
        self.T = np.hstack([T, np.zeros((nv, n_slack))])
        self.t0 = t0

    def to_x(self, y):
        return self.T @ y + self.t0


class _Simplex:
    def __init__(self, M, h, max_iter):
        m, N = M.shape
        flip = h < 0
        M = M.copy()
        h = h.copy()
        M[flip] *= -1
        h[flip] *= -1
        # artificial columns occupy N..N+m-1
        self.M = np.hstack([M, np.eye(m)])
        self.h = h
        self.m, self.N = m, N
        self.basis = list(range(N, N + m))
        self.Binv = np.eye(m)
        self.xB = h.copy()
        self.iterations = 0
        self.since_refactor = 0
        self.max_iter = max_iter

    def refactor(self):
        B = self.M[:, self.basis]
        eye = np.eye(self.m)
        for invert in (np.linalg.inv, scipy.linalg.inv, np.linalg.pinv):
            try:
                Binv = invert(B)
            except (np.linalg.LinAlgError, ValueError):
                continue
            if np.all(np.isfinite(Binv)) and np.max(np.abs(Binv @ B - eye)) < 1e-6:
                self.Binv = Binv
                xB = Binv @ self.h
                xB[np.abs(xB) < FEAS_TOL * 1e-3] = 0.0
                self.xB = xB
                self.since_refactor = 0
                return
        raise NumericalBreakdownError(
            f"basis factorization failed after {MAX_REFACTOR_RETRIES} attempts"
        )

    def run(self, c, allowed):
        """Minimize ``c`` over the current basis; return OPTIMAL or UNBOUNDED."""
        is_basic = np.zeros(self.M.shape[1], dtype=bool)
        is_basic[self.basis] = True
        while True:
            if self.iterations >= self.max_iter:
                raise ConvergenceError(
                    f"simplex iteration limit {self.max_iter} reached", iterations=self.iterations
                )
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
            cB = c[self.basis]
            pi = cB @ self.Binv
            r = c - pi @ self.M
            cand = np.flatnonzero((r < -OPT_TOL) & allowed & ~is_basic)
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0])
            dcol = self.Binv @ self.M[:, j]
            mask = dcol > PIVOT_TOL
            if not np.any(mask):
                return UNBOUNDED
            rows = np.flatnonzero(mask)
            ratios = np.maximum(self.xB[rows], 0.0) / dcol[rows]
            tmin = ratios.min()
            ties = rows[ratios <= tmin + 1e-12 * (1.0 + tmin)]
            leave = min(ties, key=lambda i: self.basis[i])
            self.pivot(leave, j, dcol, tmin)
            is_basic[:] = False
            is_basic[self.basis] = True

    def pivot(self, row, j, dcol, theta):
        self.xB = self.xB - theta * dcol
        self.xB[row] = theta
        piv = dcol[row]
        Binv = self.Binv
        pivot_row = Binv[row] / piv
        Binv -= np.outer(dcol, pivot_row)
        Binv[row] = pivot_row
        self.basis[row] = j
        self.iterations += 1
        self.since_refactor += 1

    def drive_out_artificials(self):
        """Pivot zero-level artificials out of the basis where a real column allows it."""
        for row in range(self.m):
            if self.basis[row] < self.N:
                continue
            row_of_binv = self.Binv[row]
            vals = row_of_binv @ self.M[:, : self.N]
            basic = set(self.basis)
            for j in np.flatnonzero(np.abs(vals) > 1e-7):
                if int(j) in basic:
                    continue
                dcol = self.Binv @ self.M[:, j]
                self.pivot(row, int(j), dcol, 0.0)
                break

    def y(self):
        y = np.zeros(self.M.shape[1])
        y[self.basis] = self.xB
        return y


def _check_empty_rows(lp):
    """Presolve: drop all-zero rows, detecting trivially inconsistent ones."""
    if lp.A_eq.shape[0]:
        empty = ~np.any(lp.A_eq != 0, axis=1)
        if np.any(np.abs(lp.b_eq[empty]) > FEAS_TOL):
            return None
        lp.A_eq, lp.b_eq = lp.A_eq[~empty], lp.b_eq[~empty]
    if lp.A_ub.shape[0]:
        empty = ~np.any(lp.A_ub != 0, axis=1)
        if np.any(lp.b_ub[empty] < -FEAS_TOL):
            return None
        lp.A_ub, lp.b_ub = lp.A_ub[~empty], lp.b_ub[~empty]
    return lp


def solve(lp: LinearProgram, max_iter: int | None = None) -> LPSolution:
    """Solve ``lp`` with the two-phase simplex method.

    Returns an :class:`LPSolution` whose status is ``"optimal"``,
    ``"infeasible"`` or ``"unbounded"``. Raises
    :class:`~polysample.errors.NumericalBreakdownError` when the basis cannot
    be refactorized.
    """
    lp = LinearProgram(
        lp.objective, lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.var_lower, lp.var_upper, lp.maximize
    )
    if _check_empty_rows(lp) is None:
        return LPSolution(INFEASIBLE)
    sf = _StandardForm(lp)
    m, N = sf.M.shape
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    if m == 0:
        # no constraints: bounded iff no negative cost on a nonnegative direction
        if np.any(sf.c < -OPT_TOL):
            return LPSolution(UNBOUNDED)
        y = np.zeros(N)
        x = sf.to_x(y)
        return LPSolution(OPTIMAL, x, float(lp.objective @ x))

    spx = _Simplex(sf.M, sf.h, max_iter)
    phase1 = np.concatenate([np.zeros(N), np.ones(m)])
    allowed = np.ones(N + m, dtype=bool)
    spx.run(phase1, allowed)
    spx.refactor()
    infeas = float(np.sum(spx.xB[np.array(spx.basis) >= N]))
    if infeas > FEAS_TOL * (1.0 + np.max(np.abs(sf.h))):
        return LPSolution(INFEASIBLE, iterations=spx.iterations)
    spx.drive_out_artificials()
    spx.refactor()

    allowed[N:] = False
    phase2 = np.concatenate([sf.c, np.zeros(m)])
    status = spx.run(phase2, allowed)
    if status == UNBOUNDED:
        return LPSolution(UNBOUNDED, iterations=spx.iterations)
    spx.refactor()
    y = spx.y()[:N]
    y = np.maximum(y, 0.0)
    x = sf.to_x(y)
    return LPSolution(OPTIMAL, x, float(lp.objective @ x), spx.iterations)


def feasibility_certificate(lp: LinearProgram) -> Feasibility:
    """Phase one only: a feasible point of ``lp`` or a declaration of infeasibility."""
    probe = LinearProgram(
        np.zeros(lp.n_vars), lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.var_lower, lp.var_upper
    )
    sol = solve(probe)
    if sol.status == INFEASIBLE:
        return Feasibility(False, None)
    return Feasibility(True, sol.x)
