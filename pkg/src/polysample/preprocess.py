"""Starting points and facial reduction.

``initialize`` finds a point deep inside a constrained polytope by maximizing
the smallest nonnegative coordinate; ``facial_reduction`` removes coordinates
that are forced to zero, so that the result admits a strictly interior point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import lpsolve
from .errors import (
    EmptyPolytopeError,
    NumericalBreakdownError,
    UnboundedPolytopeWarning,
)
from .model import ConstrainedPolytope, FullDimPolytope

__all__ = [
    "Initialization",
    "Certificate",
    "FixedVariable",
    "FacialReductionResult",
    "DELTA_CAP",
    "strict_tol",
    "initialize",
    "initialize_full",
    "find_z",
    "select_independent_rows",
    "facial_reduction",
    "lift",
]

DELTA_CAP = 1e6
ROW_PIVOT_TOL = 1e-10


class Initialization(NamedTuple):
    x0: np.ndarray
    delta: float


class Certificate(NamedTuple):
    y: np.ndarray
    z: np.ndarray


@dataclass(frozen=True)
class FixedVariable:
    index: int  # coordinate of the original polytope, 0-based
    y: np.ndarray  # certificate over the rows in use during that round
    round: int


@dataclass(frozen=True, eq=False)
class FacialReductionResult:
    reduced: ConstrainedPolytope
    columns: np.ndarray  # original index of every reduced coordinate
    rows: np.ndarray  # original index of every reduced equality
    fixed_variables: list = field(default_factory=list)
    rounds: int = 0
    x0: np.ndarray | None = None
    delta: float = 0.0
    original_dim: int = 0

    @property
    def V(self) -> sp.csc_matrix:
        """Column selection matrix, ``x = V v``."""
        m = self.columns.size
        return sp.csc_matrix(
            (np.ones(m), (self.columns, np.arange(m))), shape=(self.original_dim, m)
        )

    @property
    def P(self) -> list:
        return self.rows.tolist()


def strict_tol(b) -> float:
    """Threshold above which an initialization margin counts as strictly positive."""
    b = np.asarray(b, dtype=float)
    return 1e-9 * (1.0 + (np.max(np.abs(b)) if b.size else 0.0))


def _z_tol(A) -> float:
    A = abs(A) if sp.issparse(A) else np.abs(np.asarray(A))
    norm = float(np.max(A.sum(axis=1))) if A.shape[0] and A.shape[1] else 0.0
    return 1e-9 * (1.0 + norm)


def initialize(p: ConstrainedPolytope) -> Initialization:
    """Maximize ``delta`` subject to ``A x = b`` and ``x[-k:] >= delta``.

    ``delta > 0`` exactly when ``p`` is strictly feasible. Raises
    :class:`EmptyPolytopeError` if ``p`` has no feasible point. If ``delta`` is
    unbounded an :class:`UnboundedPolytopeWarning` is issued and the point at
    ``delta = DELTA_CAP`` is returned.
    """
    d, k = p.d, p.k
    L = d - k
    A = p.A.toarray()
    # variables: x_free (L), y = x_tail - delta >= 0 (k), delta in [0, cap]
    A_eq = np.hstack([A[:, :L], A[:, L:], A[:, L:].sum(axis=1, keepdims=True)])
    lower = np.concatenate([np.full(L, -np.inf), np.zeros(k), [0.0]])
    upper = np.concatenate([np.full(L, np.inf), np.full(k, np.inf), [DELTA_CAP]])
    c = np.zeros(d + 1)
    c[-1] = 1.0
    sol = lpsolve.solve(lpsolve.LinearProgram(c, A_eq, p.b, var_lower=lower,
                                              var_upper=upper, maximize=True))
    if sol.status == lpsolve.INFEASIBLE:
        raise EmptyPolytopeError("polytope is empty: no x with A x = b and x[-k:] >= 0")
    if sol.status != lpsolve.OPTIMAL:
        raise NumericalBreakdownError(f"initialization LP ended with status {sol.status}")
    delta = float(sol.x[-1])
    x0 = sol.x[:d].copy()
    x0[L:] += delta
    if delta >= DELTA_CAP * (1 - 1e-9):
        warnings.warn(
            "initialization margin is unbounded; the polytope is unbounded "
            f"(returning the point at delta={DELTA_CAP:g})",
            UnboundedPolytopeWarning,
            stacklevel=2,
        )
    return Initialization(x0, delta)


def initialize_full(p: FullDimPolytope) -> Initialization:
    """Maximize ``delta`` subject to ``A v + delta * 1 <= b``."""
    k, m = p.A.shape
    A_ub = np.hstack([p.A, np.ones((k, 1))])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    lower = np.full(m + 1, -np.inf)
    upper = np.concatenate([np.full(m, np.inf), [DELTA_CAP]])
    sol = lpsolve.solve(lpsolve.LinearProgram(c, A_ub=A_ub, b_ub=p.b, var_lower=lower,
                                              var_upper=upper, maximize=True))
    if sol.status != lpsolve.OPTIMAL:
        raise NumericalBreakdownError(f"initialization LP ended with status {sol.status}")
    delta = float(sol.x[-1])
    if delta < -strict_tol(p.b):
        raise EmptyPolytopeError(f"polytope is empty (best margin {delta:.3g} < 0)")
    if delta >= DELTA_CAP * (1 - 1e-9):
        warnings.warn("initialization margin is unbounded; the polytope is unbounded",
                      UnboundedPolytopeWarning, stacklevel=2)
    return Initialization(sol.x[:m].copy(), max(delta, 0.0))


def find_z(p: ConstrainedPolytope) -> Certificate | None:
    """Search for a facial reduction certificate.

    Returns ``Certificate(y, z)`` with ``z = A^T y``, ``z[:d-k] = 0``,
    ``z[-k:] >= 0``, ``sum(z[-k:]) = 1`` and ``b^T y = 0``, or ``None`` when no
    such ``y`` exists, i.e. when ``p`` is strictly feasible.
    """
    n, d, k = p.n, p.d, p.k
    if k == 0 or n == 0:
        return None
    At = p.A.T.toarray()
    L = d - k
    A_eq = np.vstack([p.b[None, :], At[:L], At[L:].sum(axis=0, keepdims=True)])
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[-1] = 1.0
    lp = lpsolve.LinearProgram(
        np.zeros(n), A_eq, b_eq, A_ub=-At[L:], b_ub=np.zeros(k),
        var_lower=np.full(n, -np.inf), var_upper=np.full(n, np.inf),
    )
    feas = lpsolve.feasibility_certificate(lp)
    if not feas.feasible:
        return None
    y = feas.x
    return Certificate(y, p.A.T @ y)


def select_independent_rows(A, tol=ROW_PIVOT_TOL) -> np.ndarray:
    """Sorted indices of a maximal linearly independent subset of the rows of ``A``."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    if M.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = scipy.linalg.qr(M.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > tol * diag[0]))
    return np.sort(piv[:rank])


def _select_rows(A: sp.csc_matrix, b: np.ndarray):
    keep = select_independent_rows(A)
    if keep.size < A.shape[0]:
        dropped = np.setdiff1d(np.arange(A.shape[0]), keep)
        Ak = A[keep].toarray()
        coef = np.linalg.lstsq(Ak.T, A[dropped].toarray().T, rcond=None)[0]
        mismatch = np.abs(coef.T @ b[keep] - b[dropped])
        if np.any(mismatch > 1e-8 * (1 + np.max(np.abs(b)))):
            raise EmptyPolytopeError(
                f"equality rows {dropped[mismatch > 1e-8].tolist()} are inconsistent"
            )
    return keep


def facial_reduction(p: ConstrainedPolytope, max_rounds: int | None = None) -> FacialReductionResult:
    """Reduce ``p`` to an equivalent strictly feasible polytope.

    Each round looks for a certificate ``z``; every nonnegative coordinate with
    ``z_i > tol`` is fixed at zero and dropped, and a maximal independent
    subset of the remaining equality rows is kept.
    """
    columns = np.arange(p.d)
    keep = _select_rows(p.A, p.b)
    rows = keep.copy()
    A, b, k = p.A[keep], p.b[keep], p.k
    fixed = []
    rounds = 0
    max_rounds = p.k if max_rounds is None else max_rounds
    while True:
        cur = ConstrainedPolytope(A, b, k)
        init = initialize(cur)
        if init.delta > strict_tol(b):
            break
        if rounds >= max_rounds:
            raise NumericalBreakdownError(f"facial reduction did not finish in {max_rounds} rounds")
        cert = find_z(cur)
        if cert is None:
            raise NumericalBreakdownError(
                "no certificate found although the initialization margin is zero "
                f"(delta={init.delta:.3g})"
            )
        L = cur.d - k
        tail = cert.z[L:]
        hit = np.flatnonzero(tail > _z_tol(A))
        if hit.size == 0:
            raise NumericalBreakdownError("certificate has no entry above the support tolerance")
        rounds += 1
        for i in hit:
            fixed.append(FixedVariable(int(columns[L + i]), cert.y.copy(), rounds))
        mask = np.ones(cur.d, dtype=bool)
        mask[L + hit] = False
        A = A[:, np.flatnonzero(mask)]
        columns = columns[mask]
        k -= hit.size
        sel = _select_rows(A, b)
        A, b, rows = A[sel], b[sel], rows[sel]
    reduced = ConstrainedPolytope(A, b, k)
    return FacialReductionResult(
        reduced, columns, rows, fixed, rounds, init.x0, init.delta, p.d
    )


def lift(result: FacialReductionResult, v) -> np.ndarray:
    """Map a point of the reduced polytope back to the original coordinates."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != result.columns.size:
        raise ValueError(
            f"point has {v.shape[-1]} coordinates, reduced polytope has {result.columns.size}"
        )
    x = np.zeros(v.shape[:-1] + (result.original_dim,))
    x[..., result.columns] = v
    return x
