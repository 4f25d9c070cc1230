"""Polytope representations, structured generators and the QR bridge.

Two forms are supported:

* constrained (``K2``): ``{x in R^d : A x = b, x[d-k:] >= 0}`` with a sparse ``A``;
* full-dimensional (``K1``): ``{v in R^m : A v <= b}`` with a dense ``A``.

:func:`to_full_dimensional` links them through a QR decomposition of ``A^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DegeneratePolytopeError, EmptyPolytopeError, RankDeficiencyError

__all__ = [
    "AffineMap",
    "ConstrainedPolytope",
    "FullDimPolytope",
    "as_sparse",
    "make_simplex",
    "make_hypercube",
    "make_birkhoff",
    "generator_center",
    "to_full_dimensional",
    "membership",
    "matrix_rank",
]

RANK_TOL = 1e-10


def as_sparse(A) -> sp.csc_matrix:
    """Return a canonical CSC copy of ``A``: duplicates summed, explicit zeros dropped."""
    if sp.issparse(A):
        M = sp.csc_matrix(A, dtype=float, copy=True)
    else:
        M = sp.csc_matrix(np.atleast_2d(np.asarray(A, dtype=float)))
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ConstrainedPolytope:
    """``{x : A x = b, last k coordinates >= 0}``."""

    A: sp.csc_matrix
    b: np.ndarray
    k: int

    def __post_init__(self):
        A = as_sparse(self.A)
        b = _readonly(np.ravel(self.b))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "k", int(self.k))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        if not 0 <= self.k <= A.shape[1]:
            raise ValueError(f"k={self.k} must lie in [0, {A.shape[1]}]")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def d_eff(self) -> int:
        """Dimension of the affine hull, assuming ``A`` has full row rank."""
        return self.d - self.n

    @property
    def nnz(self) -> int:
        return self.A.nnz

    @property
    def free(self) -> slice:
        return slice(0, self.d - self.k)

    @property
    def nonneg(self) -> slice:
        return slice(self.d - self.k, self.d)

    def triplets(self):
        """Row, column and value arrays of the stored entries (column-major order)."""
        coo = self.A.tocoo()
        return coo.row, coo.col, coo.data

    def __eq__(self, other):
        if not isinstance(other, ConstrainedPolytope):
            return NotImplemented
        return (
            self.k == other.k
            and self.A.shape == other.A.shape
            and np.array_equal(self.b, other.b)
            and (self.A != other.A).nnz == 0
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x = Q2 v + shift``; parametrizes ``{A x = b}`` by ``v``."""

    Q2: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q2", _readonly(self.Q2))
        object.__setattr__(self, "shift", _readonly(self.shift))

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        return v @ self.Q2.T + self.shift

    def pullback(self, x):
        """Least-squares inverse of :meth:`apply` (exact for points of the affine hull)."""
        x = np.asarray(x, dtype=float)
        return (x - self.shift) @ self.Q2


@dataclass(frozen=True, eq=False)
class FullDimPolytope:
    """``{v : A v <= b}``, optionally with the map back to a constrained form."""

    A: np.ndarray
    b: np.ndarray
    map: AffineMap | None = field(default=None)

    def __post_init__(self):
        A = _readonly(np.atleast_2d(self.A))
        b = _readonly(np.ravel(self.b))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def d_eff(self) -> int:
        return self.dim

    def check_bounded(self):
        """Raise unless the rows of ``A`` span the whole space (needed for an invertible Hessian)."""
        if self.k < self.dim or matrix_rank(self.A) < self.dim:
            raise DegeneratePolytopeError(
                "constraint normals do not span R^%d; the polytope is unbounded "
                "and barrier Hessians are singular" % self.dim
            )


def matrix_rank(M, tol=RANK_TOL) -> int:
    """Numerical rank via column-pivoted QR."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    R = scipy.linalg.qr(M, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


# ---------------------------------------------------------------------------
# structured families


def make_simplex(d: int) -> ConstrainedPolytope:
    """``{x in R^d : sum(x) = 1, x >= 0}``."""
    if d < 2:
        raise DegeneratePolytopeError(f"simplex needs d >= 2, got d={d}")
    return ConstrainedPolytope(sp.csc_matrix(np.ones((1, d))), np.ones(1), d)


def make_hypercube(m: int) -> ConstrainedPolytope:
    """The cube ``[-1, 1]^m`` with two slacks per coordinate.

    Variables are ordered ``(x, s, t)`` with rows ``x_i + s_i = 1`` followed by
    ``-x_i + t_i = 1``; the ``2m`` slacks are the nonnegative block.
    """
    if m < 1:
        raise EmptyPolytopeError(f"hypercube needs m >= 1, got m={m}")
    I = sp.identity(m, format="csc")
    Z = sp.csc_matrix((m, m))
    A = sp.bmat([[I, I, Z], [-I, Z, I]], format="csc")
    return ConstrainedPolytope(A, np.ones(2 * m), 2 * m)


def make_birkhoff(m: int) -> ConstrainedPolytope:
    """Doubly stochastic ``m x m`` matrices, flattened row-major.

    The last column-sum row is dropped, leaving ``2m - 1`` independent rows.
    """
    if m < 2:
        raise DegeneratePolytopeError(f"Birkhoff polytope needs m >= 2, got m={m}")
    rows, cols = [], []
    for i in range(m):
        for j in range(m):
            rows.append(i)
            cols.append(i * m + j)
    for j in range(m - 1):
        for i in range(m):
            rows.append(m + j)
            cols.append(i * m + j)
    A = sp.csc_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * m - 1, m * m))
    return ConstrainedPolytope(A, np.ones(2 * m - 1), m * m)


def generator_center(name: str, size: int) -> np.ndarray:
    """Known strictly interior point of a generator polytope (no LP needed)."""
    if name == "simplex":
        return np.full(size, 1.0 / size)
    if name == "hypercube":
        return np.concatenate([np.zeros(size), np.ones(2 * size)])
    if name == "birkhoff":
        return np.full(size * size, 1.0 / size)
    raise ValueError(f"unknown generator {name!r}")


# ---------------------------------------------------------------------------
# QR bridge


def _dependent_rows(A: np.ndarray, tol=RANK_TOL):
    """Indices of rows of ``A`` that are linear combinations of earlier-pivoted rows."""
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0:
        return list(range(A.shape[0]))
    rank = int(np.sum(diag > tol * diag[0]))
    return sorted(int(i) for i in piv[rank:])


def to_full_dimensional(p: ConstrainedPolytope) -> FullDimPolytope:
    """Return the inequality form ``{v : A_t v <= b_t}`` of ``p``.

    ``A^T = Q R`` with ``Q = [Q1 Q2]``; points of ``p`` are ``x = Q2 v + Q1 R1^{-T} b``
    and the nonnegativity of the last ``k`` coordinates becomes ``-Q2[-k:] v <= shift[-k:]``.
    """
    A = p.A.toarray()
    n, d = A.shape
    if n >= d:
        raise DegeneratePolytopeError(f"need fewer equalities than variables (n={n}, d={d})")
    Q, R = np.linalg.qr(A.T, mode="complete")
    R1 = R[:n, :n]
    diag = np.abs(np.diag(R1))
    scale = max(np.max(np.abs(R1)) if R1.size else 0.0, 1.0)
    if n and np.min(diag) <= RANK_TOL * scale:
        rows = _dependent_rows(A)
        raise RankDeficiencyError(
            f"constraint matrix is rank deficient; dependent rows: {rows}", rows
        )
    Q1, Q2 = Q[:, :n], Q[:, n:]
    shift = Q1 @ scipy.linalg.solve_triangular(R1, p.b, trans="T") if n else np.zeros(d)
    tail = slice(d - p.k, d)
    return FullDimPolytope(-Q2[tail], shift[tail], AffineMap(Q2, shift))


# ---------------------------------------------------------------------------
# membership


def membership(p, x, strict: bool = False) -> bool:
    """Feasibility test for either form.

    Constrained form: ``|A x - b|_inf <= 1e-8 (1 + |b|_inf)`` and the last ``k``
    coordinates are ``> 0`` (strict) or ``>= -1e-12``. Full-dimensional form:
    ``A v < b`` (strict) or ``A v <= b + 1e-12``.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(p, FullDimPolytope):
        if x.shape != (p.dim,):
            raise ValueError(f"point has shape {x.shape}, expected ({p.dim},)")
        s = p.b - p.A @ x
        return bool(np.all(s > 0)) if strict else bool(np.all(s >= -1e-12))
    if x.shape != (p.d,):
        raise ValueError(f"point has shape {x.shape}, expected ({p.d},)")
    tol_eq = 1e-8 * (1.0 + (np.max(np.abs(p.b)) if p.n else 0.0))
    if p.n and np.max(np.abs(p.A @ x - p.b)) > tol_eq:
        return False
    tail = x[p.nonneg]
    return bool(np.all(tail > 0)) if strict else bool(np.all(tail >= -1e-12))
