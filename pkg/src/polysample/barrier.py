"""Barrier weights and local metrics for both polytope forms.

Full-dimensional form: at an interior ``v`` with slacks ``s = b - A v`` and
weights ``w``, the metric is ``H = A^T S^-1 W S^-1 A``.

Constrained form: the metric is the diagonal ``g = S^-1 W S^-1`` (zero on the
free coordinates, padded by ``eps``) restricted to the null space of ``A``.
Its pseudo-inverse is::

    M+ = g^-1 - g^-1 A^T (A g^-1 A^T)^-1 A g^-1

so every operation only needs a factorization of the ``n x n`` matrix
``A g^-1 A^T``, which stays sparse when ``A`` is sparse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._linalg import DENSE_MAX_N, SPDFactor, logabsdet
from .errors import BoundaryError, ConvergenceError, NumericalBreakdownError, RankDeficiencyError
from .model import ConstrainedPolytope, FullDimPolytope

__all__ = [
    "WEIGHT_KINDS",
    "Weights",
    "LocalMetricDense",
    "LocalMetricSparse",
    "ConstraintSystem",
    "slack",
    "leverage_scores",
    "dikin_weights",
    "vaidya_weights",
    "john_weights",
    "ls_weights",
    "john_constants",
    "ls_constant",
    "john_objective",
    "ls_objective",
    "weights_dense",
    "weights_sparse",
    "hessian_dense",
    "metric_sparse",
    "apply_pseudo_inverse",
    "apply_sqrt_pseudo_inverse",
    "pdet",
]

WEIGHT_KINDS = ("dikin", "vaidya", "john", "lee_sidford")
DEFAULT_EPSILON = 1e-12
EPS_FLOOR = 1e-300


@dataclass(frozen=True)
class Weights:
    w: np.ndarray
    kind: str
    iterations: int = 0
    residual: float = 0.0


@dataclass(frozen=True, eq=False)
class LocalMetricDense:
    H: np.ndarray
    chol: np.ndarray  # lower triangular, chol @ chol.T == H
    logdet: float
    slack: np.ndarray
    weights: Weights


@dataclass(frozen=True, eq=False)
class LocalMetricSparse:
    g_diag: np.ndarray
    factor_AgA: SPDFactor
    epsilon: float  # absolute value added to every diagonal entry
    x: np.ndarray
    weights: Weights
    logdet_gK: float = field(default=0.0)  # log det(g) + log det(A g^-1 A^T)


def slack(p: FullDimPolytope, v) -> np.ndarray:
    """``b - A v``; raises :class:`BoundaryError` unless every entry is positive."""
    s = p.b - p.A @ np.asarray(v, dtype=float)
    if not np.all(s > 0):
        raise BoundaryError(f"point is not strictly interior (min slack {np.min(s):.3g})")
    return s


def leverage_scores(B) -> np.ndarray:
    """Diagonal of the projector ``B (B^T B)^-1 B^T``."""
    B = np.asarray(B, dtype=float)
    m, c = B.shape
    if m < c:
        raise RankDeficiencyError(f"{m}x{c} matrix cannot have full column rank")
    Q, R = np.linalg.qr(B)
    diag = np.abs(np.diag(R))
    if c and (diag.min() <= 1e-13 * max(diag.max(), 1e-300)):
        raise RankDeficiencyError("matrix does not have full column rank")
    return np.einsum("ij,ij->i", Q, Q)


# ---------------------------------------------------------------------------
# weights
#
# The iterative solvers work through a leverage oracle: ``oracle(scale)``
# returns ``(sigma, logdet, cross)``: the leverage scores of ``C = diag(scale) B``,
# the log-determinant of ``C^T C`` (up to a constant that does not depend on
# ``scale``) and, when ``need_cross`` is set, the squared entries ``P_ij^2`` of
# the projection onto the range of ``C``. Parts not asked for come back as None.


def john_constants(d_eff, k):
    """``(alpha, beta)`` of the John weight program."""
    beta = d_eff / (2.0 * k)
    alpha = 1.0 - 1.0 / np.log2(1.0 / beta)
    return alpha, beta


def ls_constant(k):
    """Exponent ``p = 1 - 2/q`` with ``q = 2 (1 + log k)``."""
    q = 2.0 * (1.0 + np.log(k))
    return 1.0 - 2.0 / q


def _dense_oracle(Bs):
    Bs = np.asarray(Bs, dtype=float)

    def oracle(scale, need_logdet=True, need_cross=False):
        C = scale[:, None] * Bs
        Q, R = np.linalg.qr(C)
        logdet = 2.0 * np.sum(np.log(np.abs(np.diag(R)))) if need_logdet else None
        cross = (Q @ Q.T) ** 2 if need_cross else None
        return np.einsum("ij,ij->i", Q, Q), logdet, cross

    return oracle


def john_objective(w, Bs, d_eff, k):
    """``sum w - (1/alpha) logdet(B^T W^alpha B) - beta sum log w``."""
    alpha, beta = john_constants(d_eff, k)
    w = np.asarray(w, dtype=float)
    _, logdet, _ = _dense_oracle(Bs)(w ** (alpha / 2))
    return np.sum(w) - logdet / alpha - beta * np.sum(np.log(w))


def ls_objective(w, Bs, k):
    """``p sum w - logdet(B^T W^p B)`` with ``p = 1 - 2/q``."""
    p = ls_constant(k)
    w = np.asarray(w, dtype=float)
    _, logdet, _ = _dense_oracle(Bs)(w ** (p / 2))
    return p * np.sum(w) - logdet


def dikin_weights(k) -> Weights:
    return Weights(np.ones(int(k)), "dikin")


def _vaidya(oracle, d_eff, k):
    sigma, _, _ = oracle(np.ones(k), False)
    return Weights(sigma + d_eff / k, "vaidya")


def vaidya_weights(Bs, d_eff, k) -> Weights:
    """Leverage scores of ``Bs`` plus ``d_eff / k``; these sum to ``2 d_eff``."""
    return Weights(leverage_scores(Bs) + d_eff / k, "vaidya")


NEWTON_MAX_K = 400


def _john(oracle, d_eff, k, w0=None, tol=1e-8, max_iter=200):
    # Newton on F(w) = sigma(W^(alpha/2) B) + beta - w, whose Jacobian is
    # alpha (diag(sigma) - P*P) W^-1 - I; a step that does not reduce |F| is
    # halved up to five times and otherwise replaced by the plain update
    # w <- sigma + beta. Large k skips Newton and iterates the update directly.
    if k <= d_eff:
        raise ValueError(f"John weights need more constraints than dimensions (k={k}, d={d_eff})")
    alpha, beta = john_constants(d_eff, k)
    w = np.ones(k) if w0 is None else np.array(w0, dtype=float)
    newton = k <= NEWTON_MAX_K

    def residual(w):
        sigma, _, cross = oracle(w ** (alpha / 2), False, newton)
        return sigma + beta - w, sigma, cross

    F, sigma, cross = residual(w)
    res = float(np.max(np.abs(F)))
    for it in range(1, max_iter + 1):
        if res < tol:
            if np.all(w >= beta):
                return Weights(w, "john", it - 1, res)
            # a Newton iterate may undershoot beta; the plain update restores w >= beta
            w = sigma + beta
            F, sigma, cross = residual(w)
            res = float(np.max(np.abs(F)))
            if res < tol:
                return Weights(w, "john", it, res)
        w_next = None
        if newton:
            J = alpha * (np.diag(sigma) - cross) / w - np.eye(k)
            try:
                step = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                step = None
            t = 1.0
            while step is not None and t > 1.0 / 32:
                w_try = w + t * step
                if np.all(w_try > 0):
                    trial = residual(w_try)
                    r_try = float(np.max(np.abs(trial[0])))
                    if r_try < res:
                        w_next, (F, sigma, cross), res = w_try, trial, r_try
                        break
                t *= 0.5
        if w_next is None:
            w_next = sigma + beta
            F, sigma, cross = residual(w_next)
            res = float(np.max(np.abs(F)))
        w = w_next
    raise ConvergenceError(
        f"John weights did not converge in {max_iter} iterations", residual=res, iterations=max_iter
    )


def john_weights(Bs, d_eff, k, w0=None, tol=1e-8, max_iter=200) -> Weights:
    """Minimizer of the John weight program.

    At the optimum ``w = sigma(W^(alpha/2) Bs) + beta``. That equation is solved
    by Newton's method with a residual line search (falling back to the
    fixed-point update ``w <- sigma + beta``) until the fixed-point residual
    is below ``tol`` in the max norm.
    """
    return _john(_dense_oracle(Bs), d_eff, k, w0, tol, max_iter)


def _lee_sidford(oracle, k, w0=None, gtol=1e-5, max_iter=2000, floor=1e-10):
    # descend in u = log w, where the gradient p (w - sigma) is well scaled even
    # for weights near zero; the floor is applied as a projection on w
    p = ls_constant(k)

    def fg(u):
        w = np.exp(u)
        sigma, logdet, _ = oracle(w ** (p / 2))
        return p * np.sum(w) - logdet, p * (w - sigma)

    def proj_grad(u, g):
        pg = g.copy()
        pg[(u <= log_floor) & (g > 0)] = 0.0
        return pg

    log_floor = np.log(floor)
    w = np.ones(k) if w0 is None else np.maximum(np.array(w0, dtype=float), floor)
    u = np.log(w)
    f, g = fg(u)
    step = 1.0
    history = [f]
    for it in range(1, max_iter + 1):
        pg = proj_grad(u, g)
        gnorm = float(np.linalg.norm(pg))
        if gnorm < gtol:
            return Weights(np.exp(u), "lee_sidford", it - 1, gnorm), history
        t = step
        while True:
            u_try = np.maximum(u - t * g, log_floor)
            f_try, g_try = fg(u_try)
            if f_try <= f + 1e-4 * g @ (u_try - u):
                break
            t *= 0.5
            if t < 1e-16:
                raise ConvergenceError("line search failed for Lee-Sidford weights",
                                       residual=gnorm, iterations=it)
        s_vec, y_vec = u_try - u, g_try - g
        sy = s_vec @ y_vec
        step = (s_vec @ s_vec) / sy if sy > 0 else 2.0 * t
        u, f, g = u_try, f_try, g_try
        history.append(f)
    raise ConvergenceError("Lee-Sidford weights did not converge",
                           residual=float(np.linalg.norm(proj_grad(u, g))), iterations=max_iter)


def ls_weights(Bs, d_eff, k, w0=None, gtol=1e-5, max_iter=2000) -> Weights:
    """Minimizer of the Lee-Sidford weight program by projected gradient descent.

    The descent runs in log-weights, where the gradient is ``p (w - sigma)``.
    Steps are Barzilai-Borwein initial lengths shortened by Armijo backtracking
    (constant 1e-4, factor 0.5); weights are kept at or above ``1e-10`` and the
    iteration stops when the projected gradient norm drops below ``gtol``.
    """
    if k <= d_eff:
        raise ValueError(f"Lee-Sidford weights need k > d (k={k}, d={d_eff})")
    return _lee_sidford(_dense_oracle(Bs), k, w0, gtol, max_iter)[0]


def weights_dense(kind, Bs, d_eff, k, w0=None) -> Weights:
    if kind == "dikin":
        return dikin_weights(k)
    if kind == "vaidya":
        return vaidya_weights(Bs, d_eff, k)
    if kind == "john":
        return john_weights(Bs, d_eff, k, w0)
    if kind == "lee_sidford":
        return ls_weights(Bs, d_eff, k, w0)
    raise ValueError(f"unknown weight kind {kind!r}")


# ---------------------------------------------------------------------------
# dense metric


def hessian_dense(p: FullDimPolytope, v, w=None) -> LocalMetricDense:
    """``H = A^T S^-1 W S^-1 A`` at ``v`` with its Cholesky factor."""
    s = slack(p, v)
    weights = w if isinstance(w, Weights) else Weights(
        np.ones(p.k) if w is None else np.asarray(w, dtype=float), "custom"
    )
    B = p.A / s[:, None]
    H = B.T @ (weights.w[:, None] * B)
    try:
        L = scipy.linalg.cholesky(H, lower=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise BoundaryError(f"Hessian is not positive definite near the boundary: {exc}") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    if not np.isfinite(logdet):
        raise BoundaryError("Hessian determinant overflowed near the boundary")
    return LocalMetricDense(H, L, logdet, s, weights)


# ---------------------------------------------------------------------------
# sparse metric


class ConstraintSystem:
    """Per-polytope cache of the pieces every sparse metric needs."""

    def __init__(self, p: ConstrainedPolytope):
        self.p = p
        self.A = p.A
        self.AT = p.A.T.tocsr()
        self.small = p.n <= 64
        self.A_dense = p.A.toarray() if self.small else None
        self.L = p.d - p.k

    def normal_matrix(self, ginv):
        """``A diag(ginv) A^T``."""
        if self.small:
            return (self.A_dense * ginv) @ self.A_dense.T
        template, contrib = self._normal_pattern
        K = template.copy()
        K.data = contrib @ ginv
        return K

    @cached_property
    def _normal_pattern(self):
        # every entry of A D A^T is a fixed linear combination of the diagonal of D:
        # (i, j) collects A_ik A_jk over the columns k holding both rows
        A = self.A
        n, d = A.shape
        absA = abs(A)
        template = (absA @ absA.T).tocsc()
        template.sort_indices()
        cnt = np.diff(A.indptr)
        col_of = np.repeat(np.arange(d), cnt)
        rep = cnt[col_of]
        left = np.repeat(np.arange(A.nnz), rep)
        offset = np.arange(left.size) - np.repeat(np.cumsum(rep) - rep, rep)
        right = A.indptr[col_of[left]] + offset
        tcols = np.repeat(np.arange(n), np.diff(template.indptr))
        keys = tcols.astype(np.int64) * n + template.indices
        pos = np.searchsorted(keys, A.indices[right].astype(np.int64) * n + A.indices[left])
        contrib = sp.csr_matrix(
            (A.data[left] * A.data[right], (pos, col_of[left])), shape=(template.nnz, d)
        )
        return template, contrib

    def matvec(self, u):
        return self.A_dense @ u if self.small else self.A @ u

    def rmatvec(self, y):
        return self.A_dense.T @ y if self.small else self.AT @ y

    @cached_property
    def logdet_AAt(self) -> float:
        return SPDFactor(self.normal_matrix(np.ones(self.p.d))).logdet

    @cached_property
    def AAt_factor(self) -> SPDFactor:
        return SPDFactor(self.normal_matrix(np.ones(self.p.d)))

    @cached_property
    def _saddle(self):
        # [I A^T; A 0] once; each call only overwrites the leading diagonal
        d, n = self.p.d, self.p.n
        K = sp.bmat([[sp.identity(d), self.AT], [self.A, None]], format="csc")
        if n == 0:
            K = sp.identity(d, format="csc")
        if d + n <= 4 * DENSE_MAX_N:
            return K.toarray(), None
        K.sort_indices()
        cols = np.repeat(np.arange(K.shape[1]), np.diff(K.indptr))
        pos = np.flatnonzero((K.indices == cols) & (cols < d))
        return K, pos

    def saddle_logdet(self, g) -> float:
        """``log |det [diag(g) A^T; A 0]|``."""
        K, pos = self._saddle
        K = K.copy()
        if pos is None:
            idx = np.arange(self.p.d)
            K[idx, idx] = g
        else:
            K.data[pos] = g
        return logabsdet(K)


def system(p: ConstrainedPolytope) -> ConstraintSystem:
    """The cached :class:`ConstraintSystem` of ``p``."""
    cache = p.__dict__.get("_system")
    if cache is None:
        cache = ConstraintSystem(p)
        p.__dict__["_system"] = cache
    return cache


def _refine_steps(p: ConstrainedPolytope) -> int:
    # eps on the free block makes A g^-1 A^T ill-conditioned; refinement recovers the digits
    return 2 if p.k < p.d else 0


def _pinv_solve(sysm: ConstraintSystem, g, factor, U, refine):
    """``M+ U`` from the saddle-point system ``[g A^T; A 0] [P; lam] = [U; 0]``.

    The first solve uses the normal equations; each refinement step recomputes
    the saddle-point residual from ``A`` and ``g`` directly.
    """
    gcol = g if U.ndim == 1 else g[:, None]
    GU = U / gcol
    lam = factor.solve(sysm.matvec(GU))
    P = GU - sysm.rmatvec(lam) / gcol
    for _ in range(refine):
        R1 = U - gcol * P - sysm.rmatvec(lam)
        R2 = -sysm.matvec(P)
        dlam = factor.solve(sysm.matvec(R1 / gcol) - R2)
        P = P + (R1 - sysm.rmatvec(dlam)) / gcol
        lam = lam + dlam
    return P


def _sparse_oracle(sysm: ConstraintSystem, xt, epsilon):
    """Leverage oracle for ``S^-1 Q2_tail`` in the constrained form.

    With ``D = diag(scale) S^-1`` the scores are ``D_i^2 (M+)_ii`` for the metric
    ``g = D^2`` on the nonnegative block.
    """
    p = sysm.p
    d, L, k = p.d, sysm.L, p.k
    base = 1.0 / xt**2
    eps_abs = max(epsilon * base.max(), EPS_FLOOR)
    refine = _refine_steps(p)
    E = np.zeros((d, k))
    E[np.arange(L, d), np.arange(k)] = 1.0

    def oracle(scale, need_logdet=True, need_cross=False):
        g = np.full(d, eps_abs)
        gt = scale**2 * base
        g[L:] = gt + eps_abs
        factor = SPDFactor(sysm.normal_matrix(1.0 / g))
        Pm = _pinv_solve(sysm, g, factor, E, refine)
        sigma = gt * Pm[np.arange(L, d), np.arange(k)]
        cross = None
        if need_cross:
            rg = np.sqrt(gt)
            cross = (rg[:, None] * Pm[L:] * rg[None, :]) ** 2
        if not need_logdet:
            logdet = None
        elif L:
            logdet = sysm.saddle_logdet(g)
        else:
            logdet = float(np.sum(np.log(g))) + factor.logdet
        return np.clip(sigma, 0.0, 1.0), logdet, cross

    return oracle


def weights_sparse(kind, p: ConstrainedPolytope, x, epsilon=DEFAULT_EPSILON, w0=None) -> Weights:
    """Barrier weights at ``x`` computed without forming the full-dimensional form."""
    k, d_eff = p.k, p.d_eff
    if kind == "dikin":
        return dikin_weights(k)
    xt = np.asarray(x, dtype=float)[p.nonneg]
    if not np.all(xt > 0):
        raise BoundaryError("point is not strictly interior")
    oracle = _sparse_oracle(system(p), xt, epsilon)
    if kind == "vaidya":
        return _vaidya(oracle, d_eff, k)
    if kind == "john":
        return _john(oracle, d_eff, k, w0)
    if kind == "lee_sidford":
        return _lee_sidford(oracle, k, w0)[0]
    raise ValueError(f"unknown weight kind {kind!r}")


def metric_sparse(p: ConstrainedPolytope, x, w=None, epsilon=DEFAULT_EPSILON) -> LocalMetricSparse:
    """Local metric ``g = S^-1 W S^-1 + eps`` at ``x`` and the factor of ``A g^-1 A^T``.

    ``epsilon`` is relative to the largest entry of ``S^-1 W S^-1``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive: the free block of g is otherwise singular")
    x = np.asarray(x, dtype=float)
    xt = x[p.nonneg]
    if not np.all(xt > 0):
        raise BoundaryError(f"point is not strictly interior (min coordinate {np.min(xt):.3g})")
    weights = w if isinstance(w, Weights) else Weights(
        np.ones(p.k) if w is None else np.asarray(w, dtype=float), "custom"
    )
    gt = weights.w / xt**2
    eps_abs = max(epsilon * (gt.max() if gt.size else 1.0), EPS_FLOOR)
    g = np.full(p.d, eps_abs)
    g[p.nonneg] = gt + eps_abs
    if not np.all(np.isfinite(g)):
        raise BoundaryError("metric overflowed near the boundary")
    sysm = system(p)
    try:
        factor = SPDFactor(sysm.normal_matrix(1.0 / g))
    except NumericalBreakdownError as exc:
        raise BoundaryError(f"metric factorization failed: {exc}") from exc
    if p.k == p.d:
        logdet_gK = float(np.sum(np.log(g))) + factor.logdet
    else:
        # |det [g A^T; A 0]| = det(g) det(A g^-1 A^T), without the rounding of A g^-1 A^T
        logdet_gK = sysm.saddle_logdet(g)
    return LocalMetricSparse(g, factor, eps_abs, x, weights, logdet_gK)


def apply_pseudo_inverse(m: LocalMetricSparse, A, u) -> np.ndarray:
    """``M+ u = g^-1 u - g^-1 A^T (A g^-1 A^T)^-1 A g^-1 u``.

    ``A`` is the polytope the metric was built for. ``u`` may be a vector or a
    matrix of column vectors.
    """
    sysm = system(A)
    return _pinv_solve(sysm, m.g_diag, m.factor_AgA, np.asarray(u, dtype=float),
                       _refine_steps(A))


def apply_sqrt_pseudo_inverse(m: LocalMetricSparse, A, zeta) -> np.ndarray:
    """``R zeta`` with ``R = g^-1/2 - g^-1 A^T (A g^-1 A^T)^-1 A g^-1/2``.

    ``R R^T = M+``. Note ``R zeta = M+ (g^1/2 zeta)``, which is how it is evaluated.
    """
    zeta = np.asarray(zeta, dtype=float)
    rs = np.sqrt(m.g_diag)
    return apply_pseudo_inverse(m, A, zeta * (rs if zeta.ndim == 1 else rs[:, None]))


def pdet(m: LocalMetricSparse, A) -> float:
    """``log pdet(M) = log det g + log det(A g^-1 A^T) - log det(A A^T)``."""
    return m.logdet_gK - system(A).logdet_AAt
