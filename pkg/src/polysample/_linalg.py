"""Factorizations of small dense or large sparse SPD matrices."""

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalBreakdownError

DENSE_MAX_N = 64
DENSE_MAX_FILL = 0.25


class SPDFactor:
    """Factor a symmetric positive definite matrix for repeated solves.

    Small or dense matrices use a Cholesky factorization; large sparse ones
    use SuperLU with a symmetric fill-reducing ordering and diagonal pivots,
    which is an LDL^T in disguise.
    """

    def __init__(self, K):
        n = K.shape[0]
        self.n = n
        if n == 0:
            self._kind = "empty"
            self.logdet = 0.0
            return
        if sp.issparse(K):
            if n <= DENSE_MAX_N or K.nnz > DENSE_MAX_FILL * n * n:
                K = K.toarray()
        if sp.issparse(K):
            self._kind = "sparse"
            try:
                lu = spla.splu(
                    sp.csc_matrix(K),
                    permc_spec="MMD_AT_PLUS_A",
                    diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True},
                )
            except RuntimeError as exc:
                raise NumericalBreakdownError(f"sparse factorization failed: {exc}") from exc
            piv = lu.U.diagonal()
            if not np.all(piv > 0) or not np.all(np.isfinite(piv)):
                raise NumericalBreakdownError("matrix is not numerically positive definite")
            self._lu = lu
            self.logdet = float(np.sum(np.log(piv)))
        else:
            self._kind = "dense"
            K = np.asarray(K, dtype=float)
            try:
                c = scipy.linalg.cho_factor(K, lower=True, check_finite=True)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NumericalBreakdownError(f"Cholesky factorization failed: {exc}") from exc
            self._chol = c
            self.logdet = float(2.0 * np.sum(np.log(np.diag(c[0]))))

    @property
    def is_sparse(self):
        return self._kind == "sparse"

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self._kind == "empty":
            return np.zeros_like(rhs)
        if self._kind == "dense":
            return scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        return self._lu.solve(rhs)


def logabsdet(M) -> float:
    """``log |det M|`` of a square (possibly indefinite) matrix via LU with pivoting."""
    n = M.shape[0]
    if n == 0:
        return 0.0
    if sp.issparse(M) and n > 4 * DENSE_MAX_N:
        try:
            lu = spla.splu(sp.csc_matrix(M), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalBreakdownError(f"sparse LU failed: {exc}") from exc
        piv = lu.U.diagonal()
    else:
        M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        try:
            lu, _ = scipy.linalg.lu_factor(M, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise NumericalBreakdownError(f"LU factorization failed: {exc}") from exc
        piv = np.diag(lu)
    if np.any(piv == 0) or not np.all(np.isfinite(piv)):
        raise NumericalBreakdownError("matrix is singular")
    return float(np.sum(np.log(np.abs(piv))))
