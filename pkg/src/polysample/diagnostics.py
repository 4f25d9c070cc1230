"""Chain diagnostics: effective sample size and a radial uniformity test.

ESS uses Geyer's initial positive sequence: autocorrelations are summed in
adjacent pairs until the first pair whose sum is not positive.

The radial test draws the ray from a center ``x0`` through each sample to the
boundary. If ``x`` is uniform on a convex body, the ratio
``u = |x - x0| / |boundary point - x0|`` satisfies ``u^d ~ Uniform[0, 1]``
where ``d`` is the dimension of the body, so ``{u^d}`` is compared with the
uniform distribution by a one-sample Kolmogorov-Smirnov test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .model import ConstrainedPolytope, FullDimPolytope

__all__ = [
    "DiagnosticsReport",
    "DegenerateCoordinateWarning",
    "MIN_SAMPLES",
    "autocorrelation",
    "ess",
    "constant_coordinates",
    "ray_ratio",
    "radial_statistic",
    "radial_uniformity",
    "summarize",
]

MIN_SAMPLES = 10
FEAS_TOL = 1e-8


class DegenerateCoordinateWarning(UserWarning):
    """A coordinate is constant along the chain; its ESS is reported as N."""


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    ess_per_coordinate: np.ndarray
    ess_min: float
    ks_statistic: float
    ks_pvalue: float
    acceptance_rate: float
    n_samples: int = 0
    degenerate_coordinates: tuple = ()

    def to_dict(self):
        return {
            "ess_per_coordinate": [float(e) for e in self.ess_per_coordinate],
            "ess_min": float(self.ess_min),
            "ks_statistic": float(self.ks_statistic),
            "ks_pvalue": float(self.ks_pvalue),
            "acceptance_rate": float(self.acceptance_rate),
            "n_samples": int(self.n_samples),
            "degenerate_coordinates": [int(i) for i in self.degenerate_coordinates],
        }


def _as_matrix(samples):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("samples must be a matrix with one row per sample")
    return X


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation of a 1-D series at every lag, via FFT (biased estimator)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    y = x - x.mean()
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def constant_coordinates(samples) -> np.ndarray:
    X = _as_matrix(samples)
    return np.flatnonzero(np.ptp(X, axis=0) <= 1e-14 * (1 + np.max(np.abs(X), axis=0)))


def _ess_1d(x) -> float:
    n = x.size
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return min(float(n), n / tau) if tau > 0 else float(n)


def ess(samples) -> np.ndarray:
    """Effective sample size of every coordinate, ``N / (1 + 2 sum rho_t)``, capped at ``N``.

    Constant coordinates get ``N`` and trigger a :class:`DegenerateCoordinateWarning`.
    """
    X = _as_matrix(samples)
    n = X.shape[0]
    if n < MIN_SAMPLES:
        raise ValueError(f"ESS needs at least {MIN_SAMPLES} samples, got {n}")
    const = set(constant_coordinates(X).tolist())
    if const:
        warnings.warn(f"coordinates {sorted(const)} are constant; ESS set to N",
                      DegenerateCoordinateWarning, stacklevel=2)
    return np.array([float(n) if j in const else _ess_1d(X[:, j]) for j in range(X.shape[1])])


def ray_ratio(samples, p, x0) -> np.ndarray:
    """``u(x) = 1 / sup{t : x0 + t (x - x0) in K}`` for every row of ``samples``.

    ``u`` is 0 at ``x0`` and 1 on the boundary. Raises ``ValueError`` naming the
    first sample that is outside ``p``.
    """
    X = _as_matrix(samples)
    x0 = np.asarray(x0, dtype=float)
    if isinstance(p, FullDimPolytope):
        s0 = p.b - p.A @ x0
        if not np.all(s0 > 0):
            raise ValueError("x0 is not strictly inside the polytope")
        # slack of row i along the ray drops by t * a_i (x - x0)
        rates = (X - x0) @ p.A.T / s0
        bad = np.zeros(X.shape[0], dtype=bool)
    elif isinstance(p, ConstrainedPolytope):
        t0 = x0[p.nonneg]
        if not np.all(t0 > 0):
            raise ValueError("x0 is not strictly inside the polytope")
        rates = (x0[p.nonneg] - X[:, p.nonneg]) / t0
        if p.n:
            tol_eq = FEAS_TOL * (1.0 + np.max(np.abs(p.b)))
            bad = np.max(np.abs(p.A @ X.T - p.b[:, None]), axis=0) > tol_eq
        else:
            bad = np.zeros(X.shape[0], dtype=bool)
    else:
        raise TypeError("p must be a ConstrainedPolytope or FullDimPolytope")
    u = np.maximum(np.max(rates, axis=1, initial=0.0), 0.0) if rates.shape[1] else np.zeros(X.shape[0])
    bad |= u > 1.0 + FEAS_TOL
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"sample {i} lies outside the polytope")
    return np.minimum(u, 1.0)


def _dimension(p):
    return p.dim if isinstance(p, FullDimPolytope) else p.d_eff


def radial_statistic(samples, p, x0) -> np.ndarray:
    """``u^d_eff``, which is Uniform[0, 1] under uniform sampling."""
    return ray_ratio(samples, p, x0) ** _dimension(p)


def radial_uniformity(samples, p, x0=None):
    """One-sample KS test of the radial statistic against Uniform[0, 1].

    ``x0`` defaults to the initialization point of ``p``. Returns
    ``(ks_statistic, ks_pvalue)``.
    """
    if x0 is None:
        x0 = _default_center(p)
    stat = radial_statistic(samples, p, x0)
    if stat.size == 0:
        raise ValueError("no samples")
    res = scipy.stats.kstest(stat, "uniform")
    return float(res.statistic), float(res.pvalue)


def _default_center(p):
    from .preprocess import initialize, initialize_full

    return initialize_full(p).x0 if isinstance(p, FullDimPolytope) else initialize(p).x0


def summarize(chain, p, x0=None) -> DiagnosticsReport:
    """ESS, radial KS test and acceptance rate of a :class:`~polysample.walks.ChainOutput`."""
    X = chain.samples
    if X.shape[0] == 0:
        raise ValueError("chain has no samples")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCoordinateWarning)
        e = ess(X)
    degenerate = tuple(constant_coordinates(X).tolist())
    live = np.setdiff1d(np.arange(X.shape[1]), degenerate)
    ess_min = float(np.min(e[live])) if live.size else float(np.min(e))
    ks, pv = radial_uniformity(X, p, x0)
    return DiagnosticsReport(e, ess_min, ks, pv, chain.acceptance_rate, X.shape[0], degenerate)
