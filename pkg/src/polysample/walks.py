"""Random walks on polytopes and the chain driver.

Barrier walks (Dikin, Vaidya, John, Lee-Sidford) draw a Gaussian proposal
whose covariance is ``(r/c)^2`` times the inverse local metric and correct it
with a Metropolis-Hastings step. The Ball Walk and Hit-and-Run are included
as baselines. Every walk runs on either the full-dimensional form
(``form="dense_k1"``) or directly on the constrained form (``form="sparse_k2"``).

Randomness comes from a :class:`numpy.random.Philox` counter-based generator
seeded with ``config.seed`` and Gaussians come from the Box-Muller
transform (:func:`gaussian`); independent chains use
``numpy.random.SeedSequence(seed).spawn(n)`` (see :func:`chain_rngs`).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import barrier
from .errors import (
    BoundaryError,
    ConvergenceError,
    NumericalBreakdownError,
    RankDeficiencyError,
    UnboundedPolytopeError,
)
from .model import ConstrainedPolytope, FullDimPolytope, to_full_dimensional

log = logging.getLogger(__name__)

__all__ = [
    "WALK_KINDS",
    "BARRIER_KINDS",
    "WalkConfig",
    "ChainOutput",
    "gaussian",
    "canonical_form",
    "make_rng",
    "chain_rngs",
    "variance_correction",
    "make_walker",
    "propose_barrier_dense",
    "propose_barrier_sparse",
    "acceptance_probability",
    "mh_step",
    "ball_step",
    "hit_and_run_step",
    "chord",
    "run_chain",
    "run_to_ess",
]

BARRIER_KINDS = ("dikin", "vaidya", "john", "lee_sidford")
WALK_KINDS = ("ball", "hit_and_run") + BARRIER_KINDS
FORMS = ("dense_k1", "sparse_k2")
_FORM_ALIASES = {"dense": "dense_k1", "sparse": "sparse_k2", "k1": "dense_k1", "k2": "sparse_k2"}
REPROJECT_EVERY = 1024

_METRIC_FAILURES = (BoundaryError, ConvergenceError, NumericalBreakdownError, RankDeficiencyError)


@dataclass(frozen=True)
class WalkConfig:
    kind: str = "dikin"
    form: str = "sparse_k2"
    r: float = 0.5
    epsilon: float = barrier.DEFAULT_EPSILON
    seed: int = 0
    steps: int = 1000
    thin: int = 1
    burn_in: int = 0
    c: float | None = None  # overrides variance_correction

    def __post_init__(self):
        if self.kind not in WALK_KINDS:
            raise ValueError(f"unknown walk {self.kind!r}; choose from {WALK_KINDS}")
        object.__setattr__(self, "form", canonical_form(self.form))
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}; choose from {FORMS}")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.steps < 0 or self.burn_in < 0:
            raise ValueError("steps and burn_in must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be positive")


@dataclass(frozen=True, eq=False)
class ChainOutput:
    samples: np.ndarray
    accepted: int
    proposed: int
    infeasible_rejects: int
    per_step_seconds: dict = field(default_factory=dict)
    max_eq_residual: float = 0.0

    @property
    def rejected(self):
        return self.proposed - self.accepted

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposed if self.proposed else float("nan")


def canonical_form(form: str) -> str:
    return _FORM_ALIASES.get(form, form)


def gaussian(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard normal variates by the Box-Muller transform of ``rng.random()`` doubles.

    Pairs ``(u1, u2)`` of uniforms on [0, 1) give ``sqrt(-2 log(1 - u1))`` times
    ``cos(2 pi u2)`` and ``sin(2 pi u2)``; the odd leftover of the last pair is dropped.
    """
    m = (size + 1) // 2
    u = rng.random(2 * m)
    rad = np.sqrt(-2.0 * np.log1p(-u[:m]))
    ang = 2.0 * np.pi * u[m:]
    return np.concatenate([rad * np.cos(ang), rad * np.sin(ang)])[:size]


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def chain_rngs(seed, n_chains):
    """Independent generators for ``n_chains`` chains sharing one base seed."""
    return [
        np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n_chains)
    ]


def variance_correction(kind: str, d_eff: int, k: int) -> float:
    """Walk-specific constant ``c`` in the proposal covariance ``(r/c)^2 H^-1``."""
    if d_eff < 1:
        raise ValueError("d_eff must be at least 1")
    if kind in ("dikin", "lee_sidford", "ball"):
        return float(np.sqrt(d_eff))
    if kind == "vaidya":
        return float((k * d_eff) ** 0.25)
    if kind == "john":
        return float(d_eff ** 0.75)
    if kind == "hit_and_run":
        return 1.0
    raise ValueError(f"unknown walk {kind!r}")


def acceptance_probability(log_forward, log_reverse) -> float:
    """``min(1, p_z(x) / p_x(z))`` from log densities; 0 when either is not finite."""
    la = log_reverse - log_forward
    if not np.isfinite(la):
        return 0.0
    return float(min(1.0, np.exp(min(la, 0.0))))


# ---------------------------------------------------------------------------
# walkers
#
# A walker owns the polytope-level caches; a state is the current point plus
# whatever local quantities the walk reuses between steps.


class _State:
    __slots__ = ("x", "metric")

    def __init__(self, x, metric=None):
        self.x = x
        self.metric = metric


class _DenseBarrier:
    def __init__(self, p: FullDimPolytope, kind, r, c=None):
        p.check_bounded()
        self.p, self.kind, self.r = p, kind, r
        self.d_eff, self.k = p.dim, p.k
        self.c = variance_correction(kind, self.d_eff, self.k) if c is None else c
        self.scale = r / self.c

    def metric(self, v, w0=None):
        s = barrier.slack(self.p, v)
        w = barrier.weights_dense(self.kind, self.p.A / s[:, None], self.d_eff, self.k, w0)
        return barrier.hessian_dense(self.p, v, w)

    def init_state(self, v):
        return _State(np.array(v, dtype=float), self.metric(v))

    def propose(self, state, rng):
        xi = gaussian(rng, self.d_eff)
        L = state.metric.chol
        step = np.linalg.solve(L.T, xi) if self.d_eff > 1 else xi / L[0, 0]
        return state.x + self.scale * step

    def log_density(self, state, z):
        """Log proposal density at ``z`` from ``state`` (up to a constant)."""
        u = z - state.x
        m = state.metric
        return 0.5 * m.logdet - 0.5 / self.scale**2 * float(u @ m.H @ u)

    def feasible(self, z):
        return bool(np.all(self.p.A @ z < self.p.b))

    def warm(self, state):
        return state.metric.weights.w if self.kind == "john" else None


class _SparseBarrier:
    def __init__(self, p: ConstrainedPolytope, kind, r, epsilon, c=None):
        self.p, self.kind, self.r, self.epsilon = p, kind, r, epsilon
        self.d_eff, self.k = p.d_eff, p.k
        self.c = variance_correction(kind, self.d_eff, self.k) if c is None else c
        self.scale = r / self.c
        self.tail = p.nonneg

    def metric(self, x, w0=None):
        w = barrier.weights_sparse(self.kind, self.p, x, self.epsilon, w0)
        m = barrier.metric_sparse(self.p, x, w, self.epsilon)
        return m, barrier.pdet(m, self.p)

    def init_state(self, x):
        return _State(np.array(x, dtype=float), self.metric(x))

    def propose(self, state, rng):
        zeta = gaussian(rng, self.p.d)
        m, _ = state.metric
        return state.x + self.scale * barrier.apply_sqrt_pseudo_inverse(m, self.p, zeta)

    def log_density(self, state, z):
        # z - x lies in null(A), where the projected metric acts as g itself
        m, logpdet = state.metric
        u = z - state.x
        return 0.5 * logpdet - 0.5 / self.scale**2 * float(np.sum(m.g_diag * u * u))

    def feasible(self, z):
        return bool(np.all(z[self.tail] > 0))

    def warm(self, state):
        return state.metric[0].weights.w if self.kind == "john" else None


class _DenseBall:
    def __init__(self, p: FullDimPolytope, r):
        self.p, self.d_eff = p, p.dim
        self.scale = r / np.sqrt(self.d_eff)

    def init_state(self, v):
        return _State(np.array(v, dtype=float))

    def direction(self, rng):
        return gaussian(rng, self.d_eff)

    def feasible(self, z):
        return bool(np.all(self.p.A @ z < self.p.b))

    def slack(self, x):
        return self.p.b - self.p.A @ x

    def rate(self, u):
        return self.p.A @ u


class _SparseBall:
    def __init__(self, p: ConstrainedPolytope, r):
        self.p, self.d_eff = p, p.d_eff
        self.scale = r / np.sqrt(self.d_eff)
        self.sys = barrier.system(p)
        self.tail = p.nonneg

    def init_state(self, x):
        return _State(np.array(x, dtype=float))

    def direction(self, rng):
        xi = gaussian(rng, self.p.d)
        return self.project(xi)

    def project(self, u):
        if self.p.n == 0:
            return u
        return u - self.sys.rmatvec(self.sys.AAt_factor.solve(self.sys.matvec(u)))

    def feasible(self, z):
        return bool(np.all(z[self.tail] > 0))

    def slack(self, x):
        return x[self.tail]

    def rate(self, u):
        # slack along x + t u decreases at rate -u on the nonnegative block
        return -u[self.tail]


def make_walker(p, kind, form="sparse_k2", r=0.5, epsilon=barrier.DEFAULT_EPSILON, c=None):
    """Walker for ``p`` (a :class:`FullDimPolytope` for ``form="dense_k1"``)."""
    if kind not in WALK_KINDS:
        raise ValueError(f"unknown walk {kind!r}")
    form = canonical_form(form)
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}")
    if form == "dense_k1":
        if not isinstance(p, FullDimPolytope):
            raise TypeError("dense walkers need a FullDimPolytope")
        if kind in BARRIER_KINDS:
            return _DenseBarrier(p, kind, r, c)
        return _DenseBall(p, r)
    if not isinstance(p, ConstrainedPolytope):
        raise TypeError("sparse walkers need a ConstrainedPolytope")
    if kind in BARRIER_KINDS:
        return _SparseBarrier(p, kind, r, epsilon, c)
    return _SparseBall(p, r)


# ---------------------------------------------------------------------------
# single steps


def propose_barrier_dense(p: FullDimPolytope, v, kind, r, rng, c=None):
    """Draw ``z ~ N(v, (r/c)^2 H(v)^-1)``; return ``(z, log p_v(z))``."""
    walker = _DenseBarrier(p, kind, r, c)
    state = walker.init_state(v)
    z = walker.propose(state, rng)
    return z, walker.log_density(state, z)


def propose_barrier_sparse(p: ConstrainedPolytope, x, kind, r, rng,
                           epsilon=barrier.DEFAULT_EPSILON, c=None):
    """Draw ``z ~ N(x, (r/c)^2 M+)``; return ``(z, log p_x(z))``."""
    walker = _SparseBarrier(p, kind, r, epsilon, c)
    state = walker.init_state(x)
    z = walker.propose(state, rng)
    return z, walker.log_density(state, z)


def mh_step(walker, state, rng):
    """One Metropolis-Hastings step of a barrier walk.

    Returns ``(state, accepted, infeasible)``; ``state`` is unchanged on rejection.
    """
    z = walker.propose(state, rng)
    if not walker.feasible(z):
        rng.random()  # keep the stream aligned with the accept/reject draw
        return state, False, True
    try:
        new = _State(z, walker.metric(z, walker.warm(state)))
    except _METRIC_FAILURES as exc:
        log.warning("rejecting proposal: metric failed at proposal point (%s)", exc)
        rng.random()
        return state, False, False
    log_fwd = walker.log_density(state, z)
    log_rev = walker.log_density(new, state.x)
    alpha = acceptance_probability(log_fwd, log_rev)
    if rng.random() < alpha:
        return new, True, False
    return state, False, False


def ball_step(walker, state, rng):
    """Gaussian Ball Walk step: symmetric proposal, accepted iff strictly feasible."""
    z = state.x + walker.scale * walker.direction(rng)
    if walker.feasible(z):
        return _State(z), True, False
    return state, False, True


def chord(walker, x, u):
    """``(t_min, t_max)`` such that ``x + t u`` is feasible exactly for ``t`` in between."""
    s = walker.slack(x)
    rate = walker.rate(u)
    pos, neg = rate > 0, rate < 0
    if not np.any(pos) or not np.any(neg):
        raise UnboundedPolytopeError(
            "chord is unbounded: the polytope is unbounded along this direction "
            "(run preprocessing or add bounds)"
        )
    return float(np.max(s[neg] / rate[neg])), float(np.min(s[pos] / rate[pos]))


def hit_and_run_step(walker, state, rng):
    """Uniform point on the chord through ``state`` along a uniform random direction."""
    u = walker.direction(rng)
    u = u / np.linalg.norm(u)
    t_min, t_max = chord(walker, state.x, u)
    t = rng.uniform(t_min, t_max)
    return _State(state.x + t * u), True, False


# ---------------------------------------------------------------------------
# chains


def _reproject(p: ConstrainedPolytope, x):
    """Least-squares correction of ``x`` back onto ``A x = b`` (skipped if it leaves the body)."""
    if p.n == 0:
        return x
    sysm = barrier.system(p)
    y = x - sysm.rmatvec(sysm.AAt_factor.solve(sysm.matvec(x) - p.b))
    return y if np.all(y[p.nonneg] > 0) else x


def _summary(times):
    if not len(times):
        return {"mean": 0.0, "median": 0.0, "min": 0.0, "max": 0.0, "total": 0.0}
    t = np.asarray(times)
    return {
        "mean": float(t.mean()),
        "median": float(np.median(t)),
        "min": float(t.min()),
        "max": float(t.max()),
        "total": float(t.sum()),
    }


def run_chain(p, config: WalkConfig, x0=None, rng=None, time_limit=None) -> ChainOutput:
    """Run ``burn_in + steps * thin`` iterations and keep every ``thin``-th state after burn-in.

    ``p`` is a :class:`ConstrainedPolytope` (either form; for ``form="dense_k1"`` it is
    converted by QR and samples are mapped back) or a :class:`FullDimPolytope`
    (dense form only). ``x0`` defaults to the initialization point. With
    ``time_limit`` (seconds) the chain stops early and returns what it has.
    """
    from .preprocess import initialize, initialize_full

    rng = make_rng(config.seed) if rng is None else rng
    constrained = isinstance(p, ConstrainedPolytope)
    if x0 is None:
        x0 = initialize(p).x0 if constrained else initialize_full(p).x0
    x0 = np.asarray(x0, dtype=float)

    if config.form == "dense_k1":
        if constrained:
            full = to_full_dimensional(p)
            start = full.map.pullback(x0)
            to_output = full.map.apply
        else:
            full, start, to_output = p, x0, (lambda v: v)
        walker = make_walker(full, config.kind, "dense_k1", config.r, config.epsilon, config.c)
        body = full
    else:
        if not constrained:
            raise TypeError("the sparse form needs a ConstrainedPolytope")
        walker = make_walker(p, config.kind, "sparse_k2", config.r, config.epsilon, config.c)
        start, to_output, body = x0, (lambda x: x), p

    from .model import membership

    if not membership(body, start, strict=True):
        raise BoundaryError("starting point is not strictly inside the polytope")

    if config.kind in BARRIER_KINDS:
        step_fn = mh_step
    elif config.kind == "ball":
        step_fn = ball_step
    else:
        step_fn = hit_and_run_step

    state = walker.init_state(start)
    total = config.burn_in + config.steps * config.thin
    kept = []
    accepted = infeasible = proposed = 0
    times = []
    max_resid = 0.0
    check_eq = constrained and p.n > 0
    deadline = None if time_limit is None else time.perf_counter() + time_limit
    for it in range(1, total + 1):
        t0 = time.perf_counter()
        state, acc, inf = step_fn(walker, state, rng)
        if config.form == "sparse_k2" and it % REPROJECT_EVERY == 0:
            x = _reproject(p, state.x)
            if x is not state.x:
                state = walker.init_state(x)
        times.append(time.perf_counter() - t0)
        proposed += 1
        accepted += acc
        infeasible += inf
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            out = to_output(state.x)
            kept.append(out)
            if check_eq:
                resid = float(np.max(np.abs(p.A @ out - p.b)))
                max_resid = max(max_resid, resid)
        if deadline is not None and times and time.perf_counter() > deadline:
            break
    dim = p.d if constrained else p.dim
    samples = np.array(kept).reshape(len(kept), dim)
    return ChainOutput(samples, accepted, proposed, infeasible, _summary(times), max_resid)


def _merge_timing(parts):
    parts = [t for t in parts if t.get("total", 0.0) > 0 or t.get("mean", 0.0) > 0]
    if not parts:
        return _summary([])
    total = sum(t["total"] for t in parts)
    count = sum(t["total"] / t["mean"] for t in parts if t["mean"] > 0)
    return {
        "mean": total / count if count else 0.0,
        "median": float(np.median([t["median"] for t in parts])),  # median of block medians
        "min": min(t["min"] for t in parts),
        "max": max(t["max"] for t in parts),
        "total": total,
    }


def run_to_ess(p, config: WalkConfig, target_ess, x0=None, block_steps=None,
               max_steps=None, time_limit=None):
    """Extend one chain block by block until the smallest coordinate ESS reaches ``target_ess``.

    Each block keeps ``block_steps`` samples (``config.thin`` iterations apart) and
    continues from the last state with the same generator, so the result is a
    single chain. Burn-in is applied once. Stops early at ``max_steps`` kept
    samples or after ``time_limit`` seconds.

    Returns ``(chain, ess_min, status)`` with status ``"ok"``, ``"max_steps"`` or ``"timeout"``.
    """
    from .diagnostics import MIN_SAMPLES, ess

    rng = make_rng(config.seed)
    block = block_steps or max(config.steps, 100)
    start = time.perf_counter()
    samples, timings = [], []
    accepted = proposed = infeasible = 0
    max_resid = 0.0
    kept = 0
    e_min = 0.0
    status = "ok"
    cur = x0
    first = True
    while True:
        remaining = None if time_limit is None else time_limit - (time.perf_counter() - start)
        if remaining is not None and remaining <= 0:
            status = "timeout"
            break
        n = block if max_steps is None else min(block, max_steps - kept)
        if n <= 0:
            status = "max_steps"
            break
        cfg = WalkConfig(config.kind, config.form, config.r, config.epsilon, config.seed, n,
                         config.thin, config.burn_in if first else 0, config.c)
        out = run_chain(p, cfg, x0=cur, rng=rng, time_limit=remaining)
        first = False
        samples.append(out.samples)
        timings.append(out.per_step_seconds)
        accepted += out.accepted
        proposed += out.proposed
        infeasible += out.infeasible_rejects
        max_resid = max(max_resid, out.max_eq_residual)
        kept += out.samples.shape[0]
        if out.samples.shape[0] < n:
            status = "timeout"
            break
        cur = out.samples[-1]
        if kept >= MIN_SAMPLES:
            X = np.vstack(samples)
            live = np.ptp(X, axis=0) > 0
            e_min = float(np.min(ess(X[:, live]))) if np.any(live) else float(kept)
            if e_min >= target_ess:
                break
    X = np.vstack(samples) if samples else np.zeros((0, p.d if isinstance(p, ConstrainedPolytope) else p.dim))
    chain = ChainOutput(X, accepted, proposed, infeasible, _merge_timing(timings), max_resid)
    return chain, e_min, status
