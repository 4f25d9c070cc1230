"""Acceptance suite: one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v``; the lines are printed as each
criterion finishes and collected again in the terminal summary.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from fixtures import random_polytope
from polysample.barrier import (
    apply_pseudo_inverse,
    apply_sqrt_pseudo_inverse,
    john_constants,
    john_objective,
    john_weights,
    leverage_scores,
    metric_sparse,
    pdet,
    vaidya_weights,
    weights_dense,
)
from polysample.diagnostics import radial_uniformity
from polysample.io import convert_mps, dumps_polytope, loads_polytope, read_mps
from polysample.model import (
    ConstrainedPolytope,
    generator_center,
    make_birkhoff,
    make_hypercube,
    make_simplex,
    membership,
    to_full_dimensional,
)
from polysample.preprocess import _z_tol, facial_reduction, find_z, initialize, strict_tol
from polysample.walks import WalkConfig, run_chain, run_to_ess

DATA = Path(__file__).parent / "data"


def verdict(report_line, number, ok, detail):
    report_line(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


# ---------------------------------------------------------------------------
# criteria 1-3: metric fixtures


def metric_fixtures(count=50, seed=2024):
    rng = np.random.default_rng(seed)
    kinds = ("dikin", "vaidya", "john")
    out = []
    for t in range(count):
        d = int(rng.integers(3, 31))
        n_free = min(int(rng.integers(0, 4)), d - 2) if t % 2 else 0
        n = int(rng.integers(n_free + 1, min(11, d)))
        p, x = random_polytope(rng, d, n, n_free)
        F = to_full_dimensional(p)
        v = F.map.pullback(x)
        kind = kinds[t % 3] if F.k > F.dim else "dikin"
        Bs = F.A / (F.b - F.A @ v)[:, None]
        w = weights_dense(kind, Bs, F.dim, F.k)
        out.append((p, x, F, v, w, rng.normal(size=p.d)))
    return out


@pytest.fixture(scope="module")
def fixtures50():
    start = time.perf_counter()
    fx = metric_fixtures()
    return fx, time.perf_counter() - start


def test_criterion_1_pseudo_inverse(fixtures50, report_line):
    fx, setup = fixtures50
    start = time.perf_counter()
    worst = 0.0
    for p, x, F, v, w, _ in fx:
        m = metric_sparse(p, x, w, epsilon=1e-12)
        H = (F.A / (F.b - F.A @ v)[:, None]).T @ (w.w[:, None] * (F.A / (F.b - F.A @ v)[:, None]))
        Q2 = F.map.Q2
        dense = Q2 @ np.linalg.solve(H, Q2.T)
        sparse = apply_pseudo_inverse(m, p, np.eye(p.d))
        worst = max(worst, np.max(np.abs(dense - sparse)) / np.max(np.abs(dense)))
    elapsed = time.perf_counter() - start + setup
    ok = worst < 1e-6 and elapsed < 10
    verdict(report_line, 1, ok, f"max relative error {worst:.2e} (< 1e-6) on 50 polytopes, "
                                f"{elapsed:.1f}s (< 10s)")


def test_criterion_2_pseudo_determinant(fixtures50, report_line):
    fx, _ = fixtures50
    worst = 0.0
    for p, x, F, v, w, _ in fx:
        m = metric_sparse(p, x, w, epsilon=1e-12)
        g = m.g_diag - m.epsilon  # the epsilon -> 0 limit on the null space
        Q2 = F.map.Q2
        ld = np.linalg.slogdet(Q2.T @ (g[:, None] * Q2))[1]
        worst = max(worst, abs(pdet(m, p) - ld) / (1 + abs(ld)))
    verdict(report_line, 2, worst < 1e-6, f"max |log pdet - log det| / (1 + |log det|) = "
                                          f"{worst:.2e} (< 1e-6)")


def test_criterion_3_square_root(fixtures50, report_line):
    fx, _ = fixtures50
    worst = 0.0
    for p, x, F, v, w, u in fx:
        m = metric_sparse(p, x, w, epsilon=1e-12)
        direct = apply_pseudo_inverse(m, p, u)
        # R^T u = g^1/2 M+ u, so R R^T u = R (g^1/2 M+ u)
        via_root = apply_sqrt_pseudo_inverse(m, p, np.sqrt(m.g_diag) * direct)
        worst = max(worst, np.linalg.norm(via_root - direct) / np.linalg.norm(direct))
    verdict(report_line, 3, worst < 1e-8, f"max |R R^T u - M+ u| / |M+ u| = {worst:.2e} (< 1e-8)")


# ---------------------------------------------------------------------------
# criterion 4


def test_criterion_4_weights(report_line):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = {"lev": 0.0, "vaidya": 0.0, "beta": np.inf, "resid": 0.0, "grad": 0.0}
    for t in range(20):
        d = int(rng.integers(4, 16))
        n = int(rng.integers(1 + t % 2, min(6, d - 1)))
        p, x = random_polytope(rng, d, n, n_free=t % 2)
        F = to_full_dimensional(p)
        v = F.map.pullback(x)
        Bs = F.A / (F.b - F.A @ v)[:, None]
        de = p.d - p.n
        worst["lev"] = max(worst["lev"], abs(leverage_scores(Bs).sum() - de))
        worst["vaidya"] = max(worst["vaidya"], abs(vaidya_weights(Bs, de, F.k).w.sum() - 2 * de))
        res = john_weights(Bs, de, F.k)
        _, beta = john_constants(de, F.k)
        worst["beta"] = min(worst["beta"], float(np.min(res.w - beta)))
        worst["resid"] = max(worst["resid"], res.residual)
        h = 1e-6
        grad = np.zeros(F.k)
        for i in range(F.k):
            e = np.zeros(F.k)
            e[i] = h
            grad[i] = (john_objective(res.w + e, Bs, de, F.k)
                       - john_objective(res.w - e, Bs, de, F.k)) / (2 * h)
        worst["grad"] = max(worst["grad"], float(np.max(np.abs(grad))))
    elapsed = time.perf_counter() - start
    ok = (worst["lev"] < 1e-9 and worst["vaidya"] < 1e-9 and worst["beta"] >= -1e-12
          and worst["resid"] < 1e-8 and worst["grad"] < 1e-6 and elapsed < 10)
    verdict(report_line, 4,
            ok, f"leverage sum err {worst['lev']:.1e}, Vaidya sum err {worst['vaidya']:.1e}, "
                f"min(w - beta) {worst['beta']:.2e}, John residual {worst['resid']:.1e}, "
                f"FD gradient {worst['grad']:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 5

UNIFORMITY_R = 2.0
UNIFORMITY_THIN = 50


@pytest.mark.slow
def test_criterion_5_uniformity(report_line):
    start = time.perf_counter()
    polytopes = {"hypercube2": make_hypercube(2), "simplex3": make_simplex(3)}
    results = []
    for name, p in polytopes.items():
        x0 = initialize(p).x0
        for kind in ("dikin", "vaidya", "john"):
            for form in ("dense", "sparse"):
                passes = 0
                for seed in range(10):
                    cfg = WalkConfig(kind, form, r=UNIFORMITY_R, seed=seed, thin=UNIFORMITY_THIN)
                    chain, e, status = run_to_ess(p, cfg, 500, x0=x0, block_steps=100)
                    assert status == "ok"
                    passes += radial_uniformity(chain.samples, p, x0)[1] > 0.01
                results.append((name, kind, form, passes))
    elapsed = time.perf_counter() - start
    ok = all(r[3] >= 9 for r in results) and elapsed < 15 * 60
    summary = ", ".join(f"{n}/{k}/{f} {c}/10" for n, k, f, c in results)
    verdict(report_line, 5, ok, f"seeds with KS p > 0.01: {summary}; {elapsed:.0f}s (< 900s)")


# ---------------------------------------------------------------------------
# criteria 6-7: facial reduction


def test_criterion_6_facial_reduction(report_line):
    start = time.perf_counter()
    problems = []
    for d in range(3, 11):
        A = np.vstack([np.ones(d), np.eye(d)[-1]])
        p = ConstrainedPolytope(A, [1.0, 0.0], d)
        res = facial_reduction(p)
        if len(res.fixed_variables) != 1 or res.fixed_variables[0].index != d - 1:
            problems.append(f"d={d}: fixed {[f.index for f in res.fixed_variables]}")
        if res.reduced.d != d - 1 or not initialize(res.reduced).delta > 0:
            problems.append(f"d={d}: reduced polytope not strictly feasible")
        cert = find_z(p)
        y, z = cert
        if not (abs(p.b @ y) < 1e-8 and np.allclose(z, p.A.T @ y, atol=1e-8)
                and np.all(z >= -1e-8) and z[-1] > _z_tol(p.A)
                and np.all(np.abs(z[:-1]) < 1e-8)):
            problems.append(f"d={d}: certificate conditions violated")
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 5
    verdict(report_line, 6, ok, f"d=3..10, one variable removed each, certificates valid; "
                                f"{elapsed:.1f}s (< 5s) {'; '.join(problems)}")


def alternative_fixture(rng, degenerate):
    d = int(rng.integers(4, 12))
    n = int(rng.integers(1, d - 2))
    p, x = random_polytope(rng, d, n, n_free=int(rng.integers(0, 2)) if n > 1 else 0)
    A, b = p.A.toarray(), p.b
    if degenerate:
        # pin one nonnegative coordinate at zero with an extra row, then hide it by mixing rows
        j = int(rng.integers(d - p.k, d))
        x = x.copy()
        x[j] = 0.0
        A = np.vstack([A, np.eye(d)[j]])
        b = A @ x
    M = rng.normal(size=(A.shape[0], A.shape[0])) + 3 * np.eye(A.shape[0])
    return ConstrainedPolytope(M @ A, M @ b, p.k)


def test_criterion_7_alternative(report_line):
    rng = np.random.default_rng(7)
    bad = []
    found = {True: 0, False: 0}
    for t in range(100):
        degenerate = t % 2 == 1
        p = alternative_fixture(rng, degenerate)
        positive = initialize(p).delta > strict_tol(p.b)
        cert = find_z(p) is not None
        if positive == cert:
            bad.append(t)
        if cert == degenerate:
            found[degenerate] += 1
    verdict(report_line, 7, not bad,
            f"exactly one alternative on {100 - len(bad)}/100 polytopes "
            f"(certificates on {found[True]}/50 degenerate, none on {found[False]}/50 others)")


# ---------------------------------------------------------------------------
# criterion 8


def test_criterion_8_chain_plumbing(report_line):
    notes = []
    ok = True
    cases = [(make_simplex(5), None), (make_hypercube(3), None), (make_birkhoff(3), None)]
    for p, _ in cases:
        for kind in ("ball", "hit_and_run", "dikin", "vaidya", "john"):
            for form in ("dense", "sparse"):
                cfg = WalkConfig(kind, form, r=0.8, seed=3, steps=200)
                a = run_chain(p, cfg)
                b = run_chain(p, cfg)
                if not all(membership(p, x) for x in a.samples):
                    ok = False
                    notes.append(f"membership {kind}/{form}")
                if not np.array_equal(a.samples, b.samples):
                    ok = False
                    notes.append(f"reproducibility {kind}/{form}")
    drift = 0.0
    for p in (make_simplex(10), make_birkhoff(4)):
        out = run_chain(p, WalkConfig("dikin", "sparse", r=0.5, seed=0, steps=10000))
        drift = max(drift, out.max_eq_residual / (1 + np.max(np.abs(p.b))))
    ok = ok and drift < 1e-6
    verdict(report_line, 8, ok, f"membership and same-seed identity on 30 chains; "
                                f"K2 drift over 1e4 steps {drift:.1e} (< 1e-6) {' '.join(notes)}")


# ---------------------------------------------------------------------------
# criterion 9

MIXING_TARGET_ESS = 30
MIXING_THIN = 10


@pytest.mark.slow
def test_criterion_9_mixing_order(report_line):
    start = time.perf_counter()
    cost = {}
    for m in (10, 30, 100):
        p = make_hypercube(m)
        x0 = generator_center("hypercube", m)
        for kind in ("ball", "dikin"):
            cfg = WalkConfig(kind, "sparse", r=0.5, seed=m, thin=MIXING_THIN)
            chain, e, status = run_to_ess(p, cfg, MIXING_TARGET_ESS, x0=x0, block_steps=500)
            cost[m, kind] = chain.proposed / e
    ratio = {m: cost[m, "ball"] / cost[m, "dikin"] for m in (10, 30, 100)}
    elapsed = time.perf_counter() - start
    ok = ratio[100] >= 2 * ratio[10] and elapsed < 30 * 60
    detail = ", ".join(f"m={m}: ball {cost[m, 'ball']:.0f} dikin {cost[m, 'dikin']:.0f} "
                       f"ratio {ratio[m]:.2f}" for m in (10, 30, 100))
    verdict(report_line, 9, ok, f"steps per ESS {detail}; ratio(100)/ratio(10) = "
                                f"{ratio[100] / ratio[10]:.2f} (>= 2); {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 10


def per_step_seconds(m, steps, trials=3):
    p = make_hypercube(m)
    x0 = generator_center("hypercube", m)
    times = []
    for trial in range(trials):
        out = run_chain(p, WalkConfig("dikin", "sparse", r=0.5, seed=trial, steps=steps), x0=x0)
        times.append(out.per_step_seconds["median"])
    return float(np.median(times)), p.d


@pytest.mark.slow
def test_criterion_10_sparse_scaling(report_line):
    small, d_small = per_step_seconds(333, 200)
    large, d_large = per_step_seconds(3333, 40)
    beyond, d_beyond = per_step_seconds(10000, 10, trials=1)
    ratio = large / small
    verdict(report_line, 10, ratio < 100,
            f"sparse Dikin median seconds/step d={d_small}: {small:.2e}, d={d_large}: "
            f"{large:.2e}, ratio {ratio:.1f} (< 100); reported only: d={d_beyond}: {beyond:.2e}")


# ---------------------------------------------------------------------------
# criterion 11


def k1_vertices(F, tol=1e-9):
    import itertools

    out = []
    for rows in itertools.combinations(range(F.k), F.dim):
        M = F.A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, F.b[list(rows)])
        if np.all(F.A @ v <= F.b + tol):
            out.append(v)
    return np.array(out)


def same_point_set(P, Q, tol=1e-8):
    d = np.max(np.abs(np.asarray(P)[:, None, :] - np.asarray(Q)[None, :, :]), axis=2)
    return bool(np.all(d.min(axis=1) < tol) and np.all(d.min(axis=0) < tol))


MPS_VERTICES = {
    "tiny.mps": [(0, 0.5), (1.5, 0.5), (0, 1), (0.5, 1.5)],
    "mixed.mps": [(0, -1, -1, 0.5), (1, 0, 1, 0.5), (0, 1, 1, 0.5), (1, 1, 2, 0.5)],
}


def test_criterion_11_parser(report_line):
    notes = []
    ok = True
    for name, expect in MPS_VERTICES.items():
        conv = convert_mps(read_mps(DATA / name))
        p = conv.polytope
        if loads_polytope(dumps_polytope(p)) != p:
            ok = False
            notes.append(f"{name}: native round trip differs")
        F = to_full_dimensional(p)
        V = conv.to_original(F.map.apply(k1_vertices(F)))
        if not same_point_set(V, expect):
            ok = False
            notes.append(f"{name}: vertex sets differ")
    eq = convert_mps(read_mps(DATA / "equality.mps")).polytope
    if eq.k != eq.d:
        ok = False
        notes.append("equality.mps: expected every variable nonnegative")
    path = os.environ.get("POLYSAMPLE_ADLITTLE")
    if path and Path(path).is_file():
        res = facial_reduction(convert_mps(read_mps(path)).polytope)
        r = res.reduced
        match = (r.n, r.d, r.nnz) == (56, 138, 424)
        soft = f"Adlittle reduced to {r.n}x{r.d} with {r.nnz} nonzeros " \
               f"({'matches' if match else 'differs from'} 56x138/424, soft check)"
    else:
        soft = "Adlittle soft check skipped (set POLYSAMPLE_ADLITTLE to the uncompressed file)"
    verdict(report_line, 11, ok, f"MPS fixtures convert with exact vertex sets and native round "
                                 f"trips; {soft} {' '.join(notes)}")
