"""End-to-end acceptance checks A1-A8 at their stated tolerances and time
budgets.  Each test records a one-line verdict shown in the pytest summary."""

import time

import cvxpy as cp
import numpy as np

from gaugekit.caratheodory import certify_bound
from gaugekit.core import DataFit, Problem
from gaugekit.families import build_family, forward_difference
from gaugekit.oracle import brute_force_lmo, enumerate_subsets_ratio
from gaugekit.solver import solve, solve_tiny_nonconvex
from gaugekit.suites import run_instance
from gaugekit.tvgrad import lmo_tv


def _distinct(values, tol=1e-6):
    v = np.sort(np.asarray(values).ravel())
    return 1 + int(np.sum(np.diff(v) > tol))


def test_a1_l1_m_sparse(verdict):
    t0 = time.perf_counter()
    worst_r, worst_res, worst_obj = 0, 0.0, -np.inf
    for seed in range(100):
        rng = np.random.default_rng([1, seed])
        Phi = rng.standard_normal((5, 40))
        u0 = np.zeros(40)
        u0[rng.choice(40, 3, replace=False)] = rng.standard_normal(3)
        y = Phi @ u0 + 0.05 * rng.standard_normal(5)
        lam = (0.1, 1.0)[seed % 2]
        res = solve(Problem(build_family("L1Ball", n=40), Phi, DataFit.squared_l2(y), lam))
        rep, report = certify_bound(res)
        worst_r = max(worst_r, rep.r)
        worst_res = max(worst_res, report.phi_residual)
        worst_obj = max(worst_obj, report.objective_change)
    elapsed = time.perf_counter() - t0
    ok = worst_r <= 5 and worst_res <= 1e-9 and worst_obj <= 1e-8 and elapsed <= 10
    verdict("A1", ok, f"max r_after {worst_r} (<=5), max phi_residual {worst_res:.1e}, "
                      f"max objective change {worst_obj:.1e}, {elapsed:.2f}s")
    assert ok


def test_a2_nnls(verdict):
    t0 = time.perf_counter()
    worst_nnz, worst_min = 0, np.inf
    for seed in range(100):
        rng = np.random.default_rng([2, seed])
        Phi = rng.standard_normal((6, 50))
        y = rng.standard_normal(6)
        res = solve(Problem(build_family("NonnegOrthant", n=50), Phi, DataFit.squared_l2(y)))
        rep, _ = certify_bound(res)
        u = rep.assemble()
        worst_nnz = max(worst_nnz, int(np.count_nonzero(u)))
        worst_min = min(worst_min, float(u.min()))
    elapsed = time.perf_counter() - t0
    ok = worst_nnz <= 6 and worst_min >= -1e-12 and elapsed <= 10
    verdict("A2", ok, f"max nonzeros {worst_nnz} (<=6), min entry {worst_min:.1e}, {elapsed:.2f}s")
    assert ok


def test_a3_psd_rank(verdict):
    t0 = time.perf_counter()
    p, m = 10, 4
    worst_r, worst_eig, worst_res = 0, np.inf, 0.0
    for seed in range(20):
        rng = np.random.default_rng([3, seed])
        A = rng.standard_normal((m, p, p))
        Phi = (0.5 * (A + A.transpose(0, 2, 1))).reshape(m, -1)
        V = rng.standard_normal((p, 3))
        y = Phi @ (V @ V.T).ravel()
        res = solve(Problem(build_family("PsdCone", p=p), Phi, DataFit.equality(y)))
        rep, _ = certify_bound(res)
        X = rep.assemble().reshape(p, p)
        worst_r = max(worst_r, rep.r)
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(0.5 * (X + X.T))[0]))
        worst_res = max(worst_res, float(np.linalg.norm(Phi @ X.ravel() - y)))
    elapsed = time.perf_counter() - t0
    ok = worst_r <= 4 and worst_eig >= -1e-8 and worst_res <= 1e-6 and elapsed <= 30
    verdict("A3", ok, f"max rank-1 atoms {worst_r} (<=4), min eigenvalue {worst_eig:.1e}, "
                      f"max residual {worst_res:.1e}, {elapsed:.2f}s")
    assert ok


def _tv1d_qp(Phi, y, lam):
    u = cp.Variable(Phi.shape[1])
    obj = 0.5 * cp.sum_squares(Phi @ u - y) + lam * cp.norm1(forward_difference(Phi.shape[1]) @ u)
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return prob.value


def test_a4_tv1d_two_jumps(verdict):
    n, m, lam = 20, 3, 0.05
    ours, worst_jumps, worst_r, worst_gap, structure = 0.0, 0, 0, 0.0, True
    for seed in range(50):
        rng = np.random.default_rng([4, seed])
        idx = np.sort(rng.choice(n, m, replace=False))
        Phi = np.eye(n)[idx]
        y = rng.standard_normal(m)
        t0 = time.perf_counter()
        res = solve(Problem(build_family("GeneralizedTV1D", n=n), Phi, DataFit.squared_l2(y), lam))
        rep, report = certify_bound(res)
        ours += time.perf_counter() - t0
        structure &= report.d == 1 and report.delta == 0
        u = rep.assemble()
        worst_jumps = max(worst_jumps, int(np.sum(np.abs(np.diff(u)) > 1e-9)))
        worst_r = max(worst_r, rep.r)
        worst_gap = max(worst_gap, abs(res.objective - _tv1d_qp(Phi, y, lam)))
    ok = structure and worst_r <= 2 and worst_jumps <= 2 and worst_gap <= 1e-8 and ours <= 10
    verdict("A4", ok, f"d=1, delta=0 on all: {structure}; max step atoms {worst_r}, max jumps {worst_jumps} (<=2), "
                      f"max |objective - QP| {worst_gap:.1e}, {ours:.2f}s")
    assert ok


def test_a5_tv2d_indicators(verdict):
    t0 = time.perf_counter()
    H = W = 16
    m = 8
    rng = np.random.default_rng(5)
    img = np.zeros((H, W))
    img[3:9, 4:12] = 1.0
    img[10:14, 2:6] = -0.5
    Phi = rng.standard_normal((m, H * W)) / np.sqrt(m)
    problem = Problem(build_family("TVGradient2D", H=H, W=W), Phi, DataFit.equality(Phi @ img.ravel()))
    res = solve(problem)
    rep, report = certify_bound(res)
    u = rep.assemble()
    signed_indicators = all(a.label[0] == "F" for a in rep.atoms) and np.all(rep.alphas > 0)
    distinct = _distinct(u)
    residual = float(np.linalg.norm(Phi @ u - problem.fit.y))
    worst_ratio = 0.0
    for _ in range(100):
        g = rng.standard_normal(9)
        ratio, _, _ = enumerate_subsets_ratio(g, 3, 3)
        worst_ratio = max(worst_ratio, abs(-lmo_tv(g, 3, 3).value - ratio))
    elapsed = time.perf_counter() - t0
    ok = (signed_indicators and rep.r <= 8 and distinct <= rep.r + 1 and residual <= 1e-6
          and worst_ratio <= 1e-9 and elapsed <= 60)
    verdict("A5", ok, f"r_after {rep.r} (<=8), distinct values {distinct} (<= r+1), residual {residual:.1e}, "
                      f"3x3 ratio error {worst_ratio:.1e}, {elapsed:.2f}s")
    assert ok


def test_a6_optimal_face_structure(verdict):
    t0 = time.perf_counter()
    results = [run_instance("faces", 6, i) for i in range(200)]
    elapsed = time.perf_counter() - t0
    passed = sum(r["passed"] for r in results)
    rays = sum(r["detail"].get("rays", 0) > 0 for r in results)
    ok = passed == 200 and elapsed <= 60
    verdict("A6", ok, f"{passed}/200 instances pass ({rays} with unbounded solution sets), {elapsed:.2f}s")
    assert ok, [r for r in results if not r["passed"]][:3]


def _grid_min(problem, radius, points=41):
    axis = np.linspace(-radius, radius, points)
    n = problem.n
    U = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), -1).reshape(-1, n)
    r = U @ problem.phi.matrix.T - problem.fit.y
    vals = np.minimum(0.5 * r * r, problem.fit.cap).sum(1) + problem.reg_weight * np.abs(U).sum(1)
    return float(vals.min())


def test_a7_nonconvex_fit(verdict):
    t0 = time.perf_counter()
    ok_count, worst_excess = 0, -np.inf
    for seed in range(20):
        rng = np.random.default_rng([7, seed])
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        Phi = rng.standard_normal((m, n))
        y = 2 * rng.standard_normal(m)
        problem = Problem(build_family("L1Ball", n=n), Phi, DataFit.truncated_quadratic(y, 0.5), 0.3)
        res = solve_tiny_nonconvex(problem)
        rep, report = certify_bound(res)
        radius = 1.0 + 0.5 * m / 0.3  # J(u) <= f(0)/lam at any optimum
        excess = res.objective - _grid_min(problem, radius, 41 if n <= 3 else 21)
        worst_excess = max(worst_excess, excess)
        ok_count += report.r_out <= report.bound and excess <= 1e-3
    elapsed = time.perf_counter() - t0
    ok = ok_count == 20 and elapsed <= 60
    verdict("A7", ok, f"{ok_count}/20 optima sparsify to r <= m-d+delta, "
                      f"max excess over independent grid {worst_excess:.1e} (<=1e-3), {elapsed:.2f}s")
    assert ok


def test_a8_lmo_equivalence(verdict):
    rng = np.random.default_rng(8)
    mismatches = 0
    for tag, n in (("L1Ball", 20), ("NonnegOrthant", 12), ("GeneralizedTV1D", 10)):
        gauge = build_family(tag, n=n)
        for k in range(500):
            g = rng.standard_normal(n)
            if k % 5 == 0:
                g = np.round(g)
            mismatches += gauge.lmo(g).atom.label != brute_force_lmo(gauge, g).atom.label
    tv = build_family("TVGradient2D", H=3, W=3)
    tv_err = max(abs(tv.lmo(g).value - brute_force_lmo(tv, g).value) for g in rng.standard_normal((100, 9)))
    psd = build_family("PsdCone", p=3)
    psd_excess = -np.inf
    for _ in range(20):
        A = rng.standard_normal((3, 3))
        G = (A + A.T).ravel()
        psd_excess = max(psd_excess, psd.lmo(G).value - brute_force_lmo(psd, G, samples=10_000).value)
    ok = mismatches == 0 and tv_err <= 1e-9 and psd_excess <= 1e-6
    verdict("A8", ok, f"finite-family mismatches {mismatches}/1500, TV ratio error {tv_err:.1e}, "
                      f"PSD fast minus sampled {psd_excess:.1e} (<=1e-6)")
    assert ok
