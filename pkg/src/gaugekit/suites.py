"""Randomized verification suites behind ``gaugekit verify``.

Each suite maps an instance index and a base seed to a pure check; instance
``i`` draws from ``numpy.random.default_rng([seed, i])`` so any failure can
be replayed alone.
"""

from __future__ import annotations

import numpy as np

from .caratheodory import certify_bound
from .core import EQUALITY, DataFit, Problem, evaluate_gauge
from .families import build_family
from .oracle import (
    Polyhedron,
    brute_force_lmo,
    check_face_partition,
    check_klee_reconstruction,
    enumerate_optimal_face,
    enumerate_subsets_ratio,
    enumerate_vertices,
    exhaustive_min_cut,
    random_tiny_instance,
)
from .solver import solve
from .tvgrad import best_ratio_set, lmo_tv, maxflow

__all__ = ["SUITES", "DEFAULT_COUNTS", "run_instance"]

DEFAULT_COUNTS = {"lmo": 100, "faces": 200, "klee": 50, "bounds": 200, "tv": 100}


def _lmo_case(rng):
    kind = rng.choice(["L1Ball", "NonnegOrthant", "GeneralizedTV1D", "PsdCone", "TVGradient2D"])
    if kind == "PsdCone":
        gauge = build_family("PsdCone", p=3)
        G = rng.standard_normal((3, 3))
        g = (G + G.T).ravel()
        fast = gauge.lmo(g)
        slow = brute_force_lmo(gauge, g, samples=10_000, seed=int(rng.integers(2**31)))
        ok = fast.value <= slow.value + 1e-6
        return ok, {"family": kind, "fast": fast.value, "sampled": slow.value}
    if kind == "TVGradient2D":
        gauge = build_family("TVGradient2D", H=3, W=3)
        g = rng.standard_normal(9)
        fast = gauge.lmo(g)
        slow = brute_force_lmo(gauge, g)
        ok = abs(fast.value - slow.value) <= 1e-9
        return ok, {"family": kind, "fast": fast.value, "brute": slow.value}
    n = {"L1Ball": 20, "NonnegOrthant": 10, "GeneralizedTV1D": 8}[str(kind)]
    gauge = build_family(str(kind), n=n)
    g = rng.standard_normal(n)
    if rng.random() < 0.2:
        g = np.round(g)  # exercise ties
    fast, slow = gauge.lmo(g), brute_force_lmo(gauge, g)
    ok = fast.atom.label == slow.atom.label
    return ok, {"family": str(kind), "fast": str(fast.atom.label), "brute": str(slow.atom.label)}


def _faces_case(rng):
    problem = random_tiny_instance(rng)
    face = enumerate_optimal_face(problem)
    detail = {
        "family": problem.gauge.family_tag,
        "fit": problem.fit.kind,
        "m": problem.m,
        "n": problem.n,
        "vertices": len(face.vertices),
        "rays": len(face.rays),
        "dim_S_B": face.dim_s_b,
    }
    result = solve(problem)
    u = result.u
    scale = max(1.0, abs(face.optimal_value))
    value_ok = abs(result.objective - face.optimal_value) <= 1e-8 * scale
    # the solver's point must lie in the enumerated solution set
    in_set = np.linalg.norm(problem.phi.matrix @ u - face.z_star) <= 1e-7 * (1 + np.linalg.norm(face.z_star))
    if not problem.gauge.conic:
        in_set &= abs(evaluate_gauge(problem.gauge, u) - face.t_star) <= 1e-7 * max(1.0, face.t_star)
    detail.update(objective_gap=result.objective - face.optimal_value)
    return bool(face.ok and value_ok and in_set), detail


def _random_polyhedron(rng):
    """Pointed polyhedron ``{x >= 0, R x <= b}`` with small-integer data; it
    is unbounded whenever the cuts leave some orthant direction free."""
    k = int(rng.integers(2, 5))
    rows = int(rng.integers(1, 4))
    R = rng.integers(-1, 3, size=(rows, k)).astype(float)
    b = rng.integers(1, 4, size=rows).astype(float)
    return Polyhedron(np.vstack([-np.eye(k), R]), np.concatenate([np.zeros(k), b]))


def _klee_case(rng):
    poly = _random_polyhedron(rng)
    klee = check_klee_reconstruction(poly, n_samples=30, seed=int(rng.integers(2**31)))
    vertices, rays = enumerate_vertices(poly)
    points = list(vertices)
    for a in vertices:
        for b in vertices:
            points.append(0.5 * (a + b))
        for r in rays:
            points.append(a + r)
    faces = check_face_partition(poly, points)
    return bool(klee and faces), {"dim": poly.dim, "vertices": len(vertices), "rays": len(rays)}


def _bounds_case(rng):
    tag = str(rng.choice(["L1Ball", "NonnegOrthant", "GeneralizedTV1D"]))
    m = int(rng.integers(2, 7))
    n = int(rng.integers(m + 1, 31))
    gauge = build_family(tag, n=n)
    if tag == "GeneralizedTV1D":
        idx = np.sort(rng.choice(n, size=m, replace=False))
        Phi = np.eye(n)[idx]
    else:
        Phi = rng.standard_normal((m, n)) / np.sqrt(m)
    if rng.random() < 0.5 or tag == "NonnegOrthant":
        fit = DataFit.squared_l2(rng.standard_normal(m))
        lam = float(rng.choice([0.05, 0.1, 1.0]))
    else:
        u0 = np.zeros(n)
        u0[rng.choice(n, size=2, replace=False)] = rng.standard_normal(2)
        fit = DataFit(EQUALITY, Phi @ u0)
        lam = 1.0
    problem = Problem(gauge, Phi, fit, lam)
    result = solve(problem)
    rep, report = certify_bound(result)
    ok = report.bound_met and report.phi_residual <= 1e-9 and report.objective_change <= 1e-8
    detail = {"family": tag, "m": m, "n": n, "r_in": report.r_in, "r_out": report.r_out, "bound": report.bound}
    return bool(ok), detail


def _tv_case(rng):
    g = rng.standard_normal(9)
    fast = lmo_tv(g, 3, 3)
    ratio, _, _ = enumerate_subsets_ratio(g, 3, 3)
    ratio_ok = abs(-fast.value - max(ratio, 0.0)) <= 1e-9
    trace = best_ratio_set(g, 3, 3)
    # min-cut on a random 6-node network against exhaustive enumeration
    edges = [(int(u), int(v), float(c)) for u, v, c in zip(
        rng.integers(0, 6, 12), rng.integers(0, 6, 12), rng.uniform(0, 5, 12)) if u != v]
    cut = maxflow(6, edges, 0, 5)
    brute, _ = exhaustive_min_cut(6, edges, 0, 5)
    cut_ok = abs(cut.value - brute) <= 1e-9 * max(1.0, brute)
    return bool(ratio_ok and cut_ok), {"ratio": -fast.value, "brute_ratio": ratio,
                                       "dinkelbach_steps": len(trace.rhos), "cut": cut.value}


SUITES = {
    "lmo": _lmo_case,
    "faces": _faces_case,
    "klee": _klee_case,
    "bounds": _bounds_case,
    "tv": _tv_case,
}


def run_instance(suite, seed, index):
    """Run one instance; exceptions count as failures."""
    rng = np.random.default_rng([seed, index])
    try:
        passed, detail = SUITES[suite](rng)
    except Exception as exc:  # a crash is a failed verification
        passed, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
    return {"suite": suite, "seed": [seed, index], "index": index, "passed": bool(passed), "detail": detail}
