import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaugekit.caratheodory import applicable_bound, certify_bound, kernel_vector, sparsify
from gaugekit.core import AtomicRepresentation, DataFit, Problem, evaluate_objective
from gaugekit.families import build_family
from gaugekit.solver import solve


def _l1_atoms(gauge, *labels):
    by_label = {a.label: a for a in gauge.atoms}
    return tuple(by_label[label] for label in labels)


def test_three_equal_coordinates_collapse_to_first():
    gauge = build_family("L1Ball", n=3)
    p = Problem(gauge, [[1.0, 1.0, 1.0]], DataFit.equality([1.0]))
    atoms = _l1_atoms(gauge, ("e", 0, 1), ("e", 1, 1), ("e", 2, 1))
    rep = AtomicRepresentation(np.zeros(3), np.full(3, 1 / 3), atoms)
    out, report = sparsify(rep, p, optimal_flag=True, delta=0)
    assert [a.label for a in out.atoms] == [("e", 0, 1)]
    np.testing.assert_allclose(out.alphas, [1.0])
    assert report.bound == 1 and report.bound_met
    assert report.phi_residual < 1e-12 and abs(report.cost_change) < 1e-12


def test_already_sparse_is_unchanged():
    gauge = build_family("L1Ball", n=3)
    p = Problem(gauge, [[1.0, 2.0, 3.0]], DataFit.equality([2.0]))
    rep = AtomicRepresentation(np.zeros(3), [1.0], _l1_atoms(gauge, ("e", 1, 1)))
    out, report = sparsify(rep, p, optimal_flag=True)
    np.testing.assert_array_equal(out.alphas, rep.alphas)
    assert report.pivot_log == []


def test_two_rays_collapse():
    gauge = build_family("NonnegOrthant", n=2)
    p = Problem(gauge, [[1.0, 1.0]], DataFit.squared_l2([3.0]))
    rays = tuple(a for a in gauge.atoms if a.is_ray)
    rep = AtomicRepresentation(np.zeros(2), [1.5, 1.5], rays)
    out, report = sparsify(rep, p, optimal_flag=True, delta=1)
    assert out.r == 1 and out.alphas[0] == pytest.approx(3)
    assert report.bound == 1 and report.rays_only and report.phi_residual < 1e-12
    assert report.pivot_log[0].step == pytest.approx(1.5)


def test_kernel_vector():
    K = np.array([[1.0, 1.0, 1.0]])
    gamma = kernel_vector(K)
    np.testing.assert_allclose(K @ gamma, 0, atol=1e-15)
    assert np.abs(gamma).max() > 0
    assert kernel_vector(np.eye(3)) is None
    np.testing.assert_array_equal(kernel_vector(np.zeros((2, 2))), [1.0, 0.0])


def test_applicable_bound():
    gauge = build_family("NonnegOrthant", n=2)
    rays = [a for a in gauge.atoms if a.is_ray]
    assert applicable_bound(4, 0, 1, rays) == (4, True)
    assert applicable_bound(4, 1, 0, build_family("L1Ball", n=2).atoms[:1]) == (3, False)


def test_certify_psd_rank():
    rng = np.random.default_rng(0)
    p_dim, m = 6, 4
    A = rng.standard_normal((m, p_dim, p_dim))
    Phi = (A + A.transpose(0, 2, 1)).reshape(m, -1) / 2
    V = rng.standard_normal((p_dim, 3))
    y = Phi @ (V @ V.T).ravel()
    res = solve(Problem(build_family("PsdCone", p=p_dim), Phi, DataFit.equality(y)))
    rep, report = certify_bound(res)
    X = rep.assemble().reshape(p_dim, p_dim)
    assert report.bound_met and rep.r <= 4
    assert np.linalg.matrix_rank(X, tol=1e-8) <= 4


def test_certify_tv1d_two_samples():
    Phi = np.eye(8)[[2, 6]]
    res = solve(Problem(build_family("GeneralizedTV1D", n=8), Phi, DataFit.squared_l2([0.0, 2.0]), 0.1))
    rep, report = certify_bound(res)
    assert report.d == 1 and report.delta == 0 and report.bound == 1
    assert rep.r <= 1


def test_suboptimal_input_is_flagged():
    gauge = build_family("L1Ball", n=2)
    p = Problem(gauge, [[1.0, 1.0]], DataFit.equality([1.0]))
    atoms = _l1_atoms(gauge, ("e", 0, 1), ("e", 1, 1), ("e", 1, -1))
    # 1 = 1*e0 + 0.5*e1 - 0.5*e1: feasible but not minimal cost
    rep = AtomicRepresentation(np.zeros(2), [1.0, 0.5, 0.5], atoms)
    out, report = sparsify(rep, p, optimal_flag=True, delta=0)
    assert report.phi_residual < 1e-12
    assert any("suboptimal" in msg for msg in report.diagnostics)


def test_phase_a_only_preserves_cost():
    rng = np.random.default_rng(4)
    gauge = build_family("L1Ball", n=10)
    Phi = rng.standard_normal((3, 10))
    atoms = gauge.atoms[::2]
    rep = AtomicRepresentation(np.zeros(10), rng.uniform(0.1, 1, len(atoms)), atoms)
    p = Problem(gauge, Phi, DataFit.squared_l2(np.zeros(3)))
    out, report = sparsify(rep, p, optimal_flag=False, delta=0)
    assert out.r <= 3 - 0 + 1
    assert report.cost_change == pytest.approx(0, abs=1e-10)
    assert report.phi_residual < 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["L1Ball", "NonnegOrthant", "GeneralizedTV1D"]))
def test_sparsify_conserves_and_is_deterministic(seed, tag):
    rng = np.random.default_rng(seed)
    m, n = int(rng.integers(1, 5)), int(rng.integers(5, 15))
    gauge = build_family(tag, n=n)
    Phi = rng.standard_normal((m, n))
    p = Problem(gauge, Phi, DataFit.squared_l2(rng.standard_normal(m)), 0.5)
    res = solve(p)
    a_rep, a = certify_bound(res)
    b_rep, b = certify_bound(res)
    assert a.bound_met and a.phi_residual <= 1e-9 and a.objective_change <= 1e-8
    assert a_rep.total_cost <= res.rep.total_cost + 1e-9
    np.testing.assert_array_equal(a_rep.alphas, b_rep.alphas)
    assert evaluate_objective(p, a_rep.assemble()) == pytest.approx(res.objective, abs=1e-8)
