import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gaugekit.core import GaugeError
from gaugekit.families import build_family
from gaugekit.oracle import brute_force_lmo, enumerate_subsets_ratio, exhaustive_min_cut
from gaugekit.tvgrad import (
    atom_mask,
    best_ratio_set,
    level_set_decomposition,
    lmo_tv,
    maxflow,
    perimeter,
    read_pgm,
    tv_gauge,
    write_pgm,
)


def _mask(H, W, cells):
    m = np.zeros((H, W), dtype=bool)
    for r, c in cells:
        m[r, c] = True
    return m


def test_perimeter_examples():
    assert perimeter(_mask(3, 3, [(1, 1)])) == 4
    assert perimeter(np.ones((3, 3), dtype=bool)) == 12
    assert perimeter(_mask(3, 3, [(1, 0), (1, 1)])) == 6


def test_perimeter_of_empty_set_is_an_error():
    with pytest.raises(GaugeError):
        perimeter(np.zeros((2, 2), dtype=bool))


def test_tv_gauge_examples():
    F = _mask(3, 3, [(1, 0), (1, 1)]).astype(float).ravel()
    assert tv_gauge(F, 3, 3) == 6
    assert tv_gauge(np.zeros(9), 3, 3) == 0
    assert tv_gauge(2 * F, 3, 3) == 12


def test_lmo_tv_column_grid():
    # cells {0, 1} of a 3x1 column: gain 2, perimeter 2 + 2 sides + 2 ends = 6
    res = lmo_tv(np.array([-1.0, -1.0, 1.0]), 3, 1)
    assert res.atom.label[1] == 1
    np.testing.assert_array_equal(atom_mask(res.atom).ravel(), [True, True, False])
    assert -res.value == pytest.approx(2 / 6)


@pytest.mark.parametrize("rows,cols", [((0, 2), (0, 2)), ((1, 3), (0, 3)), ((0, 1), (1, 2)), ((0, 3), (1, 3))])
def test_lmo_tv_recovers_rectangle(rows, cols):
    G = np.zeros((3, 3), dtype=bool)
    G[rows[0] : rows[1], cols[0] : cols[1]] = True
    g = -2.5 * G.ravel().astype(float)
    res = lmo_tv(g, 3, 3)
    ratio, sign, mask = enumerate_subsets_ratio(g, 3, 3)
    assert res.atom.label[1] == 1 and sign == 1
    np.testing.assert_array_equal(atom_mask(res.atom), G)
    assert -res.value == pytest.approx(ratio, abs=1e-12)


def test_lmo_tv_uniform_positive_gradient():
    res = lmo_tv(np.full(9, 0.7), 3, 3)
    assert res.atom.label[1] == -1
    assert atom_mask(res.atom).all()


def test_maxflow_examples():
    assert maxflow(2, [(0, 1, 5.0)], 0, 1).value == pytest.approx(5)
    # source -> a -> b -> sink with the middle edge cheapest
    cut = maxflow(4, [(0, 1, 3.0), (1, 2, 1.0), (2, 3, 4.0)], 0, 3)
    assert cut.value == pytest.approx(1)
    np.testing.assert_array_equal(cut.source_side, [True, True, False, False])


def test_maxflow_handles_capacities_beyond_int32():
    cut = maxflow(3, [(0, 1, 5e9), (1, 2, 7e9)], 0, 2)
    assert cut.value == pytest.approx(5e9)


def _grid_network(rng, H=4, W=4):
    n = H * W
    s, t = n, n + 1
    edges = []
    for r in range(H):
        for c in range(W):
            v = r * W + c
            edges.append((s, v, float(rng.uniform(0, 3))))
            edges.append((v, t, float(rng.uniform(0, 3))))
            if c + 1 < W:
                w = float(rng.uniform(0, 2))
                edges.append((v, v + 1, w, w))
            if r + 1 < H:
                w = float(rng.uniform(0, 2))
                edges.append((v, v + W, w, w))
    return n + 2, edges, s, t


@pytest.mark.parametrize("seed", range(5))
def test_maxflow_matches_exhaustive_cut_on_4x4(seed):
    n, edges, s, t = _grid_network(np.random.default_rng(seed))
    cut = maxflow(n, edges, s, t)
    brute, _ = exhaustive_min_cut(n, edges, s, t)
    assert cut.value == pytest.approx(brute, rel=1e-9)
    side = np.asarray(cut.source_side)
    value = sum(e[2] * (side[e[0]] and not side[e[1]]) + (e[3] if len(e) > 3 else 0) * (side[e[1]] and not side[e[0]]) for e in edges)
    assert value == pytest.approx(brute, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(float, 9, elements=st.floats(-5, 5, allow_nan=False)))
def test_dinkelbach_matches_subset_enumeration(g):
    ratio, _, _ = enumerate_subsets_ratio(g, 3, 3)
    res = lmo_tv(g, 3, 3)
    assert -res.value == pytest.approx(max(ratio, 0.0), abs=1e-9)
    assert brute_force_lmo(build_family("TVGradient2D", H=3, W=3), g).value == pytest.approx(-ratio, abs=1e-12)


def test_dinkelbach_parameters_increase():
    g = np.random.default_rng(3).standard_normal(16)
    trace = best_ratio_set(g, 4, 4)
    assert all(b >= a for a, b in zip(trace.rhos, trace.rhos[1:]))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 12, elements=st.integers(-3, 3).map(float)))
def test_level_set_decomposition_is_exact_and_costs_tv(u):
    alphas, atoms = level_set_decomposition(u, 3, 4)
    rebuilt = sum((a * atom.vector for a, atom in zip(alphas, atoms)), np.zeros(12))
    np.testing.assert_allclose(rebuilt, u, atol=1e-9)
    assert sum(alphas) == pytest.approx(tv_gauge(u, 3, 4), abs=1e-9)
    assert all(a > 0 for a in alphas)


@pytest.mark.parametrize("binary", [True, False])
def test_pgm_round_trip(tmp_path, binary):
    img = np.arange(12).reshape(3, 4) * 20
    path = tmp_path / "x.pgm"
    write_pgm(path, img, binary=binary)
    back, maxval = read_pgm(path)
    assert maxval == 255
    np.testing.assert_array_equal(back, img)


def test_pgm_reader_skips_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_text("P2\n# a comment\n2 2\n# another\n9\n0 1\n2 9\n")
    img, maxval = read_pgm(path)
    assert maxval == 9
    np.testing.assert_array_equal(img, [[0, 1], [2, 9]])
