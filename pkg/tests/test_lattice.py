import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import fraction_site_scan
from lathom.lattice import (ConstraintSet, DivisibilityError, LatticeFunction, affine_interpolate_2d,
                            boundary_frame, build_domain, build_perforation, cell_average_sample,
                            difference_quotient, difference_quotients, interaction_sites, truncate_values,
                            truncation_map)


def sites(dom):
    return sorted(tuple(int(a) for a in k) for k in dom.indices)


def test_unit_square_half_spacing():
    dom = build_domain([(0, 1), (0, 1)], 0.5)
    assert dom.n_sites == 4
    assert sorted(map(tuple, dom.coords.tolist())) == [(0, 0), (0, 0.5), (0.5, 0), (0.5, 0.5)]


def test_unit_cube_quarter_spacing():
    assert build_domain([(0, 1)] * 3, 0.25).n_sites == 64


def test_site_count_matches_rational_scan():
    dom = build_domain([(-1, 1), (-1, 1)], 0.3)
    assert sites(dom) == fraction_site_scan([(-1, 1), (-1, 1)], 0.3)
    assert dom.n_sites == 49


@given(st.integers(-6, 6), st.integers(1, 9), st.integers(-6, 6), st.integers(1, 9),
       st.sampled_from([0.5, 0.25, 0.2, 0.3, 1 / 3, 0.125]))
def test_box_enumeration_against_scan(a0, w0, a1, w1, eps):
    box = [(a0 * 0.25, a0 * 0.25 + w0 * 0.3), (a1 * 0.2, a1 * 0.2 + w1 * 0.25)]
    expected = fraction_site_scan(box, eps)
    if not expected:
        with pytest.raises(ValueError):
            build_domain(box, eps)
        return
    assert sites(build_domain(box, eps)) == expected


def test_union_of_boxes_has_no_duplicates():
    dom = build_domain([[(0, 1), (0, 1)], [(0.5, 1.5), (0.5, 1.5)]], 0.25)
    expected = sorted(set(fraction_site_scan([(0, 1), (0, 1)], 0.25))
                      | set(fraction_site_scan([(0.5, 1.5), (0.5, 1.5)], 0.25)))
    assert sites(dom) == expected


def test_enumeration_is_c_order():
    dom = build_domain([(0, 1), (0, 1)], 0.25)
    idx = [tuple(k) for k in dom.indices.tolist()]
    assert idx == sorted(idx)


def test_interaction_sites_examples():
    dom = build_domain([(0, 1), (0, 1)], 0.5)
    got = sorted(map(tuple, dom.coords[interaction_sites(dom, (1, 0))].tolist()))
    assert got == [(0, 0), (0, 0.5)]
    assert len(interaction_sites(dom, (0, 0))) == dom.n_sites


def test_interaction_sites_brute_force():
    dom = build_domain([(0, 1), (0, 1)], 0.25)
    have = set(sites(dom))
    expected = sorted(k for k in have if (k[0] + 3, k[1] + 3) in have)
    got = sorted(tuple(int(a) for a in k) for k in dom.indices[interaction_sites(dom, (3, 3))])
    assert got == expected


def test_difference_quotient_examples():
    dom = build_domain([(0, 2), (0, 2)], 0.5)
    u = LatticeFunction.from_callable(dom, lambda x: x[:, 0])
    assert difference_quotient(u, (1, 0), (0, 0))[0] == pytest.approx(1.0, abs=1e-15)
    assert difference_quotient(u, (1, 1), (0, 0))[0] == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    c = LatticeFunction(dom, np.full((dom.n_sites, 2), 3.0))
    _, D = difference_quotients(c, (2, 1))
    assert np.all(D == 0)


def test_perforation_counts():
    dom = build_domain([(0, 1), (0, 1)], 0.0625)
    perf = build_perforation(1.0, 0.25, dom)
    assert perf.mask.sum() == 25
    dom = build_domain([(0.25, 0.75), (0.25, 0.75)], 0.0625)
    perf = build_perforation(0.5, 2 * 0.0625, dom)
    assert perf.mask.sum() == 9
    with pytest.raises(DivisibilityError):
        build_perforation(0.3, 0.125, build_domain([(0, 1), (0, 1)], 0.0625))


def test_perforation_membership_brute_force():
    dom = build_domain([(0, 1), (0, 1)], 1 / 16)
    perf = build_perforation(0.25, 1 / 8, dom)
    for k, hit in zip(dom.indices, perf.mask):
        x = dom.eps * k
        near = all(min(abs(c - perf.delta * round(c / perf.delta)), 1) <= perf.r / 2 + 1e-12 for c in x)
        assert near == bool(hit)


def test_boundary_frame_examples():
    frame = boundary_frame(1.0, 2, 4.0, 1.0)
    outer = {(i, j) for i in range(-2, 3) for j in range(-2, 3) if max(abs(i), abs(j)) < 2.5}
    inner = {(i, j) for i in range(-2, 3) for j in range(-2, 3) if max(abs(i), abs(j)) < 1.5}
    assert sorted(map(tuple, frame.tolist())) == sorted(outer - inner)
    assert boundary_frame(1.0, 2, 4.0, 0.0).shape == (0, 2)
    eps, R, t = 0.25, 3.0, 0.5
    got = sorted(map(tuple, boundary_frame(eps, 2, R, t).tolist()))
    rng = range(-20, 21)
    exp = sorted((i, j) for i in rng for j in rng
                 if max(abs(i), abs(j)) * eps < (R + t) / 2 and not max(abs(i), abs(j)) * eps < (R - t) / 2)
    assert got == exp


def test_cell_average_sample():
    dom = build_domain([(0, 1), (0, 1)], 0.25)
    const = cell_average_sample(lambda x: np.full(x.shape[0], 2.5), dom)
    assert np.allclose(const.values, 2.5, rtol=0, atol=1e-15)
    u = cell_average_sample(lambda x: x[:, 0], dom)
    assert np.allclose(u.values[:, 0], dom.coords[:, 0] + 0.125, rtol=0, atol=1e-15)
    one = build_domain([(0, 0.25)], 0.25)
    sq = cell_average_sample(lambda x: x[:, 0] ** 2, one)
    assert abs(sq.values[0, 0] - 0.25 ** 2 / 3) <= 1e-12


def test_affine_interpolation():
    dom = build_domain([(0, 1), (0, 1)], 0.25)
    M = np.array([[0.7, -1.3]])
    pw = affine_interpolate_2d(LatticeFunction(dom, dom.coords @ M.T))
    assert np.allclose(pw.grad_minus[pw.cells_ok], M, atol=1e-13)
    assert np.allclose(pw.grad_plus[pw.cells_ok], M, atol=1e-13)
    c = affine_interpolate_2d(LatticeFunction(dom, np.ones(dom.n_sites)))
    assert np.all(c.grad_minus == 0) and np.all(c.grad_plus == 0)


def test_affine_interpolation_dirichlet_integral_by_assembly():
    rng = np.random.default_rng(3)
    eps = 0.5
    dom = build_domain([(0, 1.5), (0, 1.5)], eps)
    u = LatticeFunction(dom, rng.standard_normal(dom.n_sites))
    g = u.grid()[..., 0]
    # each cell: lower triangle uses D1 at alpha and D2 at alpha, upper uses D1 along the top and D2 along the right
    total = 0.0
    for i in range(2):
        for j in range(2):
            d1_lo = (g[i + 1, j] - g[i, j]) / eps
            d2_lo = (g[i, j + 1] - g[i, j]) / eps
            d1_hi = (g[i + 1, j + 1] - g[i, j + 1]) / eps
            d2_hi = (g[i + 1, j + 1] - g[i + 1, j]) / eps
            total += 0.5 * eps ** 2 * (d1_lo ** 2 + d2_lo ** 2 + d1_hi ** 2 + d2_hi ** 2)
    strips = 0.0
    for i in range(3):
        for j in range(3):
            w1 = 0.5 if j in (0, 2) else 1.0
            w2 = 0.5 if i in (0, 2) else 1.0
            if i < 2:
                strips += w1 * eps ** 2 * ((g[i + 1, j] - g[i, j]) / eps) ** 2
            if j < 2:
                strips += w2 * eps ** 2 * ((g[i, j + 1] - g[i, j]) / eps) ** 2
    pw = affine_interpolate_2d(u)
    assert pw.integral_grad_p(2.0) == pytest.approx(total, rel=1e-13)
    assert pw.integral_grad_p(2.0) == pytest.approx(strips, rel=1e-13)


def test_affine_interpolation_values_at_sites():
    rng = np.random.default_rng(0)
    dom = build_domain([(0, 1), (0, 1)], 0.25)
    u = LatticeFunction(dom, rng.standard_normal((dom.n_sites, 2)))
    pw = affine_interpolate_2d(u)
    inner = np.all(dom.indices < 3, axis=1)
    assert np.allclose(pw(dom.coords[inner] + 1e-14), u.values[inner], atol=1e-12)


def test_truncation_examples():
    z = np.array([[0.3, -0.2], [1.2, 0.9]])
    assert np.array_equal(truncation_map(z, 2.0), z)
    assert np.all(truncation_map(np.array([[5.0, 0.0]]), 2.0) == 0)
    w = np.array([[0.9, 1.2]])  # |w| = 1.5
    assert np.allclose(truncation_map(w, 1.0), 0.5 * w, atol=1e-15)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.floats(0.1, 3))
def test_truncation_is_one_lipschitz(a, b, L):
    a, b = np.array([a]), np.array([b])
    lhs = np.linalg.norm(truncation_map(a, L) - truncation_map(b, L))
    assert lhs <= np.linalg.norm(a - b) * (1 + 1e-12) + 1e-12


def test_truncate_values_keeps_domain():
    dom = build_domain([(0, 1)], 0.25)
    u = LatticeFunction(dom, np.array([0.5, 3.0, 10.0, -1.5]))
    t = truncate_values(u, 2.0)
    assert t.domain is dom
    assert np.allclose(t.values[:, 0], [0.5, 3.0 * (2 - 1.5), 0.0, -1.5])


def test_piecewise_constant_evaluation():
    dom = build_domain([(0, 1), (0, 1)], 0.5)
    u = LatticeFunction(dom, np.arange(4.0))
    x = np.array([[0.1, 0.1], [0.1, 0.7], [0.7, 0.1], [0.99, 0.99], [1.2, 0.1]])
    assert u(x)[:, 0].tolist() == [0.0, 1.0, 2.0, 3.0, 0.0]


def test_constraints():
    dom = build_domain([(0, 1), (0, 1)], 0.5)
    c = ConstraintSet(dom, np.array([3, 0]), np.array([[1.0], [2.0]]))
    assert c.sites.tolist() == [0, 3]
    assert c.values[:, 0].tolist() == [2.0, 1.0]
    assert c.free_sites.tolist() == [1, 2]
    with pytest.raises(ValueError):
        ConstraintSet(dom, np.array([1, 1]), np.zeros((2, 1)))
    u = c.apply(LatticeFunction.zeros(dom))
    assert c.satisfied_by(u)
    other = ConstraintSet.from_mask(dom, np.array([False, True, False, False]), [5.0])
    assert c.merge(other).sites.tolist() == [0, 1, 3]
