import numpy as np
import pytest
from hypothesis import given, strategies as st

from lathom.densities import power_density
from lathom.homogenization import (affine_energy_density, affine_energy_gradient, cell_problem,
                                   extrapolate_in_inverse_size, f_hom_estimate, min_cell_size, observed_order)


def test_zero_gradient_cell():
    f = power_density(1.5, 3, "polynomial", 2, s=3)
    r = cell_problem(f, [[0.0, 0.0]], 8)
    assert r.value == 0.0 and np.all(r.result.minimizer.values == 0)
    est = f_hom_estimate(f, [[0.0, 0.0]], [8, 16, 32])
    assert est.value == 0.0 and est.relative_gap == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_affine_function_is_the_cell_minimizer(p):
    # with reach 1 every free site keeps all its pair partners, so affine data are critical
    f = power_density(p, 2, "nearest_neighbor", 2)
    M = np.array([[0.8, -0.3]])
    r = cell_problem(f, M, 10)
    dom = r.result.minimizer.domain
    assert np.allclose(r.result.minimizer.values, dom.coords @ M.T, atol=1e-6)
    assert r.value == pytest.approx(affine_energy_density(f, M) * (r.sites_per_axis - 1) * r.sites_per_axis / 100, rel=1e-6)


def test_cell_value_is_homogeneous():
    rng = np.random.default_rng(0)
    f = power_density(1.5, 2, "nearest_neighbor", 2)
    M = rng.standard_normal((1, 2))
    a = cell_problem(f, 2 * M, 8).value
    b = cell_problem(f, M, 8).value
    assert a == pytest.approx(2 ** 1.5 * b, rel=1e-12)


def test_nearest_neighbour_quadratic_limit_is_two():
    f = power_density(2, 2, "nearest_neighbor", 2)
    est = f_hom_estimate(f, [[1.0, 0.0]], [8, 16, 32])
    assert abs(est.value - 2.0) <= 1e-3
    assert est.oracle == 2.0
    assert est.within_error and est.monotone


def test_small_cells_rejected():
    f = power_density(2, 3, "polynomial", 2, s=3)
    assert min_cell_size(f) == 8
    with pytest.raises(ValueError):
        cell_problem(f, [[1.0, 0.0]], 7)
    with pytest.raises(ValueError):
        f_hom_estimate(f, [[1.0, 0.0]], [8, 16])


def test_closed_form_hand_value():
    f = power_density(2, 2, "nearest_neighbor", 2)
    assert affine_energy_density(f, [[3.0, 4.0]]) == pytest.approx(2 * 9 + 2 * 16)
    g = affine_energy_gradient(f, [[3.0, 4.0]])
    assert np.allclose(g, [[12.0, 16.0]])


def test_observed_order_and_extrapolation_on_synthetic_data():
    h = np.array([0.5, 0.25, 0.125])
    assert observed_order(h, 1.0 + 3.0 * h ** 1.7) == pytest.approx(1.7, rel=1e-9)
    n = np.array([8.0, 16.0, 32.0])
    v = 2.0 + 1.5 / n - 0.7 / n ** 2
    val, _ = extrapolate_in_inverse_size(n, v)
    assert val == pytest.approx(2.0, rel=1e-12)


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.sampled_from([1.5, 2.0, 2.5]))
def test_closed_form_is_homogeneous(M, p):
    f = power_density(p, 3, "polynomial", 2, s=3)
    a = affine_energy_density(f, [[2 * x for x in M]])
    assert a == pytest.approx(2 ** p * affine_energy_density(f, [M]), rel=1e-12, abs=1e-300)
