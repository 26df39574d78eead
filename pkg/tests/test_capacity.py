import numpy as np
import pytest

from lathom.capacity import (CUBE_CAPACITY_LITERATURE, CapacityProblem, PhiTable, doubling_quotient,
                             extrapolate_in_R, interior_cell_indices, lipschitz_quotient, patched_density_sum,
                             phi_continuum_oracle, phi_growth_check, phi_integral, phi_value)
from lathom.continuum import HomogenizedDensity
from lathom.densities import power_density
from lathom.lattice import LatticeFunction, build_domain

NN15 = power_density(1.5, 2, "nearest_neighbor", 2)
NN2 = power_density(2.0, 2, "nearest_neighbor", 2)


def test_zero_datum():
    assert phi_value(NN15, [0.0], 0.25, 4.0) == 0.0


def test_problem_preconditions():
    with pytest.raises(ValueError):
        CapacityProblem(NN2, [1.0], 0.5, 4.0)
    with pytest.raises(ValueError):
        CapacityProblem(NN2, [1.0], 0.25, 1.4)


def test_pin_geometry():
    spec, cons = CapacityProblem(NN2, [1.0], 0.25, 4.0).build()
    dom = spec.domain
    idx = dom.indices
    cheb = np.abs(idx).max(1)
    vals = np.full(dom.n_sites, np.nan)
    vals[cons.sites] = cons.values[:, 0]
    assert np.all(vals[cheb <= 1] == -1.0)
    assert np.all(np.isnan(vals[(cheb >= 2) & (cheb <= 6)]))
    assert np.all(vals[cheb >= 7] == 0.0)
    assert cheb.max() == 8


@pytest.mark.parametrize("t", [2.0, 3.0, 0.37])
def test_homogeneity_of_direct_solves(t):
    z = np.array([0.6, -0.8])
    a = phi_value(NN15, t * z, 0.25, 4.0)
    b = phi_value(NN15, z, 0.25, 4.0)
    assert a == pytest.approx(t ** 1.5 * b, rel=1e-8)


def test_monotone_in_R_and_T():
    z = [1.0]
    vals_R = [phi_value(NN15, z, 0.25, R) for R in (2.0, 3.0, 4.0, 6.0)]
    assert all(b <= a for a, b in zip(vals_R, vals_R[1:]))
    poly = [power_density(1.5, T, "polynomial", 2, s=3) for T in (2.0, 3.0, 4.0)]
    vals_T = [phi_value(f, z, 0.25, 4.0) for f in poly]
    assert all(b >= a for a, b in zip(vals_T, vals_T[1:]))


def test_isotropic_quadratic_ratio_is_direction_free():
    rng = np.random.default_rng(0)
    ratios = []
    for _ in range(4):
        z = rng.standard_normal(2)
        ratios.append(phi_value(NN2, z, 0.25, 4.0) / float(z @ z))
    assert max(ratios) - min(ratios) <= 1e-6 * max(ratios)


def test_growth_check_flags_degenerate_density():
    degenerate = power_density(2.0, 2, {(0, 1): 1.0, (0, -1): 1.0}, 2, strict=False)
    rep = phi_growth_check(degenerate, 0.25, 4.0, [[1.0], [-1.0]])
    assert not rep.ok
    good = phi_growth_check(NN15, 0.25, 4.0, [[1.0], [-1.0], [2.5]])
    assert good.ok and good.c1 > 0
    assert good.c1 == pytest.approx(good.c2, rel=1e-9)


def test_doubling_quotient_two_routes():
    z = np.array([0.3, 0.9])
    pz = phi_value(NN15, z, 0.25, 4.0)
    p2z = phi_value(NN15, 2 * z, 0.25, 4.0)
    direct = lipschitz_quotient(1.5, z, 2 * z, pz, p2z)
    assert direct == pytest.approx(doubling_quotient(1.5, pz, z), rel=1e-8)
    assert lipschitz_quotient(1.5, z, z, pz, pz) == 0.0


def test_phi_table_uses_homogeneity():
    table = PhiTable(NN15, 0.25, 4.0)
    e = np.array([1.0, 0.0])
    table(3 * e)
    table(0.5 * e)
    assert table.solves == 1


def test_far_field_model_is_exact_on_model_data():
    p, d = 2.0, 3
    Rs = np.array([4.0, 6.0, 8.0])
    vals = (0.5 - 0.3 * Rs ** -1.0) ** -(p - 1)
    v, _ = extrapolate_in_R(p, d, Rs, vals)
    assert v == pytest.approx(2.0, rel=1e-12)


def test_continuum_oracle_homogeneity():
    fh = HomogenizedDensity.from_density(power_density(2, 2, "nearest_neighbor", 3))
    hs, Rs = [0.25, 1 / 6, 0.125], [2.0, 3.0]
    a = phi_continuum_oracle([2.0], fh, hs, Rs).value
    b = phi_continuum_oracle([1.0], fh, hs, Rs).value
    assert a == pytest.approx(4.0 * b, rel=1e-6)
    assert phi_continuum_oracle([0.0], fh, hs, Rs).value == 0.0


def test_literature_constant():
    assert CUBE_CAPACITY_LITERATURE == pytest.approx(8.3023, rel=1e-4)


def test_patched_sum_of_constant():
    delta = 0.125
    dom = build_domain([(0, 1), (0, 1)], 1 / 32)
    z = np.array([0.7])
    u = LatticeFunction(dom, np.full(dom.n_sites, 0.7))
    cells = interior_cell_indices([(0, 1), (0, 1)], delta)
    phi = lambda w: 2.0 * float(np.abs(w[0])) ** 1.5
    total = patched_density_sum(u, [(0, 1), (0, 1)], delta, phi)
    assert total == pytest.approx(len(cells) * delta ** 2 * phi(z), rel=1e-12)
    assert patched_density_sum(LatticeFunction.zeros(dom), [(0, 1), (0, 1)], delta, phi) == 0.0


def test_patched_sum_converges_to_integral():
    phi = lambda w: float(np.abs(w[0])) ** 1.5
    f = lambda x: np.sin(np.pi * x[:, 0])
    ref = phi_integral(f, [(0, 1), (0, 1)], phi)
    gaps = []
    for delta in (1 / 8, 1 / 16, 1 / 32):
        dom = build_domain([(0, 1), (0, 1)], delta / 8)
        u = LatticeFunction.from_callable(dom, f)
        gaps.append(abs(patched_density_sum(u, [(0, 1), (0, 1)], delta, phi) - ref))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 4 * (1 / 32)
