import numpy as np
import pytest

from lathom.continuum import (GradientObjective, HomogenizedDensity, QuadraticPotential, TabulatedPotential,
                              richardson)
from lathom.densities import power_density
from lathom.homogenization import affine_energy_density
from lathom.solver import SolveOptions, minimize_objective


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_homogenized_density_equals_closed_form(p):
    f = power_density(p, 3, "polynomial", 3, s=4)
    fh = HomogenizedDensity.from_density(f)
    rng = np.random.default_rng(0)
    for _ in range(5):
        M = rng.standard_normal((2, 3))
        assert fh(M) == pytest.approx(affine_energy_density(f, M), rel=1e-12)


def test_isotropic_quadratic_detection():
    assert HomogenizedDensity.from_density(power_density(2, 2, "nearest_neighbor", 3)).isotropic_quadratic == 2.0
    assert HomogenizedDensity.from_density(power_density(1.5, 2, "nearest_neighbor", 3)).isotropic_quadratic is None


def fd_check(obj, x, h=1e-6):
    _, g = obj.value_and_grad(x)
    fd = np.array([(obj.value_and_grad(x + h * e)[0] - obj.value_and_grad(x - h * e)[0]) / (2 * h)
                   for e in np.eye(x.size)])
    return np.linalg.norm(g - fd) / np.linalg.norm(fd)


def grid_problem(p, potential, m=1, forcing=None):
    shape = (6, 5)
    pinned = np.zeros(shape, bool)
    pinned[0, :] = pinned[-1, :] = True
    vals = np.zeros(shape + (m,))
    vals[0] = 1.0
    fh = HomogenizedDensity.from_density(power_density(p, 2, "nearest_neighbor", 2))
    return GradientObjective(shape, 0.2, fh, pinned, vals, potential, forcing)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_gradient_objective_gradient(p):
    rng = np.random.default_rng(1)
    pot = TabulatedPotential(p, 2, [1.0, 1.5, 2.0, 1.2, 0.8, 1.1, 1.4, 0.9])
    obj = grid_problem(p, pot, m=2, forcing=rng.standard_normal((6, 5, 2)))
    x = rng.standard_normal(obj.n)
    assert fd_check(obj, x) <= 1e-6


def test_quadratic_system_matches_gradient_solve():
    rng = np.random.default_rng(2)
    obj = grid_problem(2.0, QuadraticPotential(0.7), forcing=rng.standard_normal((6, 5)))
    lin = minimize_objective(obj, SolveOptions())
    grad = minimize_objective(obj, SolveOptions(method="gradient"))
    assert lin.method == "linear" and grad.method == "gradient"
    assert lin.value == pytest.approx(grad.value, rel=1e-9)


def test_tabulated_potential_m1_and_homogeneity():
    pot = TabulatedPotential(1.5, 1, [2.0, 3.0])
    Z = np.array([[-2.0], [0.5], [0.0]])
    assert np.allclose(pot.value(Z), [2.0 * 2 ** 1.5, 3.0 * 0.5 ** 1.5, 0.0])
    with pytest.raises(ValueError):
        TabulatedPotential(1.5, 1, [1.0, 2.0, 3.0])
    assert TabulatedPotential(2.0, 2, [4.0] * 8).is_quadratic


def test_richardson_recovers_limit():
    h = np.array([0.4, 0.2, 0.1])
    v0, q, err = richardson(h, 5.0 - 2.0 * h ** 2)
    assert v0 == pytest.approx(5.0, rel=1e-12) and q == pytest.approx(2.0, rel=1e-9)
