"""Cell problems on lattice cubes with affine boundary frames, and their extrapolation in the cell size."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .densities import InteractionDensity, PowerDensity
from .energy import EnergySpec
from .lattice import ConstraintSet, chebyshev_index, cube_domain
from .solver import MinimizationResult, SolveOptions, minimize


@dataclass
class CellProblemResult:
    h: int
    M: np.ndarray
    value: float  # min / h^d
    minimum: float
    sites_per_axis: int
    result: MinimizationResult = field(repr=False, default=None)

    @property
    def site_normalized(self) -> float:
        """min / n^d with n the number of lattice sites per axis of the cell."""
        return self.minimum / self.sites_per_axis ** self.M.shape[1]


def min_cell_size(density: InteractionDensity) -> int:
    """Smallest admissible cube side: twice the reach plus two."""
    return int(math.ceil(2 * density.reach + 2 - 1e-12))


def cell_problem(density: InteractionDensity, M, h: int, opts: SolveOptions | None = None) -> CellProblemResult:
    """Minimize the unit-spacing energy on ``Z^d cap Q_h`` with ``u(alpha) = M alpha`` on the frame.

    A site is pinned when its closed unit neighbourhood ``alpha + [-1, 1]^d``
    meets the complement of the open cube ``Q_h``, i.e. when
    ``max_k |alpha_k| >= h/2 - 1``.  Returns the minimum divided by ``h^d``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = density.d
    if M.shape[1] != d:
        raise ValueError(f"M must have {d} columns")
    if int(h) != h or h < min_cell_size(density):
        raise ValueError(f"cell size h={h!r} too small for interaction reach {density.reach:g} "
                         f"(need an integer h >= {min_cell_size(density)})")
    h = int(h)
    dom = cube_domain(1.0, float(h), d)
    cheb = dom.from_grid(chebyshev_index(dom))
    pinned = cheb >= h / 2 - 1
    coords = dom.coords
    affine = coords @ M.T
    cons = ConstraintSet(dom, np.flatnonzero(pinned), affine[pinned])
    res = minimize(EnergySpec(density, dom), cons, opts)
    if not res.converged:
        raise RuntimeError(f"cell problem h={h} did not converge: {res.message}")
    return CellProblemResult(h=h, M=M, value=res.value / h ** d, minimum=res.value,
                             sites_per_axis=dom.shape[0], result=res)


def affine_energy_density(density: InteractionDensity, M) -> float:
    """Closed form ``sum_xi f(xi, M xi / |xi|)`` (the homogenized density of convex families)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    parts = []
    for j, xi in enumerate(density.offsets):
        v = np.asarray(xi, dtype=float)
        parts.append(float(density.value(j, (M @ v / np.linalg.norm(v))[None, :])[0]))
    return math.fsum(parts)


def affine_energy_gradient(density: InteractionDensity, M) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    out = np.zeros_like(M)
    for j, xi in enumerate(density.offsets):
        v = np.asarray(xi, dtype=float) / np.linalg.norm(xi)
        g = density.gradient(j, (M @ v)[None, :])[0]
        out += np.outer(g, v)
    return out


@dataclass
class HomEstimate:
    value: float
    error: float
    order: float
    rows: list  # (h, raw value, site-normalized value)
    oracle: float | None = None
    monotone: bool = True
    within_error: bool | None = None
    flags: list = field(default_factory=list)

    @property
    def relative_gap(self) -> float | None:
        if self.oracle is None:
            return None
        if self.oracle == 0:
            return abs(self.value)
        return abs(self.value - self.oracle) / abs(self.oracle)

    def csv_rows(self):
        gap = self.relative_gap
        return [(h, raw, self.value, self.oracle if self.oracle is not None else "", gap if gap is not None else "")
                for h, raw, _ in self.rows]


def observed_order(x: np.ndarray, v: np.ndarray) -> float:
    """Exponent q with v = v_inf + a x^q through three points (NaN if no such q)."""
    r = (v[0] - v[1]) / (v[1] - v[2]) if v[1] != v[2] else math.nan
    if not math.isfinite(r) or r <= 0:
        return math.nan

    def g(q):
        return (x[0] ** q - x[1] ** q) / (x[1] ** q - x[2] ** q) - r

    lo, hi = 0.05, 8.0
    try:
        if g(lo) * g(hi) > 0:
            return math.nan
        return float(brentq(g, lo, hi, xtol=1e-12))
    except ValueError:
        return math.nan


def extrapolate_in_inverse_size(n: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Quadratic fit ``v = v_inf + a/n + b/n^2`` through the last three points.

    Returns (v_inf, error) with error the distance to the linear fit through the last two points.
    """
    x = 1.0 / np.asarray(n[-3:], dtype=float)
    y = np.asarray(v[-3:], dtype=float)
    V = np.vander(x, 3, increasing=True)
    coef = np.linalg.solve(V, y)
    x2, y2 = x[-2:], y[-2:]
    lin = y2[1] - x2[1] * (y2[1] - y2[0]) / (x2[1] - x2[0])
    return float(coef[0]), float(abs(coef[0] - lin))


def f_hom_estimate(density: InteractionDensity, M, h_list, opts: SolveOptions | None = None,
                   convex: bool | None = None) -> HomEstimate:
    """Extrapolate cell-problem values to infinite cell size.

    The fit runs on ``min / n^d`` against ``1/n`` with ``n`` the number of sites
    per axis (same limit as ``min / h^d``).  For convex power densities the
    closed form is attached as the oracle and agreement within the error bar is
    recorded.
    """
    h_list = [int(h) for h in h_list]
    if len(h_list) < 3:
        raise ValueError("need at least three cell sizes")
    if any(b <= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("cell sizes must be increasing")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        rows = [(h, 0.0, 0.0) for h in h_list]
        return HomEstimate(0.0, 0.0, math.nan, rows, 0.0 if _is_convex(density, convex) else None, True, True)
    results = [cell_problem(density, M, h, opts) for h in h_list]
    rows = [(r.h, r.value, r.site_normalized) for r in results]
    n = np.array([r.sites_per_axis for r in results], dtype=float)
    v = np.array([r.site_normalized for r in results])
    value, err = extrapolate_in_inverse_size(n, v)
    order = observed_order(1.0 / n[-3:], v[-3:])
    dv = np.diff(v[-3:])
    monotone = bool(np.all(dv >= 0) or np.all(dv <= 0))
    flags = [] if monotone else ["non-monotone tail"]
    oracle = affine_energy_density(density, M) if _is_convex(density, convex) else None
    within = None
    if oracle is not None:
        within = abs(value - oracle) <= max(err, 1e-8 * abs(oracle))
        if not within:
            flags.append("closed form outside the error bar")
    return HomEstimate(value, err, order, rows, oracle, monotone, within, flags)


def _is_convex(density, convex):
    if convex is not None:
        return convex
    return isinstance(density, PowerDensity)
