"""Discrete capacitary densities, their structural checks, and the continuum reference values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .continuum import GradientObjective, HomogenizedDensity, richardson
from .densities import InteractionDensity, PowerDensity
from .energy import EnergySpec
from .lattice import (ConstraintSet, LatticeFunction, chebyshev_index, cube_domain, cube_index_radius)
from .solver import MinimizationResult, SolveOptions, minimize, minimize_objective

CUBE_CAPACITY_LITERATURE = 4.0 * math.pi * 0.66067813  # Newtonian capacity of the unit cube, int |grad u|^2 normalization


@dataclass
class CapacityProblem:
    """``u = -z`` on the sites of ``Q_1``, ``u = 0`` off ``Q_{R - eps T}``, sites of ``Q_{R + eps T}`` active."""

    density: InteractionDensity
    z: np.ndarray
    eps: float
    R: float

    def __post_init__(self):
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        T = self.density.T
        if not self.eps <= 0.25 + 1e-15:
            raise ValueError(f"eps={self.eps!r} does not resolve Q_1 (need eps <= 1/4)")
        if not self.R > 1 + self.eps * T:
            raise ValueError(f"R={self.R!r} must exceed 1 + eps*T = {1 + self.eps * T!r}")

    @property
    def T(self) -> float:
        return self.density.T

    @property
    def m(self) -> int:
        return self.z.size

    def build(self):
        eps, T, R = self.eps, self.T, self.R
        dom = cube_domain(eps, R + eps * T, self.density.d)
        cheb = dom.from_grid(chebyshev_index(dom))
        k_in = cube_index_radius(0.5, eps, closed=False)
        k_mid = cube_index_radius((R - eps * T) / 2, eps, closed=False)
        inner = cheb <= k_in
        outer = cheb > k_mid
        cons = ConstraintSet.from_mask(dom, inner, -self.z).merge(ConstraintSet.from_mask(dom, outer, np.zeros(self.m)))
        return EnergySpec(self.density, dom), cons


@dataclass
class CapacityValue:
    z: np.ndarray
    value: float
    result: MinimizationResult | None = field(default=None, repr=False)


def phi_discrete(problem: CapacityProblem, opts: SolveOptions | None = None) -> CapacityValue:
    if not np.any(problem.z):
        return CapacityValue(problem.z, 0.0, None)
    spec, cons = problem.build()
    res = minimize(spec, cons, opts)
    if not res.converged:
        raise RuntimeError(f"capacity solve did not converge: {res.message}")
    return CapacityValue(problem.z, res.value, res)


def phi_value(density, z, eps, R, opts=None) -> float:
    return phi_discrete(CapacityProblem(density, z, eps, R), opts).value


class PhiTable:
    """Capacitary density evaluated through p-homogeneity from values on unit directions.

    ``phi(z) = |z|^p phi(z/|z|)``; directions are solved on demand and cached.
    """

    def __init__(self, density, eps, R, opts=None):
        self.density, self.eps, self.R, self.opts = density, eps, R, opts
        self.cache: dict[tuple, float] = {}
        self.solves = 0

    def unit(self, e: np.ndarray) -> float:
        key = tuple(np.round(e, 15).tolist())
        if key not in self.cache:
            self.cache[key] = phi_value(self.density, np.asarray(key), self.eps, self.R, self.opts)
            self.solves += 1
        return self.cache[key]

    def __call__(self, z) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        r = float(np.linalg.norm(z))
        if r == 0:
            return 0.0
        return r ** self.density.p * self.unit(z / r)


# ---------------------------------------------------------------------------

@dataclass
class GrowthReport:
    c1: float
    c2: float
    ratios: list
    ok: bool
    failures: list


def phi_growth_check(density: InteractionDensity, eps: float, R: float, z_samples, opts=None) -> GrowthReport:
    """Empirical inf and sup of ``phi(z)/|z|^p`` over the sampled z."""
    T = density.T
    if R - 2 * eps * T < 2 - 1e-12:
        raise ValueError("growth check needs R - 2 eps T >= 2")
    p = density.p
    ratios = []
    for z in z_samples:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        nz = float(np.linalg.norm(z))
        if nz == 0:
            continue
        ratios.append(phi_value(density, z, eps, R, opts) / nz ** p)
    failures = []
    c1 = min(ratios) if ratios else math.nan
    c2 = max(ratios) if ratios else math.nan
    if not density.lambda0 > 0:
        failures.append("coordinate coercivity constant lambda0 is not positive")
    if not c1 > 0:
        failures.append("lower growth constant is not positive")
    if not math.isfinite(c2):
        failures.append("upper growth constant is not finite")
    return GrowthReport(c1, c2, ratios, not failures, failures)


@dataclass
class LipschitzReport:
    constant: float
    quotients: list
    ok: bool
    solves: int


def lipschitz_quotient(p, z, w, phi_z, phi_w) -> float:
    z, w = np.asarray(z, float), np.asarray(w, float)
    den = (np.linalg.norm(z) ** (p - 1) + np.linalg.norm(w) ** (p - 1)) * np.linalg.norm(w - z)
    if den == 0:
        return 0.0
    return abs(phi_w - phi_z) / den


def phi_lipschitz_check(density: InteractionDensity, eps: float, R: float, pairs, opts=None,
                        use_homogeneity: bool = True) -> LipschitzReport:
    """Empirical constant ``sup |phi(w) - phi(z)| / ((|z|^(p-1) + |w|^(p-1)) |w - z|)`` over the pairs."""
    p = density.p
    table = PhiTable(density, eps, R, opts)
    qs = []
    direct_solves = 0
    for z, w in pairs:
        if use_homogeneity:
            fz, fw = table(z), table(w)
        else:
            fz = phi_value(density, z, eps, R, opts) if np.any(z) else 0.0
            fw = phi_value(density, w, eps, R, opts) if np.any(w) else 0.0
            direct_solves += 2
        qs.append(lipschitz_quotient(p, z, w, fz, fw))
    const = max(qs) if qs else 0.0
    return LipschitzReport(const, qs, math.isfinite(const), table.solves + direct_solves)


def doubling_quotient(p: float, phi_z: float, z) -> float:
    """Quotient of the pair (z, 2z) written through homogeneity: (2^p - 1) phi(z) / ((1 + 2^(p-1)) |z|^p)."""
    nz = float(np.linalg.norm(z))
    return (2 ** p - 1) * phi_z / ((1 + 2 ** (p - 1)) * nz ** p)


# ---------------------------------------------------------------------------
# continuum reference

@dataclass
class OracleValue:
    value: float
    error: float
    table: list  # (R, h, raw value)
    by_R: list  # (R, h-extrapolated value, fitted order)
    flags: list

    @property
    def per_unit(self) -> float:
        return self.value


def continuum_capacity_solve(fhom: HomogenizedDensity, z, h: float, R: float, opts: SolveOptions | None = None) -> float:
    """Minimum of ``sum h^d f_hom(grad_h u)`` on the vertex grid of ``[-R/2, R/2]^d``.

    ``u = 0`` at nodes of the closed unit cube and ``u = z`` on the outer boundary nodes.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = fhom.d
    K = R / (2 * h)
    kmax = int(round(K))
    if abs(K - kmax) > 1e-9:
        raise ValueError("R/2 must be a multiple of the grid spacing")
    n = 2 * kmax + 1
    ax = np.abs(np.arange(-kmax, kmax + 1))
    cheb = np.zeros((n,) * d, dtype=np.int64)
    for a in range(d):
        shp = [1] * d
        shp[a] = -1
        cheb = np.maximum(cheb, ax.reshape(shp))
    inner = cheb * h <= 0.5 + 1e-12
    outer = cheb == kmax
    pinned = inner | outer
    vals = np.where(outer[..., None], z, 0.0)
    obj = GradientObjective((n,) * d, h, fhom, pinned, vals)
    res = minimize_objective(obj, opts or SolveOptions(), scale=0.0)
    if not res.converged:
        raise RuntimeError(f"continuum capacity solve did not converge: {res.message}")
    return res.value


def extrapolate_in_R(p: float, d: int, Rs, vals) -> tuple[float, float]:
    """Far-field extrapolation: ``v^(-1/(p-1)) = A - B R^(-beta)``, ``beta = (d-p)/(p-1)``.

    Uses the two largest boxes; the error is the change against the pair below.
    """
    beta = (d - p) / (p - 1)
    Rs = np.asarray(Rs, dtype=float)
    y = np.asarray(vals, dtype=float) ** (-1.0 / (p - 1))
    x = Rs ** (-beta)

    def fit(i, j):
        B = (y[j] - y[i]) / (x[i] - x[j])
        A = y[j] + B * x[j]
        return A ** (-(p - 1))

    v = fit(-2, -1)
    err = abs(v - fit(-3, -2)) if len(Rs) >= 3 else math.nan
    return float(v), float(err)


def phi_continuum_oracle(z, fhom: HomogenizedDensity, hs, Rs, opts: SolveOptions | None = None) -> OracleValue:
    """Continuum capacitary density: Richardson in the grid spacing, then far-field extrapolation in R."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.any(z):
        return OracleValue(0.0, 0.0, [], [], [])
    nz = float(np.linalg.norm(z))
    e = z / nz
    p, d = fhom.p, fhom.d
    if not (1 < p < d):
        raise ValueError("continuum oracle needs 1 < p < d")
    table, by_R, flags = [], [], []
    for R in Rs:
        raw = [continuum_capacity_solve(fhom, e, h, R, opts) for h in hs]
        table += [(R, h, v) for h, v in zip(hs, raw)]
        if len(hs) >= 3:
            v0, q, _ = richardson(hs[-3:], raw[-3:])
            dv = np.diff(raw)
            if not (np.all(dv <= 0) or np.all(dv >= 0)):
                flags.append(f"non-monotone grid sequence at R={R}")
        else:
            v0, q = raw[-1], math.nan
        by_R.append((R, v0, q))
    vR = [v for _, v, _ in by_R]
    if len(Rs) >= 2:
        if not np.all(np.diff(vR) <= 0):
            flags.append("non-monotone R sequence")
        value, err = extrapolate_in_R(p, d, Rs, vR)
    else:
        value, err = vR[-1], math.nan
    return OracleValue(nz ** p * value, nz ** p * err, table, by_R, flags)


@dataclass
class ConvergenceReport:
    rows: list  # (eps, R, phi_discrete, phi_oracle, relative gap)
    oracle: OracleValue
    decreasing: bool
    final_gap: float
    ok: bool
    tolerance: float

    def summary(self) -> str:
        head = "PASS" if self.ok else "FAIL"
        lines = [f"{head} capacity convergence (final gap {self.final_gap:.4%}, tolerance {self.tolerance:.2%})"]
        for eps, R, v, o, g in self.rows:
            lines.append(f"  eps={eps:<10.6g} R={R:<6g} phi={v:.8g} oracle={o:.8g} gap={g:.4%}")
        lines.append(f"  oracle error estimate {self.oracle.error:.3e}")
        lines += [f"  flag: {f}" for f in self.oracle.flags]
        return "\n".join(lines)


def phi_convergence_study(density: PowerDensity, z, schedule, oracle: OracleValue | None = None,
                          hs=(1 / 8, 1 / 12, 1 / 16), Rs=(4.0, 6.0, 8.0), tolerance: float = 0.05,
                          opts: SolveOptions | None = None) -> ConvergenceReport:
    """Compare ``phi_{eps,T,R}(z)`` along a schedule of (eps, R) with the continuum value."""
    schedule = [(float(e), float(R)) for e, R in schedule]
    if len(schedule) < 3:
        raise ValueError("convergence study needs at least three schedule entries")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if oracle is None:
        oracle = phi_continuum_oracle(z, HomogenizedDensity.from_density(density), hs, Rs, opts)
    rows = []
    for eps, R in schedule:
        v = phi_value(density, z, eps, R, opts) if np.any(z) else 0.0
        o = oracle.value
        gap = abs(v - o) / o if o != 0 else abs(v)
        rows.append((eps, R, v, o, gap))
    gaps = [r[4] for r in rows]
    decreasing = all(b < a for a, b in zip(gaps[-3:], gaps[-2:])) if np.any(z) else True
    final = gaps[-1]
    return ConvergenceReport(rows, oracle, decreasing, final, decreasing and final <= tolerance, tolerance)


# ---------------------------------------------------------------------------
# patched sums

def interior_cell_indices(box, delta: float) -> np.ndarray:
    """Integer i with ``i delta`` in the box and ``dist(i delta, boundary) > delta``."""
    box = np.asarray(box, dtype=float)
    ranges = []
    for a, b in box:
        lo = math.floor(a / delta) - 1
        hi = math.ceil(b / delta) + 1
        ks = [k for k in range(lo, hi + 1) if (k * delta - a) > delta * (1 + 1e-12) and (b - k * delta) > delta * (1 + 1e-12)]
        ranges.append(ks)
    grids = np.meshgrid(*ranges, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) if all(ranges) else np.zeros((0, box.shape[0]), int)


def patched_density_sum(u: LatticeFunction, box, delta: float, phi) -> float:
    """``sum_i delta^d phi(u^i)`` over interior period cells, ``u^i`` the mean of u on ``Q(i delta, delta)``."""
    dom = u.domain
    N = delta / dom.eps
    if abs(N - round(N)) > 1e-9:
        raise ValueError("delta must be a multiple of the lattice spacing")
    N = int(round(N))
    cells = interior_cell_indices(box, delta)
    idx = dom.indices
    # cell of a site: Q(i delta, delta) = i delta + [-delta/2, delta/2)^d
    owner = np.floor((idx + N / 2.0) / N + 1e-12).astype(np.int64)
    d = dom.d
    parts = []
    lookup = {}
    keys = [tuple(k) for k in owner]
    for s, k in enumerate(keys):
        lookup.setdefault(k, []).append(s)
    for i in cells:
        sites = lookup.get(tuple(int(a) for a in i))
        if not sites:
            continue
        mean = u.values[sites].mean(axis=0)
        parts.append(delta ** d * phi(mean))
    return math.fsum(parts)


def phi_integral(u_fn, box, phi, n_cells: int = 64, order: int = 4) -> float:
    """``int_box phi(u(x)) dx`` by a composite tensor Gauss-Legendre rule."""
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes, wts = [], []
    for a, b in box:
        edges = np.linspace(a, b, n_cells + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
        axes.append((mid[:, None] + half[:, None] * nodes[None, :]).ravel())
        wts.append((half[:, None] * weights[None, :]).ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    wgrid = np.ones(grids[0].shape)
    for k, w in enumerate(wts):
        shp = [1] * d
        shp[k] = -1
        wgrid = wgrid * w.reshape(shp)
    X = np.stack([g.ravel() for g in grids], axis=1)
    U = np.asarray(u_fn(X), dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    vals = np.array([phi(v) for v in U]) if not hasattr(phi, "vectorized") else phi.vectorized(U)
    return float(np.sum(vals * wgrid.ravel()))
