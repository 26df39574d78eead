"""Independent reference implementations used by the tests."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def fraction_site_scan(box, eps):
    """Integer indices k with k*eps in the half-open box, scanned with exact rationals."""
    e = Fraction(eps).limit_denominator(10 ** 9)
    ranges = []
    for a, b in box:
        a, b = Fraction(a).limit_denominator(10 ** 9), Fraction(b).limit_denominator(10 ** 9)
        lo = math.floor(a / e) - 1
        hi = math.ceil(b / e) + 1
        ranges.append([k for k in range(lo, hi + 1) if a <= k * e < b])
    return sorted(itertools.product(*ranges))


def naive_energy(density, domain, u, region=None):
    """Direct double loop over sites and offsets, accumulated with math.fsum."""
    eps, d = domain.eps, domain.d
    idx = [tuple(int(s) for s in k) for k in domain.indices]
    where = {k: i for i, k in enumerate(idx)}
    vals = u.values
    terms = []
    for j, xi in enumerate(density.offsets):
        for k in idx:
            kk = tuple(a + b for a, b in zip(k, xi))
            if kk not in where:
                continue
            if region is not None and not (region(k) and region(kk)):
                continue
            z = (vals[where[kk]] - vals[where[k]]) / (eps * math.sqrt(sum(s * s for s in xi)))
            terms.append(eps ** d * float(density.value(j, z[None, :])[0]))
    return math.fsum(terms)


def cvxpy_minimum(density, domain, constraints, forcing=None):
    """Constrained minimum via Clarabel on the conic form of the power density.

    Pairs are enumerated from integer indices with a dictionary, independently
    of the grid slicing used by the library.
    """
    import cvxpy as cp
    import scipy.sparse as sps

    eps, d = domain.eps, domain.d
    n, m = domain.n_sites, constraints.m
    pinned = constraints.pinned_mask
    free = np.flatnonzero(~pinned)
    col = -np.ones(n, dtype=np.int64)
    col[free] = np.arange(free.size)
    base = np.zeros((n, m))
    base[constraints.sites] = constraints.values
    idx = [tuple(int(s) for s in k) for k in domain.indices]
    where = {k: i for i, k in enumerate(idx)}
    x = cp.Variable((free.size, m))
    parts, const = [], []
    p = density.p
    for j, xi in enumerate(density.offsets):
        norm = eps * math.sqrt(sum(s * s for s in xi))
        pairs = [(where[k], where[kk]) for k in idx
                 if (kk := tuple(a + b for a, b in zip(k, xi))) in where]
        if not pairs:
            continue
        src, dst = np.array(pairs).T
        rows, cols, vals = [], [], []
        for r, (a, b) in enumerate(zip(src, dst)):
            for s, sign in ((b, 1.0), (a, -1.0)):
                if col[s] >= 0:
                    rows.append(r)
                    cols.append(col[s])
                    vals.append(sign)
        B = sps.csr_matrix((vals, (rows, cols)), shape=(len(pairs), free.size))
        c0 = np.where(pinned[dst][:, None], base[dst], 0.0) - np.where(pinned[src][:, None], base[src], 0.0)
        live = np.diff(B.indptr) > 0
        dead = ~live
        if dead.any():
            const.append(eps ** d * float(np.sum(density.value(j, c0[dead] / norm))))
        if live.any():
            D = (B[live] @ x + c0[live]) / norm
            r = cp.norm(D, 2, axis=1) if m > 1 else cp.abs(D[:, 0])
            parts.append(float(density.coefficients[j]) * eps ** d * cp.sum(cp.power(r, p)))
    obj = cp.sum(cp.hstack(parts)) if len(parts) > 1 else parts[0]
    if forcing is not None:
        f = np.asarray(forcing, dtype=float).reshape(n, m)
        obj = obj - eps ** d * cp.sum(cp.multiply(f[free], x))
        const.append(-eps ** d * float(np.sum(f[pinned] * base[pinned])))
    prob = cp.Problem(cp.Minimize(obj))
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-13, tol_gap_rel=1e-13, tol_feas=1e-13, max_iter=500)
    return float(prob.value) + math.fsum(const)


def random_density(rng, family, p, T, d):
    from lathom.densities import lattice_offsets, power_density

    if family == "polynomial":
        return power_density(p, T, "polynomial", d, s=d + 0.5 + rng.random())
    if family == "custom":
        coef = {}
        for xi in lattice_offsets(d, T):
            if xi not in coef:
                c = 0.2 + rng.random()
                coef[xi] = c
                coef[tuple(-s for s in xi)] = c
        return power_density(p, T, coef, d)
    return power_density(p, T, "nearest_neighbor", d)


def random_grid_domain(rng, d, max_side=5):
    from lathom.lattice import build_domain

    eps = float(rng.choice([0.5, 0.25, 0.2]))
    shape = rng.integers(2, max_side + 1, size=d)
    lo = rng.integers(-3, 3, size=d)
    box = [(eps * a, eps * (a + n)) for a, n in zip(lo, shape)]
    return build_domain(box, eps)
