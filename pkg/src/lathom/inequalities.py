"""Numerical harness for discrete functional inequalities on lattices.

Each check evaluates both sides of an inequality on a family of sample
lattice functions and reports the ratio LHS/RHS.  Stability means that the
worst ratio over the family changes by at most ``drift_tol`` between
successive lattice spacings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .energy import nn_p_energy, region_grid_mask
from .lattice import LatticeDomain, LatticeFunction, build_domain, pair_slices

Sampler = Callable[[LatticeDomain], list]  # domain -> [(sample id, LatticeFunction)]


@dataclass
class InequalityReport:
    name: str
    samples: int
    worst_ratio: float
    per_eps: dict  # eps -> worst ratio
    ok: bool
    rows: list = field(default_factory=list)  # (sample id, LHS, RHS, ratio)
    degenerate_ok: bool = True
    drift: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    scale_name: str = "eps"

    def csv_rows(self):
        return self.rows

    def summary(self) -> str:
        head = "PASS" if self.ok else "FAIL"
        lines = [f"{head} {self.name}: {self.samples} samples, worst ratio {self.worst_ratio:.6g}"]
        for e, r in self.per_eps.items():
            lines.append(f"  {self.scale_name}={e:<10.6g} worst ratio {r:.6g}")
        if self.drift:
            lines.append("  drift per refinement: " + ", ".join(f"{x:.3%}" for x in self.drift))
        for k, v in self.extra.items():
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


def _ratio(lhs: float, rhs: float) -> float | None:
    if rhs == 0:
        return None
    return lhs / rhs


def _drifts(per_eps: dict) -> list:
    vals = [per_eps[e] for e in sorted(per_eps, reverse=True)]
    return [abs(b - a) / abs(a) if a else math.inf for a, b in zip(vals, vals[1:])]


def _finish(name, rows, per_eps, degenerate_ok, drift_tol, extra=None):
    ratios = [r[3] for r in rows if r[3] is not None and math.isfinite(r[3])]
    worst = max(ratios) if ratios else 0.0
    drift = _drifts(per_eps)
    finite = all(math.isfinite(v) for v in per_eps.values())
    ok = degenerate_ok and finite and all(x <= drift_tol for x in drift)
    return InequalityReport(name, len(rows), worst, per_eps, ok, rows, degenerate_ok, drift, extra or {})


# ---------------------------------------------------------------------------
# sample families

def centered_box(d: int, half: float = 1.0):
    return [(-half, half)] * d


def single_bump_family(domain: LatticeDomain, m: int = 1) -> list:
    """u equal to a unit vector on one site (the one nearest the origin) and 0 elsewhere."""
    k = [0] * domain.d
    vals = np.zeros((domain.n_sites, m))
    vals[domain.site_of(k), 0] = 1.0
    return [("single_bump", LatticeFunction(domain, vals))]


def smooth_bump(x: np.ndarray, radius: float = 0.5) -> np.ndarray:
    r2 = np.sum((x / radius) ** 2, axis=1)
    out = np.zeros(x.shape[0])
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def smooth_bump_family(domain: LatticeDomain, radii=(0.3, 0.5), m: int = 1) -> list:
    out = []
    for r in radii:
        u = LatticeFunction.from_callable(domain, lambda x, r=r: smooth_bump(x, r))
        out.append((f"smooth_bump_r{r:g}", u if m == 1 else LatticeFunction(domain, np.repeat(u.values, m, 1))))
    return out


def cone_family(domain: LatticeDomain, radius: float = 0.5) -> list:
    def cone(x):
        return np.maximum(0.0, 1.0 - np.linalg.norm(x, axis=1) / radius)
    return [(f"cone_r{radius:g}", LatticeFunction.from_callable(domain, cone))]


def random_block_family(domain: LatticeDomain, block: int = 4, count: int = 3, seed: int = 0, m: int = 1) -> list:
    """Seeded iid values on a fixed ``block^d`` pattern of sites around the origin (zero elsewhere).

    The pattern occupies a fixed number of sites, so rescaling the lattice rescales the profile.
    """
    rng = np.random.default_rng(seed)
    out = []
    idx = domain.indices
    sel = np.all((idx >= -(block // 2)) & (idx < block - block // 2), axis=1)
    for c in range(count):
        vals = np.zeros((domain.n_sites, m))
        vals[sel] = rng.standard_normal((int(sel.sum()), m))
        out.append((f"random_block{block}_s{seed}_{c}", LatticeFunction(domain, vals)))
    return out


def random_field_family(domain: LatticeDomain, count: int = 3, seed: int = 0, m: int = 1) -> list:
    rng = np.random.default_rng(seed)
    return [(f"random_field_s{seed}_{c}", LatticeFunction(domain, rng.standard_normal((domain.n_sites, m))))
            for c in range(count)]


def affine_family(domain: LatticeDomain, Ms) -> list:
    out = []
    for i, M in enumerate(Ms):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        out.append((f"affine_{i}", LatticeFunction(domain, domain.coords @ M.T)))
    return out


def default_gns_family(domain: LatticeDomain, seed: int = 0) -> list:
    return (single_bump_family(domain) + smooth_bump_family(domain) + cone_family(domain)
            + random_block_family(domain, seed=seed))


# ---------------------------------------------------------------------------

def critical_exponent(p: float, d: int) -> float:
    if not p < d:
        raise ValueError("the Sobolev exponent needs p < d")
    return p * d / (d - p)


def _support_is_compact(u: LatticeFunction) -> bool:
    """Values vanish on the outermost layer of the bounding grid (so no difference leaves the box)."""
    G = np.linalg.norm(u.grid(), axis=-1)
    for ax in range(G.ndim):
        if np.any(np.take(G, 0, axis=ax)) or np.any(np.take(G, -1, axis=ax)):
            return False
    return u.domain.mask is None


def gns_sides(u: LatticeFunction, p: float) -> tuple[float, float]:
    d = u.domain.d
    ps = critical_exponent(p, d)
    mags = np.linalg.norm(u.values, axis=1)
    integral = u.domain.eps ** d * float(np.sum(mags ** ps))
    lhs = integral ** (p / ps)
    rhs = nn_p_energy(u.domain, u, p)
    return lhs, rhs


def gns_check(eps_list: Sequence[float], sampler: Sampler | None, p: float, d: int,
              half: float = 1.0, drift_tol: float = 0.25) -> InequalityReport:
    """``(sum eps^d |u|^{p*})^{p/p*}`` against the nearest-neighbour p-energy on all of ``Z^d``."""
    sampler = sampler or default_gns_family
    rows, per_eps, degenerate_ok = [], {}, True
    for eps in eps_list:
        dom = build_domain(centered_box(d, half), eps)
        worst = 0.0
        for sid, u in sampler(dom):
            if not _support_is_compact(u):
                raise ValueError(f"sample {sid} is not compactly supported in the box")
            lhs, rhs = gns_sides(u, p)
            r = _ratio(lhs, rhs)
            if r is None:
                degenerate_ok &= lhs == 0
            else:
                worst = max(worst, r)
            rows.append((f"{sid}@eps={eps:g}", lhs, rhs, r))
        per_eps[float(eps)] = worst
    return _finish("gns", rows, per_eps, degenerate_ok, drift_tol)


def mean_deviation(u: LatticeFunction, p: float, subset_mask: np.ndarray | None = None,
                   region_mask: np.ndarray | None = None) -> float:
    """``sum eps^d |u - mean|^p`` over the region, mean taken over the subset (or the region)."""
    sel = np.ones(u.domain.n_sites, dtype=bool) if region_mask is None else region_mask
    ref = sel if subset_mask is None else subset_mask
    if not ref.any():
        raise ValueError("empty averaging set")
    mean = u.values[ref].mean(axis=0)
    dev = np.linalg.norm(u.values[sel] - mean, axis=1)
    return u.domain.eps ** u.domain.d * float(np.sum(dev ** p))


def poincare_sides(u: LatticeFunction, p: float, subset=None) -> tuple[float, float]:
    dom = u.domain
    sub = None
    if subset is not None:
        sub = dom.from_grid(region_grid_mask(dom, subset))
        if not sub.any():
            raise ValueError("subset contains no lattice sites")
    lhs = mean_deviation(u, p, sub)
    rhs = nn_p_energy(dom, u, p)
    return lhs, rhs


def poincare_check(eps_list: Sequence[float], box, sampler: Sampler, p: float, subset=None,
                   drift_tol: float = 0.25) -> InequalityReport:
    """Mean-deviation sum against the nearest-neighbour p-energy on a box (or union of boxes)."""
    if subset is not None:
        sb = np.asarray(subset, dtype=float)
        sb = sb if sb.ndim == 3 else sb[None]
        if np.any(sb[:, :, 1] <= sb[:, :, 0]):
            raise ValueError("subset must have positive volume")
    rows, per_eps, degenerate_ok = [], {}, True
    for eps in eps_list:
        dom = build_domain(box, eps)
        worst = 0.0
        for sid, u in sampler(dom):
            lhs, rhs = poincare_sides(u, p, subset)
            r = _ratio(lhs, rhs)
            if r is None:
                degenerate_ok &= lhs <= 1e-28
            else:
                worst = max(worst, r)
            rows.append((f"{sid}@eps={eps:g}", lhs, rhs, r))
        per_eps[float(eps)] = worst
    return _finish("poincare" if subset is None else "poincare_subset", rows, per_eps, degenerate_ok, drift_tol)


def fit_power_law(xs, ys) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def profile_family(x: np.ndarray) -> list:
    """Fixed smooth profiles on the unit cube ``[0,1)^d`` used by the rescaled sweep."""
    c = x - 0.5
    return [("cos", np.cos(np.pi * x[:, 0])),
            ("bump", np.exp(-8.0 * np.sum(c * c, axis=1))),
            ("product", np.prod(np.sin(np.pi * x), axis=1) + x[:, -1])]


def poincare_rescaled_check(deltas: Sequence[float], eps: float, p: float, d: int,
                            profiles=profile_family, tol: float = 0.2) -> InequalityReport:
    """Mean-deviation inequality on cubes of side delta at fixed spacing eps.

    Each profile ``v`` is sampled as ``u(alpha) = v(alpha/delta)`` on ``[0, delta)^d``;
    the worst ratio should scale like ``delta^p``.  The fitted exponent is compared with p.
    """
    rows, per_delta = [], {}
    for delta in deltas:
        dom = build_domain([(0.0, delta)] * d, eps)
        x = dom.coords / delta
        worst = 0.0
        for sid, vals in profiles(x):
            u = LatticeFunction(dom, vals)
            lhs, rhs = poincare_sides(u, p)
            r = _ratio(lhs, rhs)
            rows.append((f"{sid}@delta={delta:g}", lhs, rhs, r))
            if r is not None:
                worst = max(worst, r)
        per_delta[float(delta)] = worst
    slope, _ = fit_power_law(list(per_delta), list(per_delta.values()))
    ok = abs(slope - p) <= tol
    rep = InequalityReport("poincare_rescaled", len(rows), max(per_delta.values()), per_delta, ok, rows,
                           True, [], {"fitted_exponent": slope, "p": p}, "delta")
    return rep


def shrunken_box(box, eps: float):
    """Points of the box at distance more than ``2 sqrt(d) eps`` from its boundary."""
    box = np.asarray(box, dtype=float)
    t = 2.0 * math.sqrt(box.shape[0]) * eps
    inner = np.stack([box[:, 0] + t, box[:, 1] - t], axis=1)
    if np.any(inner[:, 1] <= inner[:, 0]):
        raise ValueError("box too small for the interior shrinkage")
    return inner


def _strict_box_mask(dom: LatticeDomain, box) -> np.ndarray:
    """Grid mask of sites strictly inside an open box."""
    out = np.ones(dom.shape, dtype=bool)
    for ax, (a, b) in enumerate(box):
        x = dom.grid_coords(ax)
        ok = (x > a + 1e-12 * max(1, abs(a))) & (x < b - 1e-12 * max(1, abs(b)))
        shp = [1] * dom.d
        shp[ax] = -1
        out = out & ok.reshape(shp)
    return out


def long_range_sides(u: LatticeFunction, xi, p: float, box) -> tuple[float, float]:
    dom = u.domain
    inner = _strict_box_mask(dom, shrunken_box(box, dom.eps))
    G = u.grid()
    sl = pair_slices(dom.shape, xi)
    lhs = 0.0
    if sl is not None:
        src, dst = sl
        D = np.linalg.norm(G[dst] - G[src], axis=-1) / (dom.eps * math.sqrt(sum(s * s for s in xi)))
        lhs = float(np.sum(D[inner[src] & inner[dst]] ** p))
    rhs = nn_p_energy(dom, u, p) / dom.eps ** dom.d
    return lhs, rhs


def long_range_check(eps_list: Sequence[float], box, xi_list, sampler: Sampler, p: float,
                     drift_tol: float = 0.25) -> InequalityReport:
    """Long-range differences on the shrunken box against nearest-neighbour differences on the box."""
    rows, per_eps, degenerate_ok = [], {}, True
    per_xi: dict = {}
    for eps in eps_list:
        dom = build_domain(box, eps)
        worst = 0.0
        samples = sampler(dom)
        for xi in xi_list:
            for sid, u in samples:
                lhs, rhs = long_range_sides(u, tuple(xi), p, box)
                r = _ratio(lhs, rhs)
                if r is None:
                    degenerate_ok &= lhs <= 1e-24
                    continue
                worst = max(worst, r)
                key = tuple(int(s) for s in xi)
                per_xi[key] = max(per_xi.get(key, 0.0), r)
                rows.append((f"{sid}@xi={key}@eps={eps:g}", lhs, rhs, r))
        per_eps[float(eps)] = worst
    return _finish("long_range", rows, per_eps, degenerate_ok, drift_tol, {"per_xi": per_xi})
