"""Assembly of the discrete pairwise energies and their gradients.

For every offset xi the interacting pairs ``(alpha, alpha + eps xi)`` of a box
grid are two strided slices of the grid, so each term is a vectorised sweep.
Per-offset partial sums use numpy's pairwise reduction; the total is the
``math.fsum`` of the partial sums, which makes it independent of offset order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .densities import InteractionDensity, PowerDensity
from .lattice import (_as_boxes, ConstraintSet, LatticeDomain, LatticeFunction, PerforationGeometry,
                      _lower_index, _upper_index_open, pair_slices)

INFINITE = math.inf  # value of the functional outside its effective domain


class DomainMismatch(ValueError):
    pass


@dataclass(frozen=True)
class OffsetTerm:
    xi: tuple[int, ...]
    index: int  # position in density.offsets
    norm: float
    src: tuple[slice, ...]
    dst: tuple[slice, ...]
    valid: np.ndarray | None  # pair mask on the slice shape, None = every pair counts


def region_grid_mask(domain: LatticeDomain, region) -> np.ndarray:
    """Grid mask of the domain sites lying in a half-open box or a union of them."""
    out = np.zeros(domain.shape, dtype=bool)
    for b in _as_boxes(region):
        sl = []
        for ax, (lo, hi) in enumerate(b):
            a = _lower_index(lo, domain.eps) - domain.lo[ax]
            z = _upper_index_open(hi, domain.eps) - domain.lo[ax] + 1
            sl.append(slice(max(a, 0), max(min(z, domain.shape[ax]), 0)))
        out[tuple(sl)] = True
    return out & domain.grid_mask


@dataclass(eq=False)
class EnergySpec:
    """Density + domain + optional localization region (union of boxes) + optional perforation."""

    density: InteractionDensity
    domain: LatticeDomain
    region: Sequence | None = None
    perforation: PerforationGeometry | None = None
    region_mask: np.ndarray | None = field(default=None, repr=False)
    terms: list[OffsetTerm] = field(init=False, repr=False)

    def __post_init__(self):
        if self.density.d != self.domain.d:
            raise DomainMismatch("density and domain dimensions differ")
        if self.perforation is not None and not self.perforation.domain.same_as(self.domain):
            raise DomainMismatch("perforation was built on a different domain")
        if self.region_mask is None:
            if self.region is not None:
                self.region_mask = region_grid_mask(self.domain, self.region)
            elif self.domain.mask is not None:
                self.region_mask = self.domain.mask
        elif self.region_mask.shape != self.domain.shape:
            raise DomainMismatch("region mask has the wrong shape")
        else:
            self.region_mask = self.region_mask & self.domain.grid_mask
        full = self.region_mask is None or bool(self.region_mask.all())
        terms = []
        for j, xi in enumerate(self.density.offsets):
            sl = pair_slices(self.domain.shape, xi)
            if sl is None:
                continue
            src, dst = sl
            valid = None if full else (self.region_mask[src] & self.region_mask[dst])
            if valid is not None and not valid.any():
                continue
            terms.append(OffsetTerm(tuple(xi), j, math.sqrt(sum(s * s for s in xi)), src, dst, valid))
        self.terms = terms

    @property
    def offsets(self) -> list[tuple[int, ...]]:
        return [t.xi for t in self.terms]

    @property
    def volume(self) -> float:
        return self.domain.eps ** self.domain.d

    def with_density(self, density: InteractionDensity) -> "EnergySpec":
        return EnergySpec(density, self.domain, self.region, self.perforation, self.region_mask)

    def pair_count(self, xi) -> int:
        for t in self.terms:
            if t.xi == tuple(xi):
                return int(t.valid.sum()) if t.valid is not None else int(np.prod([s.stop - s.start for s in t.src]))
        return 0


@dataclass
class EnergyValue:
    total: float
    breakdown: dict
    violated: bool = False

    @property
    def finite(self) -> bool:
        return not self.violated


def _check_domain(spec: EnergySpec, u: LatticeFunction):
    if not u.domain.same_as(spec.domain):
        raise DomainMismatch("lattice function lives on a different domain")


def _term_values(density, term: OffsetTerm, G: np.ndarray, eps: float):
    m = G.shape[-1]
    D = (G[term.dst] - G[term.src]) / (eps * term.norm)
    if term.valid is not None:
        D = D[term.valid]
    else:
        D = D.reshape(-1, m)
    return D


def energy_total(spec: EnergySpec, u: LatticeFunction, density: InteractionDensity | None = None) -> EnergyValue:
    """Total energy, per-offset breakdown and the perforation violation flag."""
    _check_domain(spec, u)
    dens = spec.density if density is None else density
    G = u.grid()
    vol = spec.volume
    breakdown = {}
    for t in spec.terms:
        D = _term_values(dens, t, G, spec.domain.eps)
        breakdown[t.xi] = float(vol * np.sum(dens.value(t.index, D)))
    violated = False
    if spec.perforation is not None:
        violated = bool(np.any(u.values[spec.perforation.mask] != 0.0))
    total = INFINITE if violated else math.fsum(breakdown.values())
    return EnergyValue(total=total, breakdown=breakdown, violated=violated)


def _grid_gradient(spec: EnergySpec, dens, G: np.ndarray):
    """Energy and full grid gradient for grid values G (off-domain entries must be 0)."""
    eps = spec.domain.eps
    vol = spec.volume
    grad = np.zeros_like(G)
    parts = []
    m = G.shape[-1]
    for t in spec.terms:
        D = (G[t.dst] - G[t.src]) / (eps * t.norm)
        shp = D.shape
        flat = D.reshape(-1, m)
        val = dens.value(t.index, flat)
        g = dens.gradient(t.index, flat).reshape(shp) * (vol / (eps * t.norm))
        if t.valid is not None:
            val = val[t.valid.ravel()]
            g = g * t.valid[..., None]
        parts.append(float(np.sum(val)) * vol)
        grad[t.dst] += g
        grad[t.src] -= g
    return math.fsum(parts), grad


def energy_gradient(spec: EnergySpec, u: LatticeFunction, constraints: ConstraintSet | None = None,
                    density: InteractionDensity | None = None) -> np.ndarray:
    """Gradient with respect to the free site values, flattened site-major ``(n_free * m,)``."""
    _check_domain(spec, u)
    dens = spec.density if density is None else density
    _, grad = _grid_gradient(spec, dens, u.grid())
    per_site = spec.domain.from_grid(grad)
    if constraints is not None:
        per_site = per_site[constraints.free_sites]
    return per_site.ravel()


def nn_p_energy(domain: LatticeDomain, u: LatticeFunction, p: float, region=None) -> float:
    """Nearest-neighbour p-energy: sum over k and over pairs (alpha, alpha + eps e_k) of eps^d |D|^p."""
    if not u.domain.same_as(domain):
        raise DomainMismatch("lattice function lives on a different domain")
    mask = region_grid_mask(domain, region) if region is not None else domain.mask
    G = u.grid()
    eps, d = domain.eps, domain.d
    parts = []
    for k in range(d):
        xi = tuple(1 if i == k else 0 for i in range(d))
        sl = pair_slices(domain.shape, xi)
        if sl is None:
            continue
        src, dst = sl
        D = np.linalg.norm(G[dst] - G[src], axis=-1) / eps
        if mask is not None:
            D = D[mask[src] & mask[dst]]
        parts.append(float(np.sum(D ** p)) * eps ** d)
    return math.fsum(parts)


# ---------------------------------------------------------------------------
# objectives over free variables

class LatticeObjective:
    """``F(u) - sum eps^d g(alpha) . u(alpha)`` as a function of the free site values.

    ``x`` is the flat vector of free values (site-major, ``n_free * m``).
    """

    def __init__(self, spec: EnergySpec, constraints: ConstraintSet, forcing: np.ndarray | None = None,
                 density: InteractionDensity | None = None):
        if not constraints.domain.same_as(spec.domain):
            raise DomainMismatch("constraints live on a different domain")
        self.spec = spec
        self.constraints = constraints
        self.density = spec.density if density is None else density
        self.m = constraints.m
        dom = spec.domain
        self.free = constraints.free_sites
        base = np.zeros((dom.n_sites, self.m))
        base[constraints.sites] = constraints.values
        self._base_grid = dom.to_grid(base)
        # grid positions (flat) of the free sites
        num = dom.site_number.ravel()
        pos = np.flatnonzero(num >= 0)
        order = num[pos]
        site_pos = np.empty(dom.n_sites, dtype=np.int64)
        site_pos[order] = pos
        self._free_pos = site_pos[self.free]
        self.forcing = None
        if forcing is not None:
            f = np.asarray(forcing, dtype=float)
            if f.ndim == 1:
                f = f[:, None]
            if f.shape != (dom.n_sites, self.m):
                raise ValueError("forcing needs one R^m value per site")
            self.forcing = f
            self._lin = (spec.volume * f[self.free]).ravel()
            self._lin_const = float(spec.volume * np.sum(f[constraints.sites] * constraints.values))
        else:
            self._lin = None
            self._lin_const = 0.0

    @property
    def n(self) -> int:
        return self.free.size * self.m

    def with_density(self, density) -> "LatticeObjective":
        obj = LatticeObjective.__new__(LatticeObjective)
        obj.__dict__.update(self.__dict__)
        obj.density = density
        return obj

    def grid(self, x: np.ndarray) -> np.ndarray:
        G = self._base_grid.copy()
        flat = G.reshape(-1, self.m)
        flat[self._free_pos] = x.reshape(-1, self.m)
        return G

    def full_values(self, x: np.ndarray) -> np.ndarray:
        vals = np.zeros((self.spec.domain.n_sites, self.m))
        vals[self.constraints.sites] = self.constraints.values
        vals[self.free] = x.reshape(-1, self.m)
        return vals

    def lattice_function(self, x) -> LatticeFunction:
        return LatticeFunction(self.spec.domain, self.full_values(x))

    def value(self, x: np.ndarray) -> float:
        return self.value_and_grad(x)[0]

    def value_and_grad(self, x: np.ndarray):
        E, G = _grid_gradient(self.spec, self.density, self.grid(x))
        g = G.reshape(-1, self.m)[self._free_pos].ravel()
        if self._lin is not None:
            E = E - float(self._lin @ x) - self._lin_const
            g = g - self._lin
        return E, g

    def linear_term(self, x: np.ndarray) -> float:
        if self._lin is None:
            return 0.0
        return float(self._lin @ x) + self._lin_const

    # -- quadratic fast path ---------------------------------------------
    def quadratic_system(self):
        """For ``c(xi)|z|^2`` densities: (A, b) with the minimizer solving ``A x = b`` per component.

        ``A`` acts on one component (n_free x n_free); ``b`` has shape (n_free, m).
        """
        dens = self.density
        if not (isinstance(dens, PowerDensity) and dens.is_quadratic):
            raise TypeError("quadratic system needs a p = 2 power density")
        dom = self.spec.domain
        eps, d = dom.eps, dom.d
        nf = self.free.size
        fnum = np.full(dom.n_sites, -1, dtype=np.int64)
        fnum[self.free] = np.arange(nf)
        fgrid = np.full(dom.shape, -1, dtype=np.int64)
        sn = dom.site_number
        fgrid[sn >= 0] = fnum[sn[sn >= 0]]
        pinned_vals = self._base_grid
        # fold xi and -xi: same unordered pairs
        weights: dict[tuple, float] = {}
        term_of: dict[tuple, OffsetTerm] = {}
        for t in self.spec.terms:
            key = t.xi if t.xi > tuple(0 for _ in t.xi) else tuple(-s for s in t.xi)
            w = dens.coefficients[t.index] * eps ** (d - 2) / t.norm ** 2
            weights[key] = weights.get(key, 0.0) + w
            if key == t.xi:
                term_of[key] = t
        diag = np.zeros(nf)
        rhs = np.zeros((nf, self.m))
        rows, cols, vals = [], [], []
        for key, w in weights.items():
            t = term_of.get(key)
            if t is None:
                sl = pair_slices(dom.shape, key)
                src, dst = sl
                valid = None if self.spec.region_mask is None or self.spec.region_mask.all() else \
                    (self.spec.region_mask[src] & self.spec.region_mask[dst])
            else:
                src, dst, valid = t.src, t.dst, t.valid
            a = fgrid[src]
            b = fgrid[dst]
            ua = pinned_vals[src]
            ub = pinned_vals[dst]
            if valid is not None:
                a, b, ua, ub = a[valid], b[valid], ua[valid], ub[valid]
            else:
                a, b = a.ravel(), b.ravel()
                ua, ub = ua.reshape(-1, self.m), ub.reshape(-1, self.m)
            fa, fb = a >= 0, b >= 0
            np.add.at(diag, a[fa], w)
            np.add.at(diag, b[fb], w)
            both = fa & fb
            rows.append(a[both])
            cols.append(b[both])
            vals.append(np.full(int(both.sum()), -w))
            only_a = fa & ~fb
            only_b = fb & ~fa
            np.add.at(rhs, a[only_a], w * ub[only_a])
            np.add.at(rhs, b[only_b], w * ua[only_b])
        r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
        c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        v = np.concatenate(vals) if vals else np.zeros(0)
        off = sp.coo_matrix((v, (r, c)), shape=(nf, nf))
        L = (off + off.T + sp.diags(diag)).tocsr()
        L.sum_duplicates()
        A = 2.0 * L
        b = 2.0 * rhs
        if self._lin is not None:
            b = b + self._lin.reshape(nf, self.m)
        return A, b


def energy_breakdown_rows(value: EnergyValue):
    """Rows (xi, partial energy) for CSV export, offsets in lexicographic order."""
    return [(" ".join(str(s) for s in xi), value.breakdown[xi]) for xi in sorted(value.breakdown)]
