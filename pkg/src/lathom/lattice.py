"""Lattice domains, perforations, difference quotients and lattice/continuum transfer.

Sites are stored as integer multi-indices ``k``; the physical site is ``eps * k``.
Every membership test is decided on the integer index (with a tiny tolerance on
the ratio ``bound / eps``) so that set membership never drifts with roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_MAX_SITES = 60_000_000
_TOL = 1e-9


class DivisibilityError(ValueError):
    """Raised when a length is not an integer multiple of the lattice spacing."""


def _ratio_int(length: float, unit: float, what: str) -> int:
    q = length / unit
    k = round(q)
    if k <= 0 or abs(q - k) > _TOL * max(1.0, abs(q)):
        raise DivisibilityError(f"{what}={length!r} is not a positive integer multiple of {unit!r}")
    return int(k)


def _lower_index(a: float, eps: float) -> int:
    """Smallest k with k*eps >= a."""
    q = a / eps
    return int(math.ceil(q - _TOL * max(1.0, abs(q))))


def _upper_index_open(b: float, eps: float) -> int:
    """Largest k with k*eps < b."""
    q = b / eps
    return int(math.ceil(q - _TOL * max(1.0, abs(q)))) - 1


def _as_boxes(box) -> list[np.ndarray]:
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 2:
        return [arr]
    if arr.ndim == 3:
        return [b for b in arr]
    # ragged union given as a list of boxes
    return [np.asarray(b, dtype=float) for b in box]


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    """Finite set of sites ``eps * Z^d`` inside a box or a union of boxes.

    The sites live on a bounding grid (``lo``, ``shape``); ``mask`` marks the
    grid points that belong to the domain (``None`` means the whole grid).
    Enumeration order is lexicographic in the integer multi-index, i.e. C order
    on the bounding grid.
    """

    eps: float
    lo: tuple[int, ...]
    shape: tuple[int, ...]
    mask: np.ndarray | None = None
    boxes: tuple = ()
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.mask is None:
            flat = np.arange(int(np.prod(self.shape)), dtype=np.int64).reshape(self.shape)
        else:
            flat = np.full(self.shape, -1, dtype=np.int64)
            flat[self.mask] = np.arange(int(self.mask.sum()), dtype=np.int64)
            self.mask.setflags(write=False)
        flat.setflags(write=False)
        object.__setattr__(self, "_flat", flat)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.shape)) if self.mask is None else int(self.mask.sum())

    @property
    def grid_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.shape, dtype=bool)
        return self.mask

    @property
    def site_number(self) -> np.ndarray:
        """Grid array holding the enumeration number of each site (-1 off-domain)."""
        return self._flat

    @property
    def indices(self) -> np.ndarray:
        """Integer multi-indices of the sites, shape ``(n_sites, d)``."""
        grids = np.meshgrid(*[np.arange(l, l + n) for l, n in zip(self.lo, self.shape)], indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        if self.mask is not None:
            idx = idx[self.mask.ravel()]
        return idx

    @property
    def coords(self) -> np.ndarray:
        return self.eps * self.indices

    def axis_indices(self, axis: int) -> np.ndarray:
        return np.arange(self.lo[axis], self.lo[axis] + self.shape[axis])

    def grid_coords(self, axis: int) -> np.ndarray:
        return self.eps * self.axis_indices(axis)

    def contains_index(self, k: Sequence[int]) -> bool:
        pos = [int(ki) - l for ki, l in zip(k, self.lo)]
        if any(p < 0 or p >= n for p, n in zip(pos, self.shape)):
            return False
        return bool(self._flat[tuple(pos)] >= 0)

    def site_of(self, k: Sequence[int]) -> int:
        """Enumeration number of the site with integer index ``k``."""
        if not self.contains_index(k):
            raise KeyError(f"index {tuple(k)} is not a site of the domain")
        return int(self._flat[tuple(int(ki) - l for ki, l in zip(k, self.lo))])

    def to_grid(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        """Scatter per-site values ``(n_sites, m)`` onto the bounding grid ``(*shape, m)``."""
        values = np.asarray(values)
        grid = np.full(self.shape + values.shape[1:], fill, dtype=values.dtype)
        if self.mask is None:
            grid[...] = values.reshape(self.shape + values.shape[1:])
        else:
            grid[self.mask] = values
        return grid

    def from_grid(self, grid: np.ndarray) -> np.ndarray:
        if self.mask is None:
            return grid.reshape((self.n_sites,) + grid.shape[self.d:])
        return grid[self.mask]

    def same_as(self, other: "LatticeDomain") -> bool:
        if other is self:
            return True
        if not (math.isclose(self.eps, other.eps, rel_tol=1e-14) and self.lo == other.lo
                and self.shape == other.shape):
            return False
        return np.array_equal(self.grid_mask, other.grid_mask)


def build_domain(box, eps: float, max_sites: int = DEFAULT_MAX_SITES) -> LatticeDomain:
    """All sites of ``eps Z^d`` in a half-open box ``[a_k, b_k)`` (or union of such boxes).

    ``box`` is array-like of shape ``(d, 2)``; a union is given as a sequence of
    such boxes.
    """
    if not eps > 0:
        raise ValueError(f"lattice spacing must be positive, got {eps!r}")
    boxes = _as_boxes(box)
    d = boxes[0].shape[0]
    if d < 1 or any(b.shape != (d, 2) for b in boxes):
        raise ValueError("boxes must all have shape (d, 2)")
    ranges = []
    for b in boxes:
        if np.any(b[:, 1] <= b[:, 0]):
            raise ValueError(f"empty box {b.tolist()}")
        ranges.append([(_lower_index(lo, eps), _upper_index_open(hi, eps)) for lo, hi in b])
    lo = tuple(min(r[k][0] for r in ranges) for k in range(d))
    hi = tuple(max(r[k][1] for r in ranges) for k in range(d))
    shape = tuple(max(0, h - l + 1) for l, h in zip(lo, hi))
    if any(n == 0 for n in shape):
        raise ValueError("box contains no lattice sites")
    if int(np.prod(shape, dtype=np.int64)) > max_sites:
        raise MemoryError(f"domain needs {int(np.prod(shape))} grid points, budget is {max_sites}")
    mask = None
    if len(boxes) > 1:
        mask = np.zeros(shape, dtype=bool)
        for r in ranges:
            sl = tuple(slice(a - l, b - l + 1) for (a, b), l in zip(r, lo))
            mask[sl] = True
    return LatticeDomain(eps=float(eps), lo=lo, shape=shape, mask=mask,
                         boxes=tuple(tuple(map(tuple, b.tolist())) for b in boxes))


def cube_domain(eps: float, side: float, d: int, closed: bool = False,
                max_sites: int = DEFAULT_MAX_SITES) -> LatticeDomain:
    """Sites of the cube of side ``side`` centred at 0 (open unless ``closed``)."""
    kmax = cube_index_radius(side / 2.0, eps, closed)
    if kmax < 0:
        raise ValueError("cube contains no lattice sites")
    n = 2 * kmax + 1
    if n ** d > max_sites:
        raise MemoryError(f"domain needs {n ** d} sites, budget is {max_sites}")
    h = side / 2.0
    box = tuple((-h, h) for _ in range(d))
    return LatticeDomain(eps=float(eps), lo=(-kmax,) * d, shape=(n,) * d, mask=None, boxes=(box,))


def cube_index_radius(half: float, eps: float, closed: bool) -> int:
    """Largest k >= 0 with ``k eps <= half`` (closed) or ``k eps < half`` (open); -1 if none."""
    q = half / eps
    if closed:
        return int(math.floor(q + _TOL * max(1.0, q)))
    return int(math.ceil(q - _TOL * max(1.0, q))) - 1


def chebyshev_index(domain: LatticeDomain) -> np.ndarray:
    """Grid array of ``max_k |k_k|`` (integer Chebyshev norm of the site index)."""
    out = np.zeros(domain.shape, dtype=np.int64)
    for ax in range(domain.d):
        a = np.abs(domain.axis_indices(ax))
        shp = [1] * domain.d
        shp[ax] = -1
        out = np.maximum(out, a.reshape(shp))
    return out


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    """Values in ``R^m`` on the sites of a domain, enumeration order."""

    domain: LatticeDomain
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.domain.n_sites:
            raise ValueError(f"{v.shape[0]} values for {self.domain.n_sites} sites")
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, domain: LatticeDomain, m: int = 1) -> "LatticeFunction":
        return cls(domain, np.zeros((domain.n_sites, m)))

    @classmethod
    def from_callable(cls, domain: LatticeDomain, fn: Callable[[np.ndarray], np.ndarray]) -> "LatticeFunction":
        """Point samples ``u(alpha) = fn(alpha)``; ``fn`` maps ``(n, d)`` coordinates to ``(n,)`` or ``(n, m)``."""
        return cls(domain, np.asarray(fn(domain.coords), dtype=float))

    def grid(self) -> np.ndarray:
        return self.domain.to_grid(self.values)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Piecewise-constant evaluation: the value of the site whose cell ``alpha + [0, eps)^d`` holds ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.floor(x / self.domain.eps + _TOL).astype(np.int64)
        pos = k - np.asarray(self.domain.lo)
        inside = np.all((pos >= 0) & (pos < np.asarray(self.domain.shape)), axis=1)
        out = np.zeros((x.shape[0], self.m))
        if inside.any():
            sites = self.domain.site_number[tuple(pos[inside].T)]
            hit = sites >= 0
            rows = np.flatnonzero(inside)[hit]
            out[rows] = self.values[sites[hit]]
        return out

    def lp_norm(self, p: float) -> float:
        """``(sum eps^d |u|^p)^(1/p)``, the L^p norm of the piecewise-constant interpolant."""
        mags = np.linalg.norm(self.values, axis=1)
        return float((self.domain.eps ** self.domain.d * np.sum(mags ** p)) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Pinned sites (enumeration numbers) and their values; everything else is free."""

    domain: LatticeDomain
    sites: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[0] != sites.size:
            raise ValueError("one pinned value per pinned site is required")
        if np.unique(sites).size != sites.size:
            raise ValueError("a site is pinned twice")
        if sites.size and (sites.min() < 0 or sites.max() >= self.domain.n_sites):
            raise ValueError("pinned site outside the domain")
        order = np.argsort(sites, kind="stable")
        object.__setattr__(self, "sites", sites[order])
        object.__setattr__(self, "values", vals[order])

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def pinned_mask(self) -> np.ndarray:
        mask = np.zeros(self.domain.n_sites, dtype=bool)
        mask[self.sites] = True
        return mask

    @property
    def free_sites(self) -> np.ndarray:
        return np.flatnonzero(~self.pinned_mask)

    @classmethod
    def empty(cls, domain: LatticeDomain, m: int = 1) -> "ConstraintSet":
        return cls(domain, np.zeros(0, dtype=np.int64), np.zeros((0, m)))

    @classmethod
    def from_mask(cls, domain: LatticeDomain, mask: np.ndarray, value) -> "ConstraintSet":
        """Pin the sites selected by a boolean per-site mask to a constant vector (or per-site values)."""
        sites = np.flatnonzero(mask)
        value = np.asarray(value, dtype=float)
        if value.ndim <= 1:
            vals = np.broadcast_to(np.atleast_1d(value), (sites.size, np.atleast_1d(value).size)).copy()
        else:
            vals = value
        return cls(domain, sites, vals)

    def merge(self, other: "ConstraintSet") -> "ConstraintSet":
        if not self.domain.same_as(other.domain):
            raise ValueError("constraints live on different domains")
        common = np.intersect1d(self.sites, other.sites)
        if common.size:
            a = self.values[np.searchsorted(self.sites, common)]
            b = other.values[np.searchsorted(other.sites, common)]
            if not np.array_equal(a, b):
                raise ValueError("conflicting pinned values")
            keep = ~np.isin(other.sites, common)
            return ConstraintSet(self.domain, np.concatenate([self.sites, other.sites[keep]]),
                                 np.concatenate([self.values, other.values[keep]]))
        return ConstraintSet(self.domain, np.concatenate([self.sites, other.sites]),
                             np.concatenate([self.values, other.values]))

    def apply(self, u: LatticeFunction) -> LatticeFunction:
        vals = u.values.copy()
        vals[self.sites] = self.values
        return LatticeFunction(u.domain, vals)

    def satisfied_by(self, u: LatticeFunction) -> bool:
        return bool(np.array_equal(u.values[self.sites], self.values))


# ---------------------------------------------------------------------------
# pair enumeration and difference quotients

def pair_slices(shape: Sequence[int], xi: Sequence[int]) -> tuple[tuple[slice, ...], tuple[slice, ...]] | None:
    """Grid slices (source, target) covering all grid pairs ``(k, k + xi)``; None if empty."""
    src, dst = [], []
    for n, s in zip(shape, xi):
        s = int(s)
        if abs(s) >= n:
            return None
        if s >= 0:
            src.append(slice(0, n - s))
            dst.append(slice(s, n))
        else:
            src.append(slice(-s, n))
            dst.append(slice(0, n + s))
    return tuple(src), tuple(dst)


def interaction_sites(domain: LatticeDomain, xi: Sequence[int]) -> np.ndarray:
    """Enumeration numbers of the sites ``alpha`` with ``alpha`` and ``alpha + eps xi`` both in the domain."""
    xi = tuple(int(s) for s in xi)
    if len(xi) != domain.d:
        raise ValueError("offset dimension does not match the domain")
    sl = pair_slices(domain.shape, xi)
    if sl is None:
        return np.zeros(0, dtype=np.int64)
    src, dst = sl
    num = domain.site_number
    a, b = num[src], num[dst]
    ok = (a >= 0) & (b >= 0)
    return np.sort(a[ok])


def difference_quotient(u: LatticeFunction, xi: Sequence[int], alpha: Sequence[int]) -> np.ndarray:
    """``(u(alpha + eps xi) - u(alpha)) / (eps |xi|)`` for a site given by its integer index."""
    xi = np.asarray(xi, dtype=np.int64)
    if not np.any(xi):
        raise ValueError("offset must be nonzero")
    dom = u.domain
    a = dom.site_of(alpha)
    b = dom.site_of(np.asarray(alpha) + xi)
    return (u.values[b] - u.values[a]) / (dom.eps * float(np.linalg.norm(xi)))


def difference_quotients(u: LatticeFunction, xi: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """All quotients along ``xi``: (sites alpha, array of shape (n_pairs, m))."""
    xi = tuple(int(s) for s in xi)
    sites = interaction_sites(u.domain, xi)
    idx = u.domain.indices[sites] + np.asarray(xi)
    pos = idx - np.asarray(u.domain.lo)
    tgt = u.domain.site_number[tuple(pos.T)]
    D = (u.values[tgt] - u.values[sites]) / (u.domain.eps * math.sqrt(sum(s * s for s in xi)))
    return sites, D


# ---------------------------------------------------------------------------
# perforations and frames

@dataclass(frozen=True, eq=False)
class PerforationGeometry:
    """delta-periodic array of closed cubes of side ``r`` centred at ``i delta``."""

    eps: float
    N: int
    n: int
    domain: LatticeDomain
    mask: np.ndarray  # per-site boolean

    @property
    def delta(self) -> float:
        return self.N * self.eps

    @property
    def r(self) -> float:
        return 2 * self.n * self.eps

    def contains_index(self, k: Sequence[int]) -> bool:
        return all(min(int(ki) % self.N, self.N - int(ki) % self.N) <= self.n for ki in k)


def perforation_grid_mask(domain: LatticeDomain, N: int, n: int) -> np.ndarray:
    out = np.ones(domain.shape, dtype=bool)
    for ax in range(domain.d):
        k = domain.axis_indices(ax) % N
        near = np.minimum(k, N - k) <= n
        shp = [1] * domain.d
        shp[ax] = -1
        out = out & near.reshape(shp)
    return out


def build_perforation(delta: float, r: float, domain: LatticeDomain) -> PerforationGeometry:
    """Mask of the sites within Chebyshev distance ``r/2`` of some centre ``i delta``."""
    eps = domain.eps
    N = _ratio_int(delta, eps, "delta")
    n = _ratio_int(r / 2.0, eps, "r/2")
    if N < 2:
        raise ValueError("delta must be at least 2 lattice spacings")
    if not 2 * n < N:
        raise ValueError("perforation side must be smaller than the period")
    gmask = perforation_grid_mask(domain, N, n)
    mask = domain.from_grid(gmask)
    mask.setflags(write=False)
    return PerforationGeometry(eps=eps, N=N, n=n, domain=domain, mask=mask)


def boundary_frame(eps: float, d: int, R: float, thickness: float) -> np.ndarray:
    """Integer indices of the sites in ``Q_{R+t} minus Q_{R-t}`` (open cubes centred at 0)."""
    if thickness < 0:
        raise ValueError("thickness must be nonnegative")
    if thickness >= R / 2:
        raise ValueError("frame thickness must be smaller than R/2")
    if thickness == 0:
        return np.zeros((0, d), dtype=np.int64)
    outer = cube_index_radius((R + thickness) / 2, eps, closed=False)
    inner = cube_index_radius((R - thickness) / 2, eps, closed=False)
    ax = np.arange(-outer, outer + 1)
    grids = np.meshgrid(*([ax] * d), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)
    cheb = np.abs(idx).max(axis=1)
    return idx[cheb > inner]


# ---------------------------------------------------------------------------
# continuum <-> lattice

def cell_average_sample(u: Callable[[np.ndarray], np.ndarray], domain: LatticeDomain,
                        order: int = 3) -> LatticeFunction:
    """Per-site averages ``eps^-d * int_{alpha + [0, eps)^d} u`` by a tensor Gauss-Legendre rule."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    d, eps = domain.d, domain.eps
    base = domain.coords
    acc = None
    for multi in np.ndindex(*([order] * d)):
        offset = eps * nodes[list(multi)]
        w = float(np.prod(weights[list(multi)]))
        val = np.asarray(u(base + offset), dtype=float)
        if val.ndim == 1:
            val = val[:, None]
        acc = w * val if acc is None else acc + w * val
    return LatticeFunction(domain, acc)


class PiecewiseAffine2D:
    """Piecewise-affine interpolant of planar lattice data on the triangulation ``T-``/``T+`` of each cell.

    On ``alpha + eps T-`` (below the anti-diagonal) the gradient is
    ``(D1 u(alpha), D2 u(alpha))``; on ``alpha + eps T+`` it is
    ``(D1 u(alpha + eps e2), D2 u(alpha + eps e1))``.
    """

    def __init__(self, u: LatticeFunction):
        dom = u.domain
        if dom.d != 2:
            raise ValueError("piecewise-affine interpolation is implemented for d = 2 only")
        self.u = u
        self.eps = dom.eps
        g = u.grid()
        ok = dom.grid_mask
        self._g = g
        self._cell_ok = ok[:-1, :-1] & ok[1:, :-1] & ok[:-1, 1:] & ok[1:, 1:]
        e = self.eps
        u00, u10, u01, u11 = g[:-1, :-1], g[1:, :-1], g[:-1, 1:], g[1:, 1:]
        # gradients have shape (n1-1, n2-1, m, 2)
        self.grad_minus = np.stack([(u10 - u00) / e, (u01 - u00) / e], axis=-1)
        self.grad_plus = np.stack([(u11 - u01) / e, (u11 - u10) / e], axis=-1)

    @property
    def cells_ok(self) -> np.ndarray:
        return self._cell_ok

    def _locate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dom = self.u.domain
        t = x / self.eps
        k = np.floor(t).astype(np.int64)
        loc = t - k
        pos = k - np.asarray(dom.lo)
        n1, n2 = self._cell_ok.shape
        inside = (pos[:, 0] >= 0) & (pos[:, 0] < n1) & (pos[:, 1] >= 0) & (pos[:, 1] < n2)
        inside[inside] = self._cell_ok[pos[inside, 0], pos[inside, 1]]
        upper = loc.sum(axis=1) > 1.0
        return x, pos, loc, inside, upper

    def __call__(self, x) -> np.ndarray:
        x, pos, loc, inside, upper = self._locate(x)
        m = self.u.m
        out = np.full((x.shape[0], m), np.nan)
        i, j = pos[inside, 0], pos[inside, 1]
        lo_ = loc[inside] * self.eps
        up = upper[inside]
        base_minus = self._g[i, j]
        val_minus = base_minus + np.einsum("nmk,nk->nm", self.grad_minus[i, j], lo_)
        base_plus = self._g[i + 1, j + 1]
        val_plus = base_plus + np.einsum("nmk,nk->nm", self.grad_plus[i, j], lo_ - self.eps)
        out[inside] = np.where(up[:, None], val_plus, val_minus)
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient ``(n, m, 2)`` at points (NaN outside the triangulated cells)."""
        x, pos, loc, inside, upper = self._locate(x)
        out = np.full((x.shape[0], self.u.m, 2), np.nan)
        i, j = pos[inside, 0], pos[inside, 1]
        out[inside] = np.where(upper[inside][:, None, None], self.grad_plus[i, j], self.grad_minus[i, j])
        return out

    def integral_grad_p(self, p: float = 2.0) -> float:
        """``int |grad u_hat|^p`` over the triangulated cells (exact: gradients are constant per triangle)."""
        area = 0.5 * self.eps ** 2
        gm = np.linalg.norm(self.grad_minus.reshape(self.grad_minus.shape[:2] + (-1,)), axis=-1) ** p
        gp = np.linalg.norm(self.grad_plus.reshape(self.grad_plus.shape[:2] + (-1,)), axis=-1) ** p
        return float(area * np.sum((gm + gp)[self._cell_ok]))


def affine_interpolate_2d(u: LatticeFunction) -> PiecewiseAffine2D:
    return PiecewiseAffine2D(u)


def truncation_map(z: np.ndarray, L: float) -> np.ndarray:
    """Radial 1-Lipschitz cut-off: identity for |z| <= L, ``z (2 - |z|/L)`` up to 2L, zero beyond."""
    if not L > 0:
        raise ValueError("truncation level must be positive")
    z = np.asarray(z, dtype=float)
    r = np.linalg.norm(z, axis=-1, keepdims=True)
    scale = np.where(r <= L, 1.0, np.where(r <= 2 * L, 2.0 - r / L, 0.0))
    return z * scale


def truncate_values(u: LatticeFunction, L: float) -> LatticeFunction:
    return LatticeFunction(u.domain, truncation_map(u.values, L))
