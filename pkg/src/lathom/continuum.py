"""Forward-difference discretizations of integral functionals ``int f(grad u) + W(u) - g.u`` on box grids.

Used as reference solvers for the continuum problems (capacity with the
homogenized density, and the limit model with the capacitary potential).
Nodes sit at ``x_k = origin + h k``; the gradient at a node uses the forward
neighbours along every axis, so only nodes with all forward neighbours in the
grid carry an energy term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .densities import PowerDensity


@dataclass(frozen=True)
class HomogenizedDensity:
    """Closed-form ``f_hom(M) = sum_xi c(xi) |M xi/|xi||^p`` of a convex power density."""

    p: float
    directions: np.ndarray  # (n_off, d) unit vectors
    coefficients: np.ndarray
    weights: np.ndarray | None = None  # unused placeholder for non-convex fits

    @classmethod
    def from_density(cls, dens: PowerDensity) -> "HomogenizedDensity":
        xi = np.asarray(dens.offsets, dtype=float)
        return cls(dens.p, xi / np.linalg.norm(xi, axis=1, keepdims=True), np.asarray(dens.coefficients, float))

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    @property
    def isotropic_quadratic(self) -> float | None:
        """``a`` if ``f_hom(M) = a |M|^2`` exactly, else None."""
        if self.p != 2.0:
            return None
        A = np.einsum("j,ja,jb->ab", self.coefficients, self.directions, self.directions)
        a = A[0, 0]
        if np.allclose(A, a * np.eye(self.d), rtol=1e-13, atol=1e-13 * abs(a)):
            return float(np.trace(A) / self.d)
        return None

    def value(self, Ms: np.ndarray) -> np.ndarray:
        """``Ms`` has shape (n, m, d); returns (n,)."""
        W = np.einsum("nmd,jd->njm", Ms, self.directions)
        mag2 = np.einsum("njm,njm->nj", W, W)
        if self.p == 2.0:
            return mag2 @ self.coefficients
        return (mag2 ** (0.5 * self.p)) @ self.coefficients

    def gradient(self, Ms: np.ndarray) -> np.ndarray:
        W = np.einsum("nmd,jd->njm", Ms, self.directions)
        mag2 = np.einsum("njm,njm->nj", W, W)
        if self.p == 2.0:
            w = 2.0 * self.coefficients[None, :] * np.ones_like(mag2)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(mag2 > 0, self.p * self.coefficients[None, :] * mag2 ** (0.5 * self.p - 1.0), 0.0)
        return np.einsum("nj,njm,jd->nmd", w, W, self.directions)

    def __call__(self, M) -> float:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return float(self.value(M[None])[0])


@dataclass(frozen=True)
class QuadraticPotential:
    """``W(z) = b |z|^2``."""

    b: float

    def value(self, Z):
        return self.b * np.einsum("ij,ij->i", Z, Z)

    def gradient(self, Z):
        return 2.0 * self.b * Z


def _forward_block(n: tuple[int, ...]):
    return tuple(slice(0, k - 1) for k in n)


def _shifted_block(n, axis):
    return tuple(slice(1, k) if a == axis else slice(0, k - 1) for a, k in enumerate(n))


class GradientObjective:
    """``sum h^d f(grad_h u) + sum h^d W(u) - sum h^d g.u`` over the free grid nodes."""

    def __init__(self, shape, h: float, fhom: HomogenizedDensity, pinned: np.ndarray, pinned_values: np.ndarray,
                 potential=None, forcing: np.ndarray | None = None):
        self.shape = tuple(int(s) for s in shape)
        self.h = float(h)
        self.fhom = fhom
        self.pinned = np.asarray(pinned, dtype=bool)
        pv = np.asarray(pinned_values, dtype=float)
        if pv.ndim == len(self.shape):
            pv = pv[..., None]
        self.m = pv.shape[-1]
        self.base = np.where(self.pinned[..., None], pv, 0.0)
        self.free_pos = np.flatnonzero(~self.pinned.ravel())
        self.potential = potential
        self.vol = self.h ** len(self.shape)
        self.forcing = None if forcing is None else np.asarray(forcing, dtype=float).reshape(self.shape + (self.m,))

    @property
    def n(self) -> int:
        return self.free_pos.size * self.m

    @property
    def d(self) -> int:
        return len(self.shape)

    def grid(self, x):
        G = self.base.copy()
        G.reshape(-1, self.m)[self.free_pos] = x.reshape(-1, self.m)
        return G

    def value_and_grad(self, x):
        G = self.grid(x)
        d, m, h = self.d, self.m, self.h
        blk = _forward_block(self.shape)
        base = G[blk]
        D = np.stack([(G[_shifted_block(self.shape, k)] - base) / h for k in range(d)], axis=-1)
        shp = D.shape
        Ms = D.reshape(-1, m, d)
        E = self.vol * float(np.sum(self.fhom.value(Ms)))
        gM = (self.fhom.gradient(Ms) * (self.vol / h)).reshape(shp)
        grad = np.zeros_like(G)
        for k in range(d):
            grad[_shifted_block(self.shape, k)] += gM[..., k]
            grad[blk] -= gM[..., k]
        flat = G.reshape(-1, m)
        gflat = grad.reshape(-1, m)
        if self.potential is not None:
            E += self.vol * float(np.sum(self.potential.value(flat)))
            gflat += self.vol * self.potential.gradient(flat)
        if self.forcing is not None:
            fl = self.forcing.reshape(-1, m)
            E -= self.vol * float(np.sum(fl * flat))
            gflat -= self.vol * fl
        return E, gflat[self.free_pos].ravel()

    def energy_parts(self, x):
        """(gradient term, potential term, linear term) at ``x``."""
        G = self.grid(x)
        d, m, h = self.d, self.m, self.h
        blk = _forward_block(self.shape)
        D = np.stack([(G[_shifted_block(self.shape, k)] - G[blk]) / h for k in range(d)], axis=-1)
        bulk = self.vol * float(np.sum(self.fhom.value(D.reshape(-1, m, d))))
        flat = G.reshape(-1, m)
        pot = self.vol * float(np.sum(self.potential.value(flat))) if self.potential is not None else 0.0
        lin = self.vol * float(np.sum(self.forcing.reshape(-1, m) * flat)) if self.forcing is not None else 0.0
        return bulk, pot, lin

    def quadratic_system(self):
        a = self.fhom.isotropic_quadratic
        pot = self.potential
        quad_pot = pot is None or isinstance(pot, QuadraticPotential) or getattr(pot, "is_quadratic", False)
        if a is None or not quad_pot:
            raise TypeError("not a quadratic problem")
        d, m, h = self.d, self.m, self.h
        nf = self.free_pos.size
        num = np.full(int(np.prod(self.shape)), -1, dtype=np.int64)
        num[self.free_pos] = np.arange(nf)
        num = num.reshape(self.shape)
        w = a * h ** (d - 2)
        diag = np.zeros(nf)
        rhs = np.zeros((nf, m))
        rows, cols = [], []
        blk = _forward_block(self.shape)
        for k in range(d):
            A_ = num[blk].ravel()
            B_ = num[_shifted_block(self.shape, k)].ravel()
            uA = self.base[blk].reshape(-1, m)
            uB = self.base[_shifted_block(self.shape, k)].reshape(-1, m)
            fa, fb = A_ >= 0, B_ >= 0
            np.add.at(diag, A_[fa], w)
            np.add.at(diag, B_[fb], w)
            both = fa & fb
            rows.append(A_[both])
            cols.append(B_[both])
            oa, ob = fa & ~fb, fb & ~fa
            np.add.at(rhs, A_[oa], w * uB[oa])
            np.add.at(rhs, B_[ob], w * uA[ob])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        off = sp.coo_matrix((np.full(r.size, -w), (r, c)), shape=(nf, nf))
        if self.potential is not None:
            diag = diag + self.vol * self.potential.b
        L = (off + off.T + sp.diags(diag)).tocsr()
        b = 2.0 * rhs
        if self.forcing is not None:
            b = b + self.vol * self.forcing.reshape(-1, m)[self.free_pos]
        return 2.0 * L, b


def richardson(hs, vals) -> tuple[float, float, float]:
    """Extrapolate ``v(h) = v0 + a h^q`` from three spacings with the order fitted.

    Returns (v0, q, error) with error the change relative to the finest value.
    Falls back to q = 1 when the observed order is undefined.
    """
    from .homogenization import observed_order

    hs = np.asarray(hs, dtype=float)
    v = np.asarray(vals, dtype=float)
    q = observed_order(hs, v)
    if not math.isfinite(q):
        q = 1.0
    a = (v[1] - v[2]) / (hs[1] ** q - hs[2] ** q)
    v0 = v[2] - a * hs[2] ** q
    return float(v0), float(q), float(abs(v0 - v[2]))


class TabulatedPotential:
    """``W(z) = scale * |z|^p * phi_hat(z/|z|)`` with ``phi_hat`` tabulated on the unit sphere.

    m = 1: two values (at -1 and +1).  m = 2: values at equally spaced angles,
    interpolated linearly in the angle.
    """

    def __init__(self, p: float, m: int, table, scale: float = 1.0):
        self.p, self.m, self.scale = float(p), int(m), float(scale)
        self.table = np.asarray(table, dtype=float)
        if m == 1 and self.table.shape != (2,):
            raise ValueError("m = 1 needs the two values phi(-1), phi(+1)")
        if m == 2 and self.table.ndim != 1:
            raise ValueError("m = 2 needs a 1-d table over angles")
        if m > 2:
            raise ValueError("tabulated potentials are implemented for m <= 2")

    @property
    def b(self) -> float:
        """Coefficient of the equivalent quadratic potential (only when p = 2 and the table is constant)."""
        return self.scale * float(self.table[0])

    @property
    def is_quadratic(self) -> bool:
        return self.p == 2.0 and bool(np.all(self.table == self.table[0]))

    def _angular(self, Z):
        if self.m == 1:
            z = Z[:, 0]
            val = np.where(z >= 0, self.table[1], self.table[0])
            return val, np.zeros_like(val)
        n = self.table.size
        th = np.mod(np.arctan2(Z[:, 1], Z[:, 0]), 2 * np.pi)
        t = th / (2 * np.pi) * n
        i0 = np.floor(t).astype(int) % n
        i1 = (i0 + 1) % n
        w = t - np.floor(t)
        val = (1 - w) * self.table[i0] + w * self.table[i1]
        dval = (self.table[i1] - self.table[i0]) * n / (2 * np.pi)
        return val, dval

    def value(self, Z):
        r = np.linalg.norm(Z, axis=1)
        val, _ = self._angular(Z)
        return self.scale * r ** self.p * val

    def gradient(self, Z):
        r2 = np.einsum("ij,ij->i", Z, Z)
        val, dval = self._angular(Z)
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = np.where(r2 > 0, self.p * r2 ** (0.5 * self.p - 1.0), 0.0)
        g = (radial * val)[:, None] * Z
        if self.m == 2:
            # d(theta)/dz = (-z2, z1)/|z|^2, times |z|^p
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(r2 > 0, r2 ** (0.5 * self.p - 1.0) * dval, 0.0)
            g = g + fac[:, None] * np.stack([-Z[:, 1], Z[:, 0]], axis=1)
        return self.scale * g
