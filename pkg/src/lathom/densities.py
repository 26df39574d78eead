"""Pairwise interaction densities f(xi, z) and randomized checks of their structural assumptions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

DEFAULT_T = 3.0
FAMILIES = ("nearest_neighbor", "polynomial")


def lattice_offsets(d: int, T: float) -> list[tuple[int, ...]]:
    """All nonzero xi in Z^d with |xi| <= T, lexicographic order."""
    r = int(math.floor(T + 1e-12))
    out = []
    for xi in itertools.product(range(-r, r + 1), repeat=d):
        if any(xi) and sum(s * s for s in xi) <= T * T + 1e-9:
            out.append(tuple(xi))
    return out


def unit_offsets(d: int) -> list[tuple[int, ...]]:
    out = []
    for k in range(d):
        for s in (1, -1):
            e = [0] * d
            e[k] = s
            out.append(tuple(e))
    return sorted(out)


class InteractionDensity:
    """Family ``f(xi, .)`` indexed by a finite list of offsets.

    Subclasses provide ``value(j, Z)`` and ``gradient(j, Z)`` for the ``j``-th
    offset and a batch ``Z`` of shape ``(n, m)``.  ``lambda0`` and ``bound(j)``
    are the constants the density claims for itself; ``validate_assumptions``
    checks the claims rather than trusting them.
    """

    p: float
    T: float
    d: int
    offsets: list[tuple[int, ...]]

    def value(self, j: int, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, j: int, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def lambda0(self) -> float:
        raise NotImplementedError

    def bound(self, j: int) -> float:
        raise NotImplementedError

    def smoothed(self, kappa: float) -> "InteractionDensity":
        """Smoothed surrogate used by first-order solvers; the default is the density itself."""
        return self

    @property
    def is_quadratic(self) -> bool:
        return False

    @property
    def reach(self) -> float:
        """Largest |xi| among the offsets carrying a nonzero interaction."""
        return max(math.sqrt(sum(s * s for s in xi)) for xi in self.offsets)

    def offset_index(self, xi: Sequence[int]) -> int:
        return self.offsets.index(tuple(int(s) for s in xi))

    def __call__(self, xi: Sequence[int], z) -> float:
        key = tuple(int(s) for s in xi)
        if key not in self.offsets:
            return 0.0  # outside the interaction range
        j = self.offsets.index(key)
        return float(self.value(j, np.atleast_2d(np.asarray(z, dtype=float)))[0])


@dataclass(eq=False)
class PowerDensity(InteractionDensity):
    """``f(xi, z) = c(xi) |z|^p`` on a finite offset list."""

    p: float
    T: float
    d: int
    offsets: list[tuple[int, ...]]
    coefficients: np.ndarray
    family: str = "custom"
    s: float | None = None
    kappa: float = 0.0
    _norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self._norms = np.array([math.sqrt(sum(s * s for s in xi)) for xi in self.offsets])

    def value(self, j, Z):
        c = self.coefficients[j]
        sq = np.einsum("ij,ij->i", Z, Z)
        if self.kappa > 0:
            k2 = self.kappa * self.kappa
            return c * ((sq + k2) ** (0.5 * self.p) - self.kappa ** self.p)
        if self.p == 2.0:
            return c * sq
        return c * sq ** (0.5 * self.p)

    def gradient(self, j, Z):
        c = self.coefficients[j]
        sq = np.einsum("ij,ij->i", Z, Z)
        if self.kappa > 0:
            w = self.p * c * (sq + self.kappa * self.kappa) ** (0.5 * self.p - 1.0)
        elif self.p == 2.0:
            return 2.0 * c * Z
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(sq > 0, self.p * c * sq ** (0.5 * self.p - 1.0), 0.0)
        return w[:, None] * Z

    @property
    def lambda0(self) -> float:
        vals = []
        for xi in unit_offsets(self.d):
            if xi[np.flatnonzero(xi)[0]] > 0:
                vals.append(self.coefficients[self.offsets.index(xi)] if xi in self.offsets else 0.0)
        return float(min(vals))

    def bound(self, j):
        return float(self.coefficients[j])

    @property
    def bound_sum(self) -> float:
        return float(math.fsum(self.coefficients))

    def smoothed(self, kappa):
        if self.p >= 2.0 or kappa <= 0:
            return self
        return PowerDensity(self.p, self.T, self.d, self.offsets, self.coefficients,
                            self.family, self.s, float(kappa))

    @property
    def is_quadratic(self) -> bool:
        return self.p == 2.0 and self.kappa == 0.0

    def with_truncation(self, T: float) -> "PowerDensity":
        """Same family with a different truncation radius (only meaningful for the built-in families)."""
        return power_density(self.p, T, self.family, self.d, s=self.s if self.s is not None else 3.0)

    def describe(self) -> dict:
        return {"family": self.family, "p": self.p, "T": self.T, "s": self.s, "d": self.d}


def _coefficient_map(family: str, d: int, T: float, s: float | None):
    if family == "nearest_neighbor":
        offs = unit_offsets(d)
        return offs, np.ones(len(offs))
    if family == "polynomial":
        if s is None or not s > d:
            raise ValueError(f"polynomial decay needs s > d, got s={s!r}")
        offs = lattice_offsets(d, T)
        return offs, np.array([sum(t * t for t in xi) ** (-0.5 * s) for xi in offs])
    raise ValueError(f"unknown density family {family!r}; expected one of {FAMILIES}")


def power_density(p: float, T: float = DEFAULT_T, c="nearest_neighbor", d: int = 2,
                  s: float | None = None, strict: bool = True) -> PowerDensity:
    """Build ``c(xi)|z|^p`` truncated at ``|xi| <= T``.

    ``c`` is a family name (``"nearest_neighbor"`` or ``"polynomial"`` with decay
    exponent ``s``), a mapping ``xi -> c(xi)`` or a callable of ``xi``.
    ``strict=False`` skips the coordinate-coercivity check so that degenerate
    densities can be built on purpose.
    """
    if not (p > 1 and math.isfinite(p)):
        raise ValueError(f"exponent p must lie in (1, inf), got {p!r}")
    if not T >= 2:
        raise ValueError(f"truncation radius T must be >= 2, got {T!r}")
    if d < 1:
        raise ValueError("dimension must be positive")
    if isinstance(c, str):
        family = c
        offs, coef = _coefficient_map(c, d, T, s)
    else:
        family = "custom"
        lookup: Callable = c.get if isinstance(c, Mapping) else c
        offs, vals = [], []
        for xi in lattice_offsets(d, T):
            v = lookup(xi)
            v = 0.0 if v is None else float(v)
            if v < 0:
                raise ValueError(f"negative coefficient at {xi}")
            if v > 0:
                offs.append(xi)
                vals.append(v)
        coef = np.array(vals)
        if isinstance(c, Mapping):
            for xi, v in c.items():
                if float(v) > 0 and sum(t * t for t in xi) > T * T + 1e-9:
                    raise ValueError(f"coefficient given for |xi| > T at {xi}")
    dens = PowerDensity(float(p), float(T), d, list(offs), coef, family, s)
    if strict and not dens.lambda0 > 0:
        raise ValueError("c(e_i) must be positive for every coordinate direction")
    return dens


def density_from_config(cfg: Mapping, d: int) -> PowerDensity:
    """``cfg`` holds ``family``, ``p`` and optionally ``T`` and ``s``."""
    family = cfg.get("family", "nearest_neighbor")
    if "p" not in cfg:
        raise ValueError("density config needs an exponent p")
    return power_density(float(cfg["p"]), float(cfg.get("T", DEFAULT_T)), family, d,
                         s=None if cfg.get("s") is None else float(cfg["s"]))


# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    ok: bool
    samples: int
    homogeneity_max_rel_err: float
    coercivity_min_ratio: float
    upper_max_ratio: float
    lipschitz_constant: float
    summability: float
    gradient_max_rel_err: float
    failures: list[str] = field(default_factory=list)
    violations: list[dict] = field(default_factory=list)

    def summary(self) -> str:
        head = "PASS" if self.ok else "FAIL"
        lines = [f"{head} density validation ({self.samples} samples)",
                 f"  homogeneity max rel err   {self.homogeneity_max_rel_err:.3e}",
                 f"  coercivity min ratio      {self.coercivity_min_ratio:.6g}",
                 f"  upper bound max ratio     {self.upper_max_ratio:.6g}",
                 f"  empirical (L) constant    {self.lipschitz_constant:.6g}",
                 f"  sum of bounds             {self.summability:.6g}",
                 f"  gradient max rel err      {self.gradient_max_rel_err:.3e}"]
        lines += [f"  failed: {f}" for f in self.failures]
        return "\n".join(lines)


def validate_assumptions(f: InteractionDensity, sample_budget: int = 2000, seed: int = 0,
                         m: int = 2, homogeneity_tol: float = 1e-10,
                         gradient_tol: float = 1e-5) -> ValidationReport:
    """Randomized check of homogeneity, coordinate coercivity, the upper bound, (L) and summability.

    Never raises on a violated assumption; the report lists the violations.
    """
    rng = np.random.default_rng(seed)
    n_off = len(f.offsets)
    per = max(1, sample_budget // max(1, n_off))
    failures, viol = [], []
    p = f.p

    hom_err = 0.0
    up_ratio = 0.0
    lip = 0.0
    grad_err = 0.0
    for j in range(n_off):
        Z = rng.standard_normal((per, m)) * np.exp(rng.uniform(-3, 3, (per, 1)))
        t = rng.uniform(-4, 4, per)
        base = f.value(j, Z)
        scaled = f.value(j, t[:, None] * Z)
        expect = np.abs(t) ** p * base
        rel = np.abs(scaled - expect) / np.maximum(np.abs(expect), 1e-300)
        k = int(np.argmax(rel))
        if rel[k] > hom_err:
            hom_err = float(rel[k])
        if rel[k] > homogeneity_tol:
            viol.append({"check": "homogeneity", "xi": f.offsets[j], "z": Z[k].tolist(), "t": float(t[k])})

        mags = np.linalg.norm(Z, axis=1) ** p
        Mj = f.bound(j)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_up = np.where(mags > 0, base / (Mj * mags) if Mj > 0 else np.where(base > 0, np.inf, 0.0), 0.0)
        up_ratio = max(up_ratio, float(np.max(r_up)))

        W = Z + rng.standard_normal((per, m)) * np.exp(rng.uniform(-4, 1, (per, 1))) * np.linalg.norm(Z, axis=1, keepdims=True)
        num = np.abs(f.value(j, Z) - f.value(j, W))
        den = (np.linalg.norm(Z, axis=1) ** (p - 1) + np.linalg.norm(W, axis=1) ** (p - 1)) * np.linalg.norm(Z - W, axis=1)
        if Mj > 0:
            q = num / (Mj * den)
            lip = max(lip, float(np.max(q)))
        elif np.any(num > 0):
            lip = math.inf

        # gradient vs central differences at |z| >= 0.1
        Zg = rng.standard_normal((min(per, 20), m))
        Zg *= np.maximum(0.1, np.linalg.norm(Zg, axis=1, keepdims=True)) / np.linalg.norm(Zg, axis=1, keepdims=True)
        G = f.gradient(j, Zg)
        for i in range(Zg.shape[0]):
            step = 1e-6 * np.linalg.norm(Zg[i])
            fd = np.empty(m)
            for a in range(m):
                e = np.zeros((1, m))
                e[0, a] = step
                fd[a] = (f.value(j, Zg[i:i + 1] + e)[0] - f.value(j, Zg[i:i + 1] - e)[0]) / (2 * step)
            scale = max(np.linalg.norm(G[i]), np.linalg.norm(fd), 1e-300)
            grad_err = max(grad_err, float(np.linalg.norm(G[i] - fd) / scale))

    # coordinate coercivity against the claimed lambda0
    lam0 = f.lambda0
    coer = math.inf
    Z = rng.standard_normal((max(per, 10), m))
    mags = np.linalg.norm(Z, axis=1) ** p
    for k in range(f.d):
        e = tuple(1 if i == k else 0 for i in range(f.d))
        if e in f.offsets:
            vals = f.value(f.offsets.index(e), Z)
        else:
            vals = np.zeros(Z.shape[0])
        coer = min(coer, float(np.min(vals / mags)))
    if not lam0 > 0:
        failures.append("coercivity: lambda0 is not positive")
    elif coer < lam0 * (1 - 1e-12):
        failures.append("coercivity: f(e_i, z) < lambda0 |z|^p")
    if not coer > 0:
        viol.append({"check": "coercivity", "min_ratio": coer})
        if "coercivity: lambda0 is not positive" not in failures:
            failures.append("coercivity: f(e_i, .) vanishes")

    if hom_err > homogeneity_tol:
        failures.append(f"homogeneity: max relative error {hom_err:.3e}")
    if up_ratio > 1 + 1e-12:
        failures.append(f"upper bound: f/(M|z|^p) reaches {up_ratio:.6g}")
    if not math.isfinite(lip):
        failures.append("(L): quotient unbounded")
    if grad_err > gradient_tol:
        failures.append(f"gradient: max relative error {grad_err:.3e}")
    summ = float(math.fsum(f.bound(j) for j in range(n_off)))
    if not math.isfinite(summ):
        failures.append("summability: sum of bounds diverges")
    return ValidationReport(ok=not failures, samples=per * n_off, homogeneity_max_rel_err=hom_err,
                            coercivity_min_ratio=coer, upper_max_ratio=up_ratio, lipschitz_constant=lip,
                            summability=summ, gradient_max_rel_err=grad_err, failures=failures,
                            violations=viol)
