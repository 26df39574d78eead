"""Minimization of constrained discrete energies.

Pins are affine constraints, so the free values are the only unknowns and
projection is trivial.  Quadratic problems (p = 2 power densities, with an
optional linear forcing) are solved as a sparse linear system.  Everything
else goes through a monotone accelerated gradient method with Barzilai-Borwein
step proposals, backtracking and adaptive restart; for p < 2 the density is
smoothed and the smoothing parameter is driven to zero by continuation.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .densities import PowerDensity
from .energy import EnergySpec, LatticeObjective, energy_total
from .lattice import ConstraintSet, LatticeFunction

DIRECT_LIMIT = 30_000
# pyamg draws its spectral-radius start vectors from the global numpy RNG
AMG_SEED = 0
_AMG_LOCK = threading.Lock()


def _default_kappas():
    return [10.0 ** (-k) for k in range(1, 9)]


@dataclass
class SolveOptions:
    gtol: float = 1e-8
    max_iter: int = 200_000
    kappas: list[float] = field(default_factory=_default_kappas)
    stage_gtol: float = 1e-6
    armijo: float = 0.5
    backtrack: float = 0.5
    method: str = "auto"  # auto | linear | gradient
    linear_rtol: float = 1e-13
    warm_start: bool = True
    seed: int = 0
    log_path: str | None = None

    def __post_init__(self):
        if not (self.gtol > 0 and self.stage_gtol > 0 and self.max_iter > 0):
            raise ValueError("tolerances and iteration budget must be positive")
        k = list(self.kappas)
        if k:
            if any(not (a > b) for a, b in zip(k, k[1:])) or k[-1] >= 1e-6 or k[0] <= 0:
                raise ValueError("smoothing schedule must be positive, strictly decreasing and end below 1e-6")
        if self.method not in ("auto", "linear", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class MinimizationResult:
    minimizer: LatticeFunction | None
    value: float
    iterations: int
    grad_norm: float
    converged: bool
    trace: list = field(default_factory=list)  # one entry per smoothing stage
    log: list = field(default_factory=list)  # (iteration, kappa, energy, gradient norm)
    method: str = ""
    message: str = ""
    x: np.ndarray | None = None
    energy: float = math.nan  # energy part only (value = energy - linear term)

    def write_log(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "kappa", "energy", "grad_norm"])
            for it, kap, e, g in self.log:
                w.writerow([it, repr(float(kap)), repr(float(e)), repr(float(g))])


def _converged(g: np.ndarray, E: float, scale: float, tol: float) -> tuple[bool, float]:
    gn = float(np.max(np.abs(g))) if g.size else 0.0
    return gn <= tol * max(abs(E), scale), gn


# ---------------------------------------------------------------------------
# first-order core

ROUNDOFF = 1e-12


def _decrease(f0, g0, f1, g1, dx) -> float:
    """``f1 - f0``, or its trapezoid estimate when the difference is lost in rounding."""
    diff = f1 - f0
    if abs(diff) > ROUNDOFF * max(abs(f0), abs(f1)):
        return diff
    return 0.5 * float((g0 + g1) @ dx)

def accelerated_descent(fun, x0: np.ndarray, gtol: float, scale: float, max_iter: int,
                        armijo: float = 0.5, backtrack: float = 0.5, kappa: float = 0.0,
                        log: list | None = None, it0: int = 0):
    """Monotone FISTA with BB step proposals, backtracking and gradient restart.

    ``fun(x) -> (value, gradient)``.  Returns (x, f, g, iterations, converged).
    The accepted iterate's value never increases beyond rounding: when two
    values agree to within ``ROUNDOFF`` their difference is judged by the
    trapezoid estimate ``(g0 + g1) . (x1 - x0) / 2`` instead.
    """
    x = x0.copy()
    fx, gx = fun(x)
    ok, gn = _converged(gx, fx, scale, gtol)
    if log is not None:
        log.append((it0, kappa, fx, gn))
    if ok:
        return x, fx, gx, 0, True
    y, fy, gy = x, fx, gx
    t = 1.0
    gg = float(gx @ gx)
    step = 1.0 / max(1e-300, math.sqrt(gg)) if gg > 0 else 1.0
    # a first probe along -g to set the scale
    z = x - step * gx
    fz, gz = fun(z)
    s_ = z - x
    yv = gz - gx
    sy = float(s_ @ yv)
    if sy > 0:
        step = float(s_ @ s_) / sy
    prev_y, prev_gy = None, None
    stall = 0
    for it in range(1, max_iter + 1):
        # BB proposal from the last accepted extrapolation point
        if prev_y is not None:
            s_ = y - prev_y
            yv = gy - prev_gy
            sy = float(s_ @ yv)
            if sy > 0:
                step = min(float(s_ @ s_) / sy, 4.0 * step)
            else:
                step = 2.0 * step
        sq = float(gy @ gy)
        while True:
            z = y - step * gy
            fz, gz = fun(z)
            if _decrease(fy, gy, fz, gz, z - y) <= -armijo * step * sq:
                break
            step *= backtrack
            if step < 1e-300:
                break
        prev_y, prev_gy = y, gy
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if _decrease(fx, gx, fz, gz, z - x) <= 0.0:
            x_old = x
            x, fx, gx = z, fz, gz
            restart = float(gy @ (x - x_old)) > 0
            if restart:
                t_new = 1.0
                y, fy, gy = x, fx, gx
            else:
                y = x + ((t - 1.0) / t_new) * (x - x_old)
                fy, gy = fun(y)
            stall = 0
        else:
            # monotone safeguard: keep x, restart from it
            t_new = 1.0
            y, fy, gy = x, fx, gx
            stall += 1
        t = t_new
        ok, gn = _converged(gx, fx, scale, gtol)
        if log is not None and (it % 50 == 0 or ok):
            log.append((it0 + it, kappa, fx, gn))
        if ok:
            return x, fx, gx, it, True
        if stall > 60:
            return x, fx, gx, it, False
    return x, fx, gx, max_iter, False


# ---------------------------------------------------------------------------

def solve_linear(A: sp.spmatrix, b: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Solve the SPD system A X = B column by column (direct below DIRECT_LIMIT, AMG-CG above)."""
    n = A.shape[0]
    B = b.reshape(n, -1)
    X = np.zeros_like(B)
    if n == 0:
        return X
    if n <= DIRECT_LIMIT:
        lu = spla.splu(A.tocsc())
        for j in range(B.shape[1]):
            X[:, j] = lu.solve(B[:, j])
        return X
    import pyamg

    with _AMG_LOCK:
        state = np.random.get_state()
        np.random.seed(AMG_SEED)
        try:
            ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
        finally:
            np.random.set_state(state)
    for j in range(B.shape[1]):
        if not np.any(B[:, j]):
            continue
        X[:, j] = ml.solve(B[:, j], tol=rtol, accel="cg", maxiter=2000)
    return X


def minimize_objective(obj, opts: SolveOptions, x0: np.ndarray | None = None, scale: float = 0.0,
                       stages=None) -> MinimizationResult:
    """Generic driver for objects exposing ``n``, ``value_and_grad`` and optionally ``quadratic_system``.

    ``stages`` is a list of (kappa, objective) pairs for the continuation; by
    default the objective itself is the only stage.
    """
    log: list = []
    trace: list = []
    method = opts.method
    quad = None
    if method in ("auto", "linear"):
        try:
            quad = obj.quadratic_system()
        except TypeError:
            if method == "linear":
                raise
            quad = None
    if quad is not None:
        A, b = quad
        X = solve_linear(A, b, opts.linear_rtol)
        x = X.ravel()
        f, g = obj.value_and_grad(x)
        ok, gn = _converged(g, f, scale, opts.gtol)
        if not ok:
            # polish with a few gradient steps in case the iterative solve stalled
            x, f, g, _, ok = accelerated_descent(obj.value_and_grad, x, opts.gtol, scale, 2000)
            ok, gn = _converged(g, f, scale, opts.gtol)
        log.append((0, 0.0, f, gn))
        trace.append({"kappa": 0.0, "iterations": 1, "value": f, "grad_norm": gn})
        return MinimizationResult(None, f, 1, gn, ok, trace, log, "linear",
                                  "" if ok else "linear solve did not reach the gradient tolerance", x)
    if stages is None:
        stages = [(0.0, obj)]
    x = np.zeros(obj.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    total = 0
    ok, gn, f = False, math.inf, math.nan
    for i, (kap, stage_obj) in enumerate(stages):
        last = i == len(stages) - 1
        tol = opts.gtol if last else max(opts.gtol, opts.stage_gtol)
        budget = opts.max_iter - total
        if budget <= 0:
            ok = False
            break
        x, f, g, its, ok = accelerated_descent(stage_obj.value_and_grad, x, tol, scale, budget,
                                               opts.armijo, opts.backtrack, kap, log, total)
        total += its
        _, gn = _converged(g, f, scale, tol)
        trace.append({"kappa": kap, "iterations": its, "value": f, "grad_norm": gn, "converged": ok})
    msg = "" if ok else f"no convergence within {opts.max_iter} iterations (final gradient norm {gn:.3e})"
    return MinimizationResult(None, f, total, gn, ok, trace, log, "gradient", msg, x)


def minimize(spec: EnergySpec, constraints: ConstraintSet, opts: SolveOptions | None = None,
             forcing: np.ndarray | None = None, x0: np.ndarray | None = None) -> MinimizationResult:
    """Minimize ``F(u) - sum eps^d g . u`` over lattice functions satisfying the pins.

    The reported value is recomputed with the exact (unsmoothed) density and
    the minimizer carries the pinned values unchanged.  Without forcing, the
    problem is solved for pinned data divided by its largest magnitude and the
    result is rescaled, which makes the outcome exactly equivariant under
    scaling of the data by powers of two.
    """
    opts = opts or SolveOptions()
    dom = spec.domain
    dens = spec.density
    if constraints.sites.size == 0 and forcing is not None:
        raise ValueError("an unpinned problem with forcing has no minimum (translation invariance)")
    p = dens.p
    scale_data = 1.0
    cons = constraints
    if forcing is None:
        amp = float(np.max(np.abs(constraints.values))) if constraints.values.size else 0.0
        if amp == 0.0:
            u = LatticeFunction(dom, np.zeros((dom.n_sites, constraints.m)))
            val = energy_total(spec, u)
            return MinimizationResult(u, val.total, 0, 0.0, True, [], [(0, 0.0, 0.0, 0.0)], "trivial", "",
                                      np.zeros(constraints.free_sites.size * constraints.m), val.total)
        scale_data = amp
        cons = ConstraintSet(dom, constraints.sites, constraints.values / amp)
    obj = LatticeObjective(spec, cons, forcing)
    scale = spec.volume * 1e-300

    stages = None
    x0n = None if x0 is None else np.asarray(x0, dtype=float) / scale_data
    quadratic = isinstance(dens, PowerDensity) and dens.is_quadratic
    if not quadratic or opts.method == "gradient":
        kaps = list(opts.kappas) if p < 2 else []
        stages = [(k, obj.with_density(dens.smoothed(k))) for k in kaps] + [(0.0, obj)] if p < 2 else [(0.0, obj)]
        if p < 2:
            # the unsmoothed density is not differentiable at 0; stop at the last smoothing level
            stages = stages[:-1]
        if x0n is None and opts.warm_start and isinstance(dens, PowerDensity) and cons.sites.size:
            warm = PowerDensity(2.0, dens.T, dens.d, dens.offsets, dens.coefficients, dens.family, dens.s)
            wobj = obj.with_density(warm)
            A, b = wobj.quadratic_system()
            x0n = solve_linear(A, b, opts.linear_rtol).ravel()
    inner_opts = opts
    if opts.method == "auto" and not quadratic:
        inner_opts = SolveOptions(**{**opts.__dict__, "method": "gradient"})
    res = minimize_objective(obj, inner_opts, x0n, scale, stages)
    x = res.x
    vals = obj.full_values(x) * scale_data
    vals[constraints.sites] = constraints.values
    u = LatticeFunction(dom, vals)
    ev = energy_total(spec, u)
    value = ev.total
    if forcing is not None:
        f = np.asarray(forcing, dtype=float).reshape(dom.n_sites, -1)
        value = ev.total - spec.volume * float(np.sum(f * u.values))
    res.minimizer = u
    res.energy = ev.total
    res.value = value
    res.grad_norm = res.grad_norm * scale_data ** (p - 1)
    res.x = x * scale_data
    res.log = [(it, k, e * scale_data ** p, g * scale_data ** (p - 1)) for it, k, e, g in res.log]
    if opts.log_path:
        res.write_log(opts.log_path)
    return res
