"""Config-driven experiments: the perforated-lattice limit study, the regime sweep and the capacity study.

Configs are TOML files with sections [density], [domain], [schedule],
[solver] and [output]; see ``configs/README.md`` for the schema.
"""

from __future__ import annotations

import copy
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .capacity import CUBE_CAPACITY_LITERATURE as CUBE_CAPACITY
from .capacity import OracleValue, phi_continuum_oracle, phi_convergence_study
from .continuum import GradientObjective, HomogenizedDensity, TabulatedPotential, richardson
from .densities import density_from_config
from .energy import EnergySpec, energy_total
from .io import write_rows
from .lattice import ConstraintSet, build_domain, build_perforation
from .solver import SolveOptions, minimize, minimize_objective


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def workers() -> int:
    raw = os.environ.get("LATHOM_WORKERS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"LATHOM_WORKERS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("LATHOM_WORKERS must be positive")
    return n


def pmap(fn, items):
    """Ordered map over items, run on up to ``workers()`` threads."""
    items = list(items)
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# config

def load_toml(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def _parse_scalar(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides (value parsed as a TOML literal, else kept as a string)."""
    out = copy.deepcopy(raw)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) < 2 or not all(parts):
            raise ConfigError(f"override key {key!r} must be section.key")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} does not address a table")
        node[parts[-1]] = _parse_scalar(text.strip())
    return out


@dataclass(frozen=True)
class ScheduleEntry:
    eps_inv: int
    N: int
    n: int

    @property
    def eps(self) -> float:
        return 1.0 / self.eps_inv

    @property
    def delta(self) -> float:
        return self.N / self.eps_inv

    @property
    def r(self) -> float:
        return 2 * self.n / self.eps_inv

    def gamma(self, d: int, p: float) -> float:
        return self.r / self.delta ** (d / (d - p))


def _entries(tbl: dict, where: str) -> list[ScheduleEntry]:
    try:
        e, N, n = tbl["eps_inv"], tbl["N"], tbl["n"]
    except KeyError as exc:
        raise ConfigError(f"{where} needs eps_inv, N and n lists") from exc
    if not (len(e) == len(N) == len(n)):
        raise ConfigError(f"{where}: eps_inv, N and n must have equal lengths")
    out = []
    for a, b, c in zip(e, N, n):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (a, b, c)):
            raise ConfigError(f"{where}: eps_inv, N and n must be integers (commensurability)")
        if a < 2 or b < 2 or c < 1 or not 2 * c < b:
            raise ConfigError(f"{where}: need eps_inv >= 2, N >= 2, n >= 1 and 2n < N (got {a}, {b}, {c})")
        out.append(ScheduleEntry(a, b, c))
    length = tbl.get("len")
    if length is not None:
        if not isinstance(length, int) or length < 1:
            raise ConfigError(f"{where}.len must be a positive integer")
        if length > len(out):
            raise ConfigError(f"{where}.len={length} exceeds the {len(out)} listed entries")
        out = out[:length]
    return out


@dataclass
class StudyConfig:
    density: dict
    d: int
    m: int
    box: list
    forcing: float
    gamma: float
    schedule: list
    regimes: dict
    limit_grid: list
    phi_hs: list
    phi_Rs: list
    phi_value: float | None
    gap_tol: float
    solver: SolveOptions
    out_dir: str
    prefix: str
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> float:
        return float(self.density["p"])

    @property
    def T(self) -> float:
        return float(self.density.get("T", 3.0))

    def build_density(self):
        return density_from_config(self.density, self.d)

    def with_schedule(self, entries) -> "StudyConfig":
        c = copy.copy(self)
        c.schedule = list(entries)
        return c


def solver_options(tbl: dict) -> SolveOptions:
    allowed = {"gtol", "max_iter", "stage_gtol", "method", "linear_rtol", "warm_start", "seed", "kappas"}
    bad = set(tbl) - allowed
    if bad:
        raise ConfigError(f"unknown [solver] keys: {sorted(bad)}")
    try:
        return SolveOptions(**tbl)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [solver] section: {exc}") from exc


def _section(raw, name):
    v = raw.get(name)
    if not isinstance(v, dict):
        raise ConfigError(f"config is missing the [{name}] section")
    return v


def study_config(raw: dict, min_entries: int = 3) -> StudyConfig:
    dens = _section(raw, "density")
    dom = _section(raw, "domain")
    sch = _section(raw, "schedule")
    out = raw.get("output", {})
    solver = solver_options(raw.get("solver", {}))
    try:
        density_from_config(dens, int(dom.get("d", 3)))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [density] section: {exc}") from exc
    d = int(dom.get("d", 3))
    m = int(dom.get("m", 1))
    p = float(dens["p"])
    if not 1 < p < d:
        raise ConfigError("the study needs 1 < p < d")
    box = dom.get("box", [[0.0, 1.0]] * d)
    if len(box) != d or any(len(b) != 2 or not b[1] > b[0] for b in box):
        raise ConfigError("[domain].box must list d intervals [a, b] with a < b")
    entries = _entries(sch, "[schedule]")
    if len(entries) < min_entries:
        raise ConfigError(f"the schedule needs at least {min_entries} entries, got {len(entries)}")
    regimes = {}
    for name in ("zero", "infinite"):
        if name in sch:
            regimes[name] = _entries(sch[name], f"[schedule.{name}]")
    for ent in entries + [e for v in regimes.values() for e in v]:
        for a, (lo, hi) in enumerate(box):
            for x in (lo, hi):
                if abs(x * ent.eps_inv - round(x * ent.eps_inv)) > 1e-9:
                    raise ConfigError("box corners must be lattice points of every schedule entry")
    cfg = StudyConfig(
        density=dict(dens), d=d, m=m, box=[list(map(float, b)) for b in box],
        forcing=float(dom.get("forcing", 1.0)), gamma=float(sch.get("gamma", 1.0)),
        schedule=entries, regimes=regimes,
        limit_grid=[int(k) for k in sch.get("limit_grid", [32, 64, 128])],
        phi_hs=[float(h) for h in sch.get("phi_h", [1 / 8, 1 / 12, 1 / 16])],
        phi_Rs=[float(r) for r in sch.get("phi_R", [4.0, 6.0, 8.0])],
        phi_value=None if sch.get("phi_value") is None else float(sch["phi_value"]),
        gap_tol=float(sch.get("gap_tol", 0.15)), solver=solver,
        out_dir=str(out.get("dir", "out")), prefix=str(out.get("prefix", "study")),
        seed=int(raw.get("solver", {}).get("seed", 0)), raw=raw)
    if len(cfg.limit_grid) < 1:
        raise ConfigError("[schedule].limit_grid needs at least one resolution")
    check_schedule(cfg, entries)
    return cfg


def check_schedule(cfg: StudyConfig, entries, target: float | None = None):
    """Scale separation and scaling-target monotonicity along a schedule (non-strict)."""
    d, p = cfg.d, cfg.p
    target = cfg.gamma if target is None else target
    sep = [e.eps / e.r for e in entries]
    if any(b > a * (1 + 1e-12) for a, b in zip(sep, sep[1:])):
        raise ConfigError("eps/r must not increase along the schedule")
    dist = [abs(e.gamma(d, p) - target) for e in entries]
    if any(b > a + 1e-12 for a, b in zip(dist, dist[1:])):
        raise ConfigError("realized gamma must not move away from the target along the schedule")


# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _cached_unit_phi(key):
    dens_items, d, hs, Rs = key
    cfg = dict(dens_items)
    dens = density_from_config(cfg, d)
    return phi_continuum_oracle([1.0], HomogenizedDensity.from_density(dens), list(hs), list(Rs))


def capacitary_unit_value(cfg: StudyConfig) -> tuple[float, OracleValue | None]:
    """``phi(e)`` for a unit vector e; power densities are invariant under rotations of R^m."""
    if cfg.phi_value is not None:
        return cfg.phi_value, None
    key = (tuple(sorted((k, v) for k, v in cfg.density.items())), cfg.d, tuple(cfg.phi_hs), tuple(cfg.phi_Rs))
    o = _cached_unit_phi(key)
    return o.value, o


def _constraints_for(dom, d, perf_mask=None):
    idx = dom.indices
    lo = np.array(dom.lo)
    hi = lo + np.array(dom.shape) - 1
    face = np.any((idx == lo) | (idx == hi), axis=1)
    sel = face if perf_mask is None else (face | perf_mask)
    return sel


def discrete_minimum(cfg: StudyConfig, entry: ScheduleEntry, perforated: bool = True):
    """Minimize ``F(u) - sum eps^d g u`` with u = 0 on the box faces and (optionally) on the perforation."""
    dens = cfg.build_density()
    eps = entry.eps
    box = [(a, b + eps / 2) for a, b in cfg.box]
    dom = build_domain(box, eps)
    perf = build_perforation(entry.delta, entry.r, dom)
    spec = EnergySpec(dens, dom, perforation=perf)
    pinned = _constraints_for(dom, cfg.d, perf.mask if perforated else None)
    cons = ConstraintSet.from_mask(dom, pinned, np.zeros(cfg.m))
    forcing = np.full((dom.n_sites, cfg.m), cfg.forcing)
    if cfg.forcing == 0.0:
        return {"value": 0.0, "energy": 0.0, "norm": 0.0, "iterations": 0, "check": 0.0, "converged": True}
    spec_run = spec if perforated else EnergySpec(dens, dom)
    res = minimize(spec_run, cons, cfg.solver, forcing=forcing)
    u = res.minimizer
    check = energy_total(spec_run, u).total
    norm = u.lp_norm(cfg.p)
    return {"value": res.value, "energy": res.energy, "norm": norm, "iterations": res.iterations,
            "check": check, "converged": res.converged, "grad_norm": res.grad_norm}


def limit_minimum(cfg: StudyConfig, gamma: float, K: int, phi_unit: float):
    """Limit model ``int f_hom(grad u) + gamma^(d-p) int phi(u) - int g u`` on a vertex grid with K cells per unit."""
    dens = cfg.build_density()
    fhom = HomogenizedDensity.from_density(dens)
    d, m, p = cfg.d, cfg.m, cfg.p
    h = 1.0 / K
    shape = tuple(int(round((b - a) * K)) + 1 for a, b in cfg.box)
    pinned = np.zeros(shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        pinned[tuple(sl)] = True
        sl[ax] = -1
        pinned[tuple(sl)] = True
    pot = None
    if gamma > 0:
        table = [phi_unit, phi_unit] if m == 1 else [phi_unit] * 64
        pot = TabulatedPotential(p, m, table, scale=gamma ** (d - p))
    forcing = np.full(shape + (m,), cfg.forcing)
    obj = GradientObjective(shape, h, fhom, pinned, np.zeros(shape + (m,)), pot, forcing)
    res = minimize_objective(obj, cfg.solver, scale=0.0)
    if not res.converged:
        raise RuntimeError(f"limit model did not converge at K={K}: {res.message}")
    bulk, potv, lin = obj.energy_parts(res.x)
    G = obj.grid(res.x).reshape(-1, m)
    norm = float((h ** d * np.sum(np.linalg.norm(G, axis=1) ** p)) ** (1 / p))
    return {"value": res.value, "bulk": bulk, "potential": potv, "linear": lin, "norm": norm}


def limit_value(cfg: StudyConfig, gamma: float, phi_unit: float):
    """Grid-extrapolated limit-model minimum; returns (value, error, per-grid values)."""
    if cfg.forcing == 0.0:
        return 0.0, 0.0, [(K, 0.0) for K in cfg.limit_grid]
    if math.isinf(gamma):
        return 0.0, 0.0, [(K, 0.0) for K in cfg.limit_grid]
    vals = [limit_minimum(cfg, gamma, K, phi_unit)["value"] for K in cfg.limit_grid]
    per = list(zip(cfg.limit_grid, vals))
    if len(vals) >= 3:
        v0, _, err = richardson([1.0 / K for K in cfg.limit_grid[-3:]], vals[-3:])
    else:
        v0, err = vals[-1], math.nan
    return v0, err, per


@dataclass
class StudyReport:
    regime: str
    rows: list  # dicts per schedule entry
    limit: float
    limit_error: float
    limit_grid: list
    checks: dict
    ok: bool
    phi_unit: float = math.nan

    header = ["entry", "eps", "delta", "r", "N", "n", "gamma_realized", "min_perforated", "min_unperforated",
              "energy_perforated", "limit_min", "gap", "u_norm_Lp", "excess"]

    def csv_rows(self):
        out = []
        for i, r in enumerate(self.rows):
            out.append([i, r["eps"], r["delta"], r["r"], r["N"], r["n"], r["gamma"], r["value"], r["value0"],
                        r["energy"], r["limit"], r["gap"], r["norm"], r["excess"]])
        return out

    def summary(self) -> str:
        head = "PASS" if self.ok else "FAIL"
        lines = [f"{head} {self.regime} regime study",
                 f"  limit-model minimum {self.limit!r} (grid error estimate {self.limit_error:.3e})",
                 f"  capacitary constant phi(e) = {self.phi_unit!r}"]
        for i, r in enumerate(self.rows):
            lines.append(f"  [{i}] eps=1/{r['eps_inv']} N={r['N']} n={r['n']} gamma={r['gamma']:.6g} "
                         f"min={r['value']:.10g} unperforated={r['value0']:.10g} gap={r['gap']:.4%} "
                         f"norm={r['norm']:.6g}")
        for k, v in self.checks.items():
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


def _run_entries(cfg: StudyConfig, entries):
    def job(e):
        a = discrete_minimum(cfg, e, True)
        b = discrete_minimum(cfg, e, False)
        return a, b
    return pmap(job, entries)


def _rows(cfg, entries, results, limit_of):
    rows = []
    for e, (a, b) in zip(entries, results):
        lim = limit_of(e)
        gap = abs(a["value"] - lim) / abs(lim) if lim != 0 else abs(a["value"])
        excess = (a["value"] - b["value"]) / abs(b["value"]) if b["value"] != 0 else 0.0
        rows.append({"eps_inv": e.eps_inv, "eps": e.eps, "delta": e.delta, "r": e.r, "N": e.N, "n": e.n,
                     "gamma": e.gamma(cfg.d, cfg.p), "value": a["value"], "value0": b["value"],
                     "energy": a["energy"], "limit": lim, "gap": gap, "norm": a["norm"], "excess": excess,
                     "check": a["check"], "converged": a["converged"] and b["converged"]})
    return rows


def _common_checks(rows):
    return {
        "perforated >= unperforated": all(r["value"] >= r["value0"] - 1e-12 * abs(r["value0"]) for r in rows),
        "energy re-evaluation": all(abs(r["check"] - r["energy"]) <= 1e-12 * max(1.0, abs(r["energy"]))
                                    for r in rows),
        "solver converged": all(r["converged"] for r in rows),
    }


def gamma_limit_study(cfg: StudyConfig) -> StudyReport:
    """Discrete constrained minima along the schedule against the limit-model minimum at the target gamma."""
    phi_unit, _ = capacitary_unit_value(cfg) if cfg.forcing != 0.0 else (0.0, None)
    lim, lim_err, per = limit_value(cfg, cfg.gamma, phi_unit)
    entries = cfg.schedule
    results = _run_entries(cfg, entries)
    rows = _rows(cfg, entries, results, lambda e: lim)
    gaps = [r["gap"] for r in rows]
    checks = _common_checks(rows)
    if cfg.forcing == 0.0:
        checks["all energies zero"] = all(r["value"] == 0.0 for r in rows) and lim == 0.0
    else:
        tail = gaps[-3:]
        checks["gap strictly decreasing"] = all(b < a for a, b in zip(tail, tail[1:]))
        checks[f"final gap <= {cfg.gap_tol:g}"] = gaps[-1] <= cfg.gap_tol
    ok = all(checks.values())
    return StudyReport("finite", rows, lim, lim_err, per, checks, ok, phi_unit)


def regime_sweep(cfg: StudyConfig, regime: str) -> StudyReport:
    """Run one of the three regimes: zero (gamma -> 0), finite (the base study), infinite (gamma -> inf)."""
    if regime == "finite":
        return gamma_limit_study(cfg)
    if regime not in ("zero", "infinite"):
        raise ConfigError(f"unknown regime {regime!r}")
    entries = cfg.regimes.get(regime)
    if not entries:
        raise ConfigError(f"config has no [schedule.{regime}] table")
    d, p = cfg.d, cfg.p
    gam = [e.gamma(d, p) for e in entries]
    if regime == "zero" and any(b >= a for a, b in zip(gam, gam[1:])):
        raise ConfigError("zero-regime schedule must have decreasing realized gamma")
    if regime == "infinite" and any(b <= a for a, b in zip(gam, gam[1:])):
        raise ConfigError("infinite-regime schedule must have increasing realized gamma")
    sep = [e.eps / e.r for e in entries]
    if any(b > a * (1 + 1e-12) for a, b in zip(sep, sep[1:])):
        raise ConfigError("eps/r must not increase along the schedule")
    results = _run_entries(cfg, entries)
    checks = {}
    if regime == "zero":
        lim, lim_err, per = limit_value(cfg, 0.0, 0.0)
        rows = _rows(cfg, entries, results, lambda e: lim)
        ex = [r["excess"] for r in rows]
        checks["extra term decreasing"] = all(b < a for a, b in zip(ex, ex[1:])) or cfg.forcing == 0.0
        checks["extra term at last entry <= half of first"] = ex[-1] <= 0.5 * ex[0] or cfg.forcing == 0.0
    else:
        lim, lim_err, per = 0.0, 0.0, [(K, 0.0) for K in cfg.limit_grid]
        rows = _rows(cfg, entries, results, lambda e: 0.0)
        norms = [r["norm"] for r in rows]
        checks["minimizer norm decreasing"] = all(b < a for a, b in zip(norms, norms[1:])) or cfg.forcing == 0.0
        checks["last norm < 50% of first"] = norms[-1] < 0.5 * norms[0] or cfg.forcing == 0.0
    checks.update(_common_checks(rows))
    return StudyReport(regime, rows, lim, lim_err, per, checks, all(checks.values()))


def write_study(report: StudyReport, out_dir, name: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    write_rows(csv_path, StudyReport.header, report.csv_rows())
    lim_path = out / f"{name}_limit.csv"
    write_rows(lim_path, ["K", "limit_min"], report.limit_grid)
    txt = out / f"{name}_summary.txt"
    txt.write_text(report.summary() + "\n", encoding="utf-8")
    return [csv_path, lim_path, txt]


# ---------------------------------------------------------------------------
# capacity study

@dataclass
class CapacityStudyConfig:
    density: dict
    d: int
    z: list
    schedule: list  # (eps, R)
    gap_tol: float
    phi_hs: list
    phi_Rs: list
    literature_tol: float
    solver: SolveOptions
    out_dir: str
    prefix: str


def capacity_config(raw: dict, min_entries: int = 3) -> CapacityStudyConfig:
    dens = _section(raw, "density")
    dom = _section(raw, "domain")
    sch = _section(raw, "schedule")
    out = raw.get("output", {})
    d = int(dom.get("d", 3))
    try:
        density_from_config(dens, d)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [density] section: {exc}") from exc
    z = dom.get("z", [1.0])
    if not isinstance(z, list) or not z:
        raise ConfigError("[domain].z must be a nonempty list")
    try:
        eps_inv, Rs = sch["eps_inv"], sch["R"]
    except KeyError as exc:
        raise ConfigError("[schedule] needs eps_inv and R lists") from exc
    if len(eps_inv) != len(Rs):
        raise ConfigError("[schedule]: eps_inv and R must have equal lengths")
    entries = [(1.0 / int(e), float(R)) for e, R in zip(eps_inv, Rs)]
    length = sch.get("len")
    if length is not None:
        if not isinstance(length, int) or not 1 <= length <= len(entries):
            raise ConfigError("[schedule].len out of range")
        entries = entries[:length]
    if len(entries) < min_entries:
        raise ConfigError(f"the schedule needs at least {min_entries} entries, got {len(entries)}")
    if any(b[0] >= a[0] or b[1] <= a[1] for a, b in zip(entries, entries[1:])):
        raise ConfigError("schedule must have eps decreasing and R increasing")
    return CapacityStudyConfig(dict(dens), d, [float(v) for v in z], entries, float(sch.get("gap_tol", 0.05)),
                               [float(h) for h in sch.get("phi_h", [1 / 8, 1 / 12, 1 / 16])],
                               [float(r) for r in sch.get("phi_R", [4.0, 6.0, 8.0])],
                               float(sch.get("literature_tol", 0.03)),
                               solver_options(raw.get("solver", {})),
                               str(out.get("dir", "out")), str(out.get("prefix", "capacity")))


@dataclass
class CapacityStudyReport:
    report: object  # ConvergenceReport
    cube_constant: float | None
    literature_gap: float | None
    ok: bool

    def summary(self) -> str:
        lines = [self.report.summary()]
        if self.cube_constant is not None:
            lines.append(f"  unit-cube capacity from the oracle {self.cube_constant:.8g}, "
                         f"literature {CUBE_CAPACITY:.8g}, relative difference {self.literature_gap:.4%}")
        lines.append("PASS" if self.ok else "FAIL")
        return "\n".join(lines)


def capacity_study(cfg: CapacityStudyConfig, literature_tol: float | None = None) -> CapacityStudyReport:
    dens = density_from_config(cfg.density, cfg.d)
    rep = phi_convergence_study(dens, np.asarray(cfg.z), cfg.schedule, hs=cfg.phi_hs, Rs=cfg.phi_Rs,
                                tolerance=cfg.gap_tol, opts=cfg.solver)
    cube, lit_gap = None, None
    ok = rep.ok
    fhom = HomogenizedDensity.from_density(dens)
    a = fhom.isotropic_quadratic
    if a is not None and cfg.d == 3 and np.any(cfg.z):
        # with f_hom = a |M|^2 the capacitary density is a |z|^2 cap(Q_1)
        cube = rep.oracle.value / (a * float(np.dot(cfg.z, cfg.z)))
        lit_gap = abs(cube - CUBE_CAPACITY) / CUBE_CAPACITY
        ok = ok and lit_gap <= (cfg.literature_tol if literature_tol is None else literature_tol)
    return CapacityStudyReport(rep, cube, lit_gap, ok)


def write_capacity(rep: CapacityStudyReport, out_dir, name: str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    write_rows(csv_path, ["eps", "R", "phi_discrete", "phi_oracle", "gap"], rep.report.rows)
    oracle_path = out / f"{name}_oracle.csv"
    write_rows(oracle_path, ["R", "h", "raw"], rep.report.oracle.table)
    txt = out / f"{name}_summary.txt"
    txt.write_text(rep.summary() + "\n", encoding="utf-8")
    return [csv_path, oracle_path, txt]
