"""Command-line entry point.

Exit status: 0 when every check passes, 2 when a check fails, 1 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import inequalities as ineq
from .densities import density_from_config, validate_assumptions
from .energy import EnergySpec, energy_breakdown_rows, energy_total
from .homogenization import f_hom_estimate
from .io import write_lattice_csv, write_lhf1, write_rows
from .lattice import LatticeFunction, build_domain, build_perforation
from .studies import (ConfigError, _section, apply_overrides, capacity_config, capacity_study, gamma_limit_study,
                      load_toml, regime_sweep, solver_options, study_config, write_capacity, write_study)

COMMANDS = ("energy", "cell-problem", "capacity", "gamma-study", "regime-sweep", "check-inequalities",
            "validate-density")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lathom", description="Lattice energies on perforated domains: experiments and checks.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML experiment config")
        sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config entry (repeatable)")
        sp.add_argument("--out", default=None, help="output directory (overrides [output].dir)")
        if name == "regime-sweep":
            sp.add_argument("--regime", choices=["zero", "finite", "infinite", "all"], default="all")
    return ap


def _out(raw, args, default):
    out = raw.get("output", {})
    return Path(args.out or out.get("dir", "out")), str(out.get("prefix", default))


def cmd_energy(raw, args) -> bool:
    dens_cfg = _section(raw, "density")
    dom = _section(raw, "domain")
    d = int(dom.get("d", 2))
    m = int(dom.get("m", 1))
    dens = density_from_config(dens_cfg, d)
    box = dom.get("box", [[0.0, 1.0]] * d)
    eps = float(dom["eps"]) if "eps" in dom else 1.0 / int(dom.get("eps_inv", 8))
    domain = build_domain(box, eps)
    fn = raw.get("function", {})
    kind = fn.get("kind", "random")
    if kind == "random":
        rng = np.random.default_rng(int(fn.get("seed", 0)))
        vals = rng.standard_normal((domain.n_sites, m))
    elif kind == "affine":
        M = np.atleast_2d(np.asarray(fn.get("M", [[1.0] + [0.0] * (d - 1)]), dtype=float))
        vals = domain.coords @ M.T
    else:
        raise ConfigError(f"unknown [function].kind {kind!r}")
    perf = None
    if "delta" in dom:
        perf = build_perforation(float(dom["delta"]), float(dom["r"]), domain)
        vals[perf.mask] = 0.0
    u = LatticeFunction(domain, vals)
    spec = EnergySpec(dens, domain, perforation=perf)
    ev = energy_total(spec, u)
    out_dir, prefix = _out(raw, args, "energy")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows(out_dir / f"{prefix}_breakdown.csv", ["xi", "partial_energy"], energy_breakdown_rows(ev))
    write_lhf1(out_dir / f"{prefix}_u.lhf1", u)
    write_lattice_csv(out_dir / f"{prefix}_u.csv", u)
    ok = ev.violated or abs(ev.total - math.fsum(ev.breakdown.values())) <= 1e-12 * max(1.0, abs(ev.total))
    text = (f"{'PASS' if ok else 'FAIL'} energy: total {ev.total!r} over {domain.n_sites} sites, "
            f"{len(ev.breakdown)} offsets, violation flag {ev.violated}")
    (out_dir / f"{prefix}_summary.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return ok


def _random_matrices(count, m, d, seed):
    rng = np.random.default_rng(seed)
    return [rng.standard_normal((m, d)) for _ in range(count)]


def cmd_cell(raw, args) -> bool:
    dom = _section(raw, "domain")
    sch = _section(raw, "schedule")
    d = int(dom.get("d", 2))
    m = int(dom.get("m", 1))
    dens = density_from_config(_section(raw, "density"), d)
    hs = [int(h) for h in sch.get("h", [8, 16, 32])]
    if "M" in sch:
        Ms = [np.atleast_2d(np.asarray(M, dtype=float)) for M in sch["M"]]
    else:
        Ms = _random_matrices(int(sch.get("samples", 10)), m, d, int(sch.get("seed", 0)))
    tol = float(sch.get("tol", 1e-3))
    opts = solver_options(raw.get("solver", {}))
    rows, lines, ok = [], [], True
    for i, M in enumerate(Ms):
        est = f_hom_estimate(dens, M, hs, opts)
        gap = est.relative_gap
        good = gap is None or gap <= tol
        ok &= good
        for r in est.csv_rows():
            rows.append((i,) + tuple(r))
        lines.append(f"  M[{i}] extrapolated {est.value:.10g} oracle {est.oracle!r} gap {gap!r} "
                     f"order {est.order:.3g} error bar {est.error:.3e}")
    out_dir, prefix = _out(raw, args, "cell")
    write_rows(out_dir / f"{prefix}.csv", ["sample", "h", "raw_value", "extrapolated", "oracle", "relative_gap"], rows)
    text = "\n".join([f"{'PASS' if ok else 'FAIL'} cell problems (tolerance {tol:g})"] + lines)
    (out_dir / f"{prefix}_summary.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return ok


def cmd_capacity(raw, args) -> bool:
    cfg = capacity_config(raw)
    rep = capacity_study(cfg)
    out_dir, prefix = _out(raw, args, "capacity")
    write_capacity(rep, out_dir, prefix)
    print(rep.summary())
    return rep.ok


def cmd_gamma(raw, args) -> bool:
    cfg = study_config(raw)
    rep = gamma_limit_study(cfg)
    out_dir, prefix = _out(raw, args, "gamma")
    write_study(rep, out_dir, prefix)
    print(rep.summary())
    return rep.ok


def cmd_regimes(raw, args) -> bool:
    cfg = study_config(raw)
    regimes = ["zero", "finite", "infinite"] if args.regime == "all" else [args.regime]
    for name in regimes:
        if name != "finite" and name not in cfg.regimes:
            raise ConfigError(f"config has no [schedule.{name}] table")
    out_dir, prefix = _out(raw, args, "regime")
    ok = True
    for name in regimes:
        rep = regime_sweep(cfg, name)
        write_study(rep, out_dir, f"{prefix}_{name}")
        print(rep.summary())
        ok &= rep.ok
    return ok


def cmd_inequalities(raw, args) -> bool:
    dom = _section(raw, "domain")
    d = int(dom.get("d", 2))
    p = float(_section(raw, "density")["p"])
    out_dir, prefix = _out(raw, args, "ineq")
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["sample_id", "lhs", "rhs", "ratio"]
    reports = []
    if "gns" in raw:
        g = raw["gns"]
        eps = [1.0 / int(k) for k in g.get("eps_inv", [8, 16, 32])]
        seed = int(g.get("seed", 0))
        reports.append(ineq.gns_check(eps, lambda dm: ineq.default_gns_family(dm, seed), p, d,
                                      drift_tol=float(g.get("drift_tol", 0.25))))
    if "poincare" in raw:
        q = raw["poincare"]
        box = q.get("box", [[0.0, 1.0]] * d)
        eps = [1.0 / int(k) for k in q.get("eps_inv", [16, 32, 64])]
        Ms = q.get("M", [[1.0] + [0.0] * (d - 1)])
        def sampler(dm):
            return (ineq.affine_family(dm, Ms) + ineq.random_field_family(dm, seed=int(q.get("seed", 0)))
                    + ineq.smooth_bump_family(dm))
        reports.append(ineq.poincare_check(eps, box, sampler, p, subset=q.get("subset"),
                                           drift_tol=float(q.get("drift_tol", 0.25))))
        if "deltas" in q:
            reports.append(ineq.poincare_rescaled_check([float(x) for x in q["deltas"]],
                                                        1.0 / int(q.get("rescaled_eps_inv", 128)), p, d,
                                                        tol=float(q.get("exponent_tol", 0.2))))
    if "long_range" in raw:
        q = raw["long_range"]
        box = q.get("box", [[0.0, 1.0]] * d)
        eps = [1.0 / int(k) for k in q.get("eps_inv", [64, 128])]
        xis = [tuple(int(s) for s in xi) for xi in q.get("xi", [[2, 1] + [0] * (d - 2)])]
        seed = int(q.get("seed", 0))
        def sampler(dm):
            M = [[1.0] + [0.5] * (d - 1)]
            return ineq.random_field_family(dm, seed=seed) + ineq.affine_family(dm, M)
        reports.append(ineq.long_range_check(eps, box, xis, sampler, p,
                                             drift_tol=float(q.get("drift_tol", 0.25))))
    if not reports:
        raise ConfigError("config selects no inequality ([gns], [poincare] or [long_range])")
    ok = True
    texts = []
    for rep in reports:
        write_rows(out_dir / f"{prefix}_{rep.name}.csv", header, rep.csv_rows())
        texts.append(rep.summary())
        ok &= rep.ok
    text = "\n".join(texts)
    (out_dir / f"{prefix}_summary.txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return ok


def cmd_validate(raw, args) -> bool:
    dom = raw.get("domain", {})
    d = int(dom.get("d", 2))
    dens = density_from_config(_section(raw, "density"), d)
    v = raw.get("validation", {})
    rep = validate_assumptions(dens, int(v.get("budget", 2000)), int(v.get("seed", 0)), int(v.get("m", 2)))
    out_dir, prefix = _out(raw, args, "density")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{prefix}_validation.txt").write_text(rep.summary() + "\n", encoding="utf-8")
    print(rep.summary())
    return rep.ok


HANDLERS = {"energy": cmd_energy, "cell-problem": cmd_cell, "capacity": cmd_capacity, "gamma-study": cmd_gamma,
            "regime-sweep": cmd_regimes, "check-inequalities": cmd_inequalities, "validate-density": cmd_validate}


def run_cli(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        raw = apply_overrides(load_toml(args.config), args.override)
        ok = HANDLERS[args.command](raw, args)
    except (UsageError, ConfigError, FileNotFoundError, KeyError, TypeError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"lathom: error: {msg}", file=sys.stderr)
        return 1
    return 0 if ok else 2


def main() -> None:
    sys.exit(run_cli())
