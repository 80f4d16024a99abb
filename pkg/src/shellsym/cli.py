"""Command-line entry point.

Each subcommand writes ``<name>.json`` (schema-versioned envelope with the
config echo and seed) plus CSV tables into the output directory.  Exit codes:
0 when every property check passes, 2 when a check fails, 1 on errors.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import io, lemmas
from .config import RunConfig, parse_config
from .errors import ShellSymError
from .grid import dump_grid
from .minimizer import minimize, sweep_and_fit
from .reduction import MC_SEED, map_special_points, reference_bumps, verify_reduction_identity
from .symmetry import Family, GroupSpec, orbit_info, orbit_length_numeric, random_class_points

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
ORBIT_TOL = 5e-3
MASS_TOL, ENERGY_TOL = 0.02, 0.03
OR_TOL = 1e-3
SLOPE_TOL = 0.1
LEMMAS = ("or", "hump", "cutoff", "symmetrize", "detect", "vector", "order")


class Outcome:
    """Result payload, pass/fail flag, CSV tables and extra artifacts of one command."""

    def __init__(self, result: dict, passed: bool, tables: dict | None = None, writers: list | None = None):
        self.result = result
        self.passed = passed
        self.tables = tables or {}
        self.writers = writers or []


# ---------------------------------------------------------------- commands


def cmd_orbits(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    spec = cfg.group_spec()
    if args.point:
        x = np.array([float(t) for t in args.point.split(",")])
        info = orbit_info(spec, x)
        res: dict[str, Any] = {"point": x, "class": str(info.cls), "dimension": info.dim, "length": info.length}
        if info.dim == 1:
            oracle = orbit_length_numeric(spec, x)
            res["oracle_length"] = oracle
            res["rel_error"] = abs(info.length - oracle) / oracle
            return Outcome(res, res["rel_error"] <= ORBIT_TOL)
        return Outcome(res, True)
    per_class = cfg["random"]
    pts = random_class_points(spec, per_class, cfg["seed"])
    rows = []
    worst = 0.0
    for key, X in pts.items():
        errs = []
        for x in X:
            f = orbit_info(spec, x).length
            errs.append(abs(f - orbit_length_numeric(spec, x)) / f)
        e = max(errs)
        worst = max(worst, e)
        rows.append([key, len(X), orbit_info(spec, X[0]).components, e])
    res = {"group": spec.as_dict(), "per_class": per_class, "classes": len(rows), "max_rel_error": worst, "tolerance": ORBIT_TOL}
    return Outcome(res, worst <= ORBIT_TOL, {"orbits": (["class", "points", "components", "max_rel_error"], rows)})


def cmd_reduce_check(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    seed = cfg["seed"] if "seed" in cfg.origin else MC_SEED
    R = cfg["R"]
    rows = []
    worst_m = worst_e = 0.0
    for i, bump in enumerate(reference_bumps(R)):
        rep = verify_reduction_identity(bump, R, cfg["p_list"], cfg["q_list"], cfg["samples"], seed)
        for q in rep.lhsQ:
            e = rep.relErrors[f"mass_q={q:g}"]
            worst_m = max(worst_m, e)
            rows.append([i, "mass", q, rep.lhsQ[q], rep.rhsQ[q], rep.errQ[q], e])
        for p in rep.lhsP:
            e = rep.relErrors[f"energy_p={p:g}"]
            worst_e = max(worst_e, e)
            rows.append([i, "energy", p, rep.lhsP[p], rep.rhsP[p], rep.errP[p], e])
    res = {
        "R": R,
        "mc_seed": seed,
        "bumps": [{"center": b.center, "radius": b.radius} for b in reference_bumps(R)],
        "max_mass_rel_error": worst_m,
        "max_energy_rel_error": worst_e,
        "tolerances": {"mass": MASS_TOL, "energy": ENERGY_TOL},
    }
    header = ["bump", "quantity", "exponent", "monte_carlo", "chart", "mc_stderr", "rel_error"]
    return Outcome(res, worst_m <= MASS_TOL and worst_e <= ENERGY_TOL, {"reduce-check": (header, rows)})


def cmd_minimize(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    mc = cfg.minimize_config()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u, rep = minimize(mc)
    trace = np.asarray(rep.J_trace)
    checks = {
        "converged": rep.converged,
        "J_nonincreasing": bool(np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))),
        "el_residual_below_1e-3": rep.el_residual <= 1e-3,
        "tube_mass_fraction_at_least_0.9": rep.concentration.tube_mass_fraction >= 0.9,
        "constraint_inactive": not rep.constraint_active,
    }
    res = {"config": mc.as_dict(), "report": rep.as_dict(), "checks": checks}
    binary = cfg["binary_dump"]
    name = "minimize-field.bin" if binary else "minimize-field.csv"
    tables = {"minimize-trace": (["iteration", "J"], [[i, float(J)] for i, J in enumerate(trace)])}
    return Outcome(res, all(checks.values()), tables, [(name, lambda path: dump_grid(u, path, binary=binary))])


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    result = sweep_and_fit(cfg.minimize_config(), cfg["R_list"])
    header = ["R", "J", "lambda", "el_residual", "tube_mass_fraction", "friedrichs_ratio", "iterations", "status"]
    rows = [[r.R, r.J, r.lam, r.el_residual, r.tube_mass_fraction, r.friedrichs_ratio, r.iterations, r.status] for r in result.rows]
    fr = [r.friedrichs_ratio for r in result.rows if math.isfinite(r.friedrichs_ratio)]
    res = result.as_dict()
    res["friedrichs_spread"] = max(fr) / min(fr) if fr else math.nan
    res["slope_tolerance"] = SLOPE_TOL
    ok = all(r.status == "ok" for r in result.rows) and abs(result.slope - result.expected_slope) <= SLOPE_TOL
    return Outcome(res, ok, {"sweep": (header, rows)})


# ---------------------------------------------------------------- lemmas


def lemma_or(cfg: RunConfig, count: int) -> Outcome:
    rows = []
    worst = 0.0
    strict = True
    for i, prob in enumerate(lemmas.random_or_problems(count, cfg["seed"])):
        corner = lemmas.or_min_corner(prob)
        brute = lemmas.or_bruteforce(prob, cfg["grid_n"])
        dev = abs(corner.minimum - brute.value)
        worst = max(worst, dev)
        strict &= corner.exceeds_lower
        rows.append([i, prob.A, prob.B, prob.C, prob.r, prob.d, corner.minimum, brute.value, dev, corner.lower, corner.exceeds_lower])
    header = ["instance", "A", "B", "C", "r", "delta", "corner_min", "brute_min", "deviation", "lower_bound", "strict"]
    res = {"instances": count, "grid_n": cfg["grid_n"], "max_deviation": worst, "tolerance": OR_TOL, "all_strict": strict}
    return Outcome(res, worst <= OR_TOL and strict, {"lemmas-or": (header, rows)})


def lemma_hump(cfg: RunConfig, count: int) -> Outcome:
    grid = lemmas.hump_grid()
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    ok = True
    for i in range(count):
        t = lemmas.random_hump_triple(grid, rng)
        r = lemmas.hump_destruct(t)
        good = r.mass_error <= 1e-12 and r.strict_decrease and r.concave and r.bound_holds
        ok &= good
        rows.append([i, t.p, t.q, r.t0, r.mass_error, r.energy_drop, r.concave, r.bound_lhs, r.bound_rhs, good])
    header = ["triple", "p", "q", "t0", "mass_error", "energy_drop", "concave", "bound_lhs", "bound_rhs", "pass"]
    res = {"triples": count, "failures": sum(1 for r in rows if not r[-1])}
    return Outcome(res, ok, {"lemmas-hump": (header, rows)})


def lemma_cutoff(cfg: RunConfig, count: int) -> Outcome:
    from .grid import build_grid

    grid = build_grid(cfg["R"], cfg["k"], cfg["h"])
    spec = GroupSpec.gk4(cfg["k"])
    sigma, bands = lemmas.cutoff_build(grid, spec, map_special_points(cfg["R"]).M, 1.0, 4.0)
    gmax = float(lemmas.metric_gradient_norms(sigma).max())
    bound = bands.slope_bound + 4 * cfg["h"]
    res = {"bands": bands, "max_gradient": gmax, "gradient_bound": bound, "min": float(sigma.values.min()), "max": float(sigma.values.max())}
    ok = gmax <= bound and res["min"] >= 0.0 and res["max"] <= 1.0
    return Outcome(res, ok)


def lemma_symmetrize(cfg: RunConfig, count: int) -> Outcome:
    rng = np.random.default_rng(cfg["seed"])
    p, q = cfg["p"], cfg["q"]
    rows = []
    for i in range(count):
        v = lemmas.random_smooth_patch(rng)
        s = lemmas.symmetrize(v)
        m0, m1 = lemmas.patch_mass(v, q), lemmas.patch_mass(s, q)
        e0, e1 = lemmas.patch_energy(v, p), lemmas.patch_energy(s, p)
        rows.append([i, abs(m1 - m0) / m0, e1 / e0])
    worst_m = max(r[1] for r in rows)
    worst_e = max(r[2] for r in rows)
    res = {"inputs": count, "max_mass_rel_error": worst_m, "max_energy_ratio": worst_e}
    return Outcome(res, worst_m <= 1e-10 and worst_e <= 1.01, {"lemmas-symmetrize": (["input", "mass_rel_error", "energy_ratio"], rows)})


def lemma_detect(cfg: RunConfig, count: int) -> Outcome:
    spec = GroupSpec.gk4(cfg["k"])
    expected = {"concentrating": ["concentration"], "vanishing": ["vanishing"], "split": ["concentration", "concentration"]}
    out = {}
    ok = True
    for kind in lemmas.DETECTOR_FAMILIES:
        seq, tracks = lemmas.synthetic_family(kind, cfg["R_list"], cfg["k"], cfg["q"])
        verdicts = lemmas.concentration_detect(seq, tracks, spec)
        out[kind] = verdicts
        ok &= [v.kind for v in verdicts] == expected[kind]
    return Outcome({"families": out}, ok)


def lemma_vector(cfg: RunConfig, count: int) -> Outcome:
    rows = [[s, lemmas.vector_ineq_constant(s), lemmas.vector_ineq_check(s, cfg["samples"], seed=cfg["seed"])] for s in cfg["p_list"]]
    worst = max(r[2] for r in rows)
    return Outcome({"max_violation": worst, "trials": cfg["samples"]}, worst <= 0.0, {"lemmas-vector": (["s", "constant", "max_violation"], rows)})


def lemma_order(cfg: RunConfig, count: int) -> Outcome:
    spec = cfg.group_spec()
    if spec.family is not Family.GK_TILDE:
        raise ShellSymError("the ordering check needs family = gk_tilde")
    rep = lemmas.orbit_order_check(spec, cfg["kappa"], cfg["l0"], cfg["samples"], cfg["seed"])
    return Outcome({"group": spec.as_dict(), "report": rep}, rep.ok and rep.numeric_max_rel_error <= ORBIT_TOL)


LEMMA_RUNNERS: dict[str, Callable[[RunConfig, int], Outcome]] = {
    "or": lemma_or,
    "hump": lemma_hump,
    "cutoff": lemma_cutoff,
    "symmetrize": lemma_symmetrize,
    "detect": lemma_detect,
    "vector": lemma_vector,
    "order": lemma_order,
}


def cmd_lemmas(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    count = args.random if args.random is not None else cfg["random"]
    if count < 1:
        raise ShellSymError("--random must be positive")
    out = LEMMA_RUNNERS[args.name](cfg, count)
    out.result = {"lemma": args.name, "count": count, **out.result}
    return out


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> Outcome:
    paths = [Path(p) for p in args.paths] or sorted(p for p in Path(cfg["out"]).glob("*.json") if p.name != "report.json")
    if not paths:
        raise ShellSymError(f"no reports found in {cfg['out']}")
    rows = []
    for p in paths:
        doc = io.read_report(p)
        if doc.get("schema_version") != io.SCHEMA_VERSION:
            raise ShellSymError(f"{p}: unsupported schema version {doc.get('schema_version')!r}")
        rows.append([str(p), doc["command"], doc["status"], doc["seed"]])
    ok = all(r[2] == "pass" for r in rows)
    return Outcome({"reports": len(rows)}, ok, {"report": (["path", "command", "status", "seed"], rows)})


COMMANDS: dict[str, Callable[[RunConfig, argparse.Namespace], Outcome]] = {
    "orbits": cmd_orbits,
    "reduce-check": cmd_reduce_check,
    "minimize": cmd_minimize,
    "sweep": cmd_sweep,
    "lemmas": cmd_lemmas,
    "report": cmd_report,
}


# ---------------------------------------------------------------- driver


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors are errors, not property failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one configuration key")
    parser = _Parser(prog="shellsym", description="Symmetric p-Laplacian ground states on spherical shells.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    orb = sub.add_parser("orbits", parents=[common], help="orbit classes and lengths against the generator search")
    orb.add_argument("--point", help="comma-separated coordinates of a single point")
    sub.add_parser("reduce-check", parents=[common], help="Monte-Carlo check of the reduction identities")
    sub.add_parser("minimize", parents=[common], help="constrained Rayleigh-quotient descent")
    sub.add_parser("sweep", parents=[common], help="minimize over R_list and fit the scaling slope")
    lem = sub.add_parser("lemmas", parents=[common], help="randomized lemma checks")
    lem.add_argument("name", choices=LEMMAS)
    lem.add_argument("--random", type=int, help="number of random instances")
    rep = sub.add_parser("report", parents=[common], help="summarize JSON reports")
    rep.add_argument("paths", nargs="*", help="report files (default: every *.json in the output directory)")
    return parser


def artifact_stem(args: argparse.Namespace) -> str:
    return f"lemmas-{args.name}" if args.command == "lemmas" else args.command


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set)
        if args.out:
            overrides.append(f"out={args.out}")
        cfg = parse_config(args.config, overrides, args.seed)
        outcome = COMMANDS[args.command](cfg, args)
        status = "pass" if outcome.passed else "fail"
        out = Path(cfg["out"])
        stem = artifact_stem(args)
        doc = io.envelope(stem, cfg.echo(), cfg["seed"], outcome.result, status)
        io.write_report(doc, out / f"{stem}.json")
        for name, (header, rows) in outcome.tables.items():
            io.write_csv(out / f"{name}.csv", header, rows)
        for name, writer in outcome.writers:
            writer(out / name)
        if cfg["verbosity"] > 0:
            print(f"{stem}: {status.upper()} ({out / (stem + '.json')})")
    except (ShellSymError, OSError) as exc:
        print(f"shellsym: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK if outcome.passed else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
