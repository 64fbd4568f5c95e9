"""Command-line front end: ``analyze``, ``field`` and ``sweep``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AtSingularity, BarrierExit, DomainError, NoNodeCapture, RilabError
from .flowfield import FlowField, asymptotics_report, conserved_integrals, verify_isentropy
from .hugoniot import hugoniot_locus, intersection_test, sigma_h
from .integrator import (
    assemble_gamma,
    barrier_check,
    recover_x,
    reduced_residual,
    stagnation_points,
    tail_exponents,
    trace_sigma,
    trace_sigma_prime,
)
from .io import dump_json, fmt, jsonable, write_csv
from .params import GasParams, is_relevant, lambda_thresholds
from .phaseplane import classified_points, lazarus_W, slope_ordering

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_INTERNAL, EXIT_REGIME = 0, 1, 2
FIELD_HEADER = ["t", "r", "rho", "u", "c", "p", "e", "S_proxy"]
SWEEP_HEADER = ["n", "gamma", "lambda", "lambda_circ", "relevant", "propA", "propB", "propC", "verdict"]


class Report:
    """Accumulates sections and pass/fail checks of one analysis."""

    def __init__(self, params_echo):
        self.data = {"schema_version": SCHEMA_VERSION, "rilab_version": __version__, "params": params_echo, "checks": []}

    def check(self, name, value, target, tol, passed):
        self.data["checks"].append({"name": name, "value": value, "target": target, "tol": tol, "pass": bool(passed)})
        return passed

    def rel(self, name, value, target, tol):
        ok = abs(value - target) <= tol * abs(target)
        return self.check(name, value, target, tol, ok)

    def __setitem__(self, k, v):
        self.data[k] = v

    @property
    def all_pass(self):
        return all(c["pass"] for c in self.data["checks"])


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("RIL_OUT_DIR") or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cp_summary(cp):
    loc = None
    if cp.location is not None:
        loc = {"V": cp.location.V, "C": "inf" if cp.at_infinity else cp.location.C}
        if cp.at_infinity:
            loc["C"] = "+inf" if cp.label == "P+inf" else "-inf"
    return {"label": cp.label, "kind": cp.kind, "location": loc, "chart": cp.at_infinity,
            "W": cp.W, "R2": cp.R2, "L1": cp.L1, "L2": cp.L2, "E1": cp.E1, "E2": cp.E2}


def run_analysis(n, gamma, lam, ell=None, x9=1.0, tol_scale=1.0, out: Path | None = None, seed=0):
    """Run the full single-point pipeline; returns ``(exit_code, report_dict)``."""
    params = GasParams.isentropic(n, gamma, lam)
    rep = Report({"n": n, "gamma": gamma, "lambda": lam, "kappa": params.kappa, "ell": ell, "x9": x9})
    t = lambda v: v * tol_scale

    thr = lambda_thresholds(n, gamma, lam)
    rep["thresholds"] = thr
    rep["relevant"] = bool(thr.relevant)
    if not thr.relevant:
        rep["status"] = {"code": EXIT_REGIME, "cause": "parameters not relevant", "stage": "params"}
        return EXIT_REGIME, rep.data

    pts = classified_points(params)
    rep["critical_points"] = [_cp_summary(cp) for cp in pts.values()]
    if pts["P5"].kind != "saddle":
        # V_4 <= V_-: lambda is not close enough to 1 for the construction
        rep.check("P5_kind", pts["P5"].kind, "saddle", None, False)
        rep["status"] = {"code": EXIT_REGIME, "cause": "P5 is not a saddle", "stage": "phaseplane"}
        return EXIT_REGIME, rep.data
    for lab, kind in (("P8", "node"), ("P9", "node"), ("P4", "saddle"), ("P5", "saddle")):
        rep.check(f"{lab}_kind", pts[lab].kind, kind, None, pts[lab].kind == kind)
    p9 = pts["P9"]
    rep.rel("W9_product_form", p9.W, lazarus_W(params, "P9"), t(1e-10))
    rep.rel("W5_product_form", pts["P5"].W, lazarus_W(params, "P5"), t(1e-10))
    so = slope_ordering(params)
    rep["slope_ordering"] = so
    rep.check("slope_ordering", list(so.as_tuple()), "increasing", None, so.holds)

    bar = barrier_check(params)
    rep["barrier"] = bar
    for name in ("propA", "propB", "propC"):
        rep.check(name, getattr(bar, name), True, None, getattr(bar, name))
    if not bar.all_hold:
        rep["status"] = {"code": EXIT_REGIME, "cause": "barrier properties fail", "stage": "barrier"}
        return EXIT_REGIME, rep.data

    try:
        sigma = recover_x(trace_sigma(params), (np.inf, x9))
        sp = recover_x(trace_sigma_prime(params), (-np.inf, x9))
        gam = assemble_gamma(params, ell, x9=x9, sigma_prime=sp)
    except (BarrierExit, NoNodeCapture) as exc:
        rep["status"] = {"code": EXIT_REGIME, "cause": f"{type(exc).__name__}: {exc}", "stage": "trajectory"}
        return EXIT_REGIME, rep.data

    V5, V9 = pts["P5"].location.V, p9.location.V
    cv = sigma.meta["crossing_V"]
    rep.check("crossing_V_inside", cv, [V5, V9], None, cv is not None and V5 < cv < V9)
    rep.rel("approach_slope_L1", sigma.meta["approach_slope"], p9.L1, t(1e-2))
    pw, pc = tail_exponents(sp, params)
    rep.rel("tail_exponent_w", pw, -2.0 / lam, t(5e-2))
    rep.rel("tail_exponent_C", pc, 1.0 / lam, t(5e-2))
    res = float(max(reduced_residual(sigma).max(), reduced_residual(sp).max()))
    rep.check("reduced_residual", res, 0.0, t(1e-8), res <= t(1e-8))
    stag = stagnation_points(gam)
    rep["trajectory"] = {
        "sigma": {"samples": len(sigma), "crossing_V": cv, "approach_slope": sigma.meta["approach_slope"]},
        "sigma_prime": {"samples": len(sp), "tail_exponents": [pw, pc], "stages": sp.meta["stages"]},
        "gamma": {"samples": len(gam), "ell": ell, "stagnation_x": stag},
    }

    field = FlowField(gam, params)
    prof = field.profile
    rep["collapse_profile"] = {"nu": prof.nu, "omega": prof.omega, "ell": prof.ell, "vertical": prof.vertical,
                               "u_coefficient": prof.u_coefficient(lam), "c_coefficient": prof.c_coefficient(lam)}
    rep.check("omega_negative", prof.omega, "<0", None, prof.omega < 0.0)
    rng = np.random.default_rng(seed)
    tt = rng.uniform(-2.0, 2.0, 10_000)
    rr = 10.0 ** rng.uniform(-4.0, 1.0, 10_000)
    dev = verify_isentropy(field, tt, rr)
    rep.check("isentropy", dev, 0.0, t(1e-7), dev <= t(1e-7))
    ints = {}
    for tv in (0.0, 1.0, -1.0):
        I = conserved_integrals(field, tv, 1.0)
        ints[fmt(tv)] = I
        ok = all(math.isfinite(v) for v in (I.mass, I.momentum, I.energy))
        rep.check(f"integrals_t{tv:+g}", I.refinement_error, 0.0, t(1e-6), ok and I.refinement_error <= t(1e-6))
    rep["integrals"] = ints
    asym = asymptotics_report(field)
    rep["asymptotics"] = asym
    for key in ("rho_exponent", "c_exponent", "u_exponent"):
        if key in asym:
            rep.rel(key, asym[key]["value"], asym[key]["target"], t(2e-2))

    locus = hugoniot_locus(sigma, params)
    target = sigma_h(p9.L1, gamma)
    rep.rel("locus_slope_sigma_h", locus.meta["slope_near_endpoint"], target, t(2e-2))
    end_gap = float(np.hypot(locus.V_behind[-1] - V9, locus.C_behind[-1] - p9.location.C))
    rep.check("locus_endpoint", end_gap, 0.0, t(1e-5), end_gap <= t(1e-5))
    rep.check("jump_residual", locus.max_residual, 0.0, t(1e-10), locus.max_residual <= t(1e-10))
    verdict = intersection_test(locus, sp)
    rep["hugoniot"] = {"verdict": verdict, "slope_near_endpoint": locus.meta["slope_near_endpoint"],
                       "sigma_h_L1": target, "samples": len(locus),
                       "note": "numeric evidence at this parameter point, not a proof"}
    rep.check("hugoniot_verdict", verdict.kind, "NoIntersection", None, verdict.kind == "NoIntersection")

    if out is not None:
        gam.to_csv(out / "trajectory.csv")
        locus.to_csv(out / "locus.csv")
        dump_json(out / "asymptotics.json", asym)
    code = EXIT_OK if rep.all_pass else EXIT_INTERNAL
    rep["status"] = {"code": code, "cause": None if code == 0 else "checks failed", "stage": "done"}
    return code, rep.data


# argument handling ---------------------------------------------------------

def _load_config(path):
    if not path:
        return {}
    import yaml

    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "lambda" in cfg:
        cfg["lam"] = cfg.pop("lambda")
    return cfg


def _add_point_flags(p, required=True):
    p.add_argument("--n", type=int, choices=(2, 3), required=required)
    p.add_argument("--gamma", type=float, required=required)
    p.add_argument("--lambda", dest="lam", type=float, required=required)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ell", type=float, help="finite slope of the trajectory at P1")
    g.add_argument("--vertical", action="store_true", help="vertical trajectory (default)")
    p.add_argument("--x9", type=float, default=1.0, help="x-value assigned to P9")


def _add_common(p):
    p.add_argument("--out", help="output directory (default: $RIL_OUT_DIR or .)")
    p.add_argument("--tol", type=float, default=1.0, help="scale factor for all check tolerances")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", help="YAML file with default flag values")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rilab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    a = sub.add_parser("analyze", help="full single-point analysis")
    _add_point_flags(a)
    _add_common(a)

    f = sub.add_parser("field", help="evaluate physical fields on a (t, r) grid")
    _add_point_flags(f, required=False)
    _add_common(f)
    f.add_argument("--report", help="analysis report providing n, gamma, lambda, ell, x9")
    f.add_argument("--t", dest="times", type=float, nargs="*", default=[0.0, 1.0, -1.0])
    f.add_argument("--rmin", type=float, default=1e-6)
    f.add_argument("--rmax", type=float, default=10.0)
    f.add_argument("--samples", type=int, default=200)

    s = sub.add_parser("sweep", help="relevance and barrier flags over a parameter grid")
    s.add_argument("--n", type=int, choices=(2, 3), required=True)
    s.add_argument("--gamma", dest="gammas", type=float, nargs="+", required=True)
    s.add_argument("--lambda-count", type=int, default=10,
                   help="lambda values 1 + (lambda_circ - 1) k / (N + 1), k = 1..N")
    s.add_argument("--lambdas", type=float, nargs="*", help="explicit lambda values")
    s.add_argument("--trace", action="store_true", help="also trace and run the Hugoniot test")
    _add_common(s)
    return ap


def parse_args(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    cfg = _load_config(getattr(args, "config", None))
    if cfg:
        # flags given on the command line win over the config file
        sub = ap._subparsers._group_actions[0].choices[args.cmd]
        sub.set_defaults(**cfg)
        args = ap.parse_args(argv)
    return args


def _emit_error(code, exc, out: Path | None):
    payload = {"schema_version": SCHEMA_VERSION, "status": {"code": code, "cause": f"{type(exc).__name__}: {exc}"}}
    print(json.dumps(payload), file=sys.stderr)
    if out is not None:
        dump_json(out / "report.json", payload)
    return code


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    try:
        code, data = run_analysis(args.n, args.gamma, args.lam, None if args.vertical else args.ell,
                                  args.x9, args.tol, out)
    except DomainError as exc:
        return _emit_error(EXIT_REGIME, exc, out)
    except Exception as exc:  # noqa: BLE001 - reported as internal failure
        return _emit_error(EXIT_INTERNAL, exc, out)
    dump_json(out / "report.json", data)
    summary = {"relevant": data.get("relevant"), "status": data["status"],
               "failed": [c["name"] for c in data["checks"] if not c["pass"]]}
    print(json.dumps(jsonable(summary)))
    return code


def field_rows(n, gamma, lam, ell, x9, times, rmin, rmax, samples):
    """CSV rows of the field on a log-spaced radius grid, plus excluded points."""
    if not times:
        return [], []
    params = GasParams.isentropic(n, gamma, lam)
    field = FlowField(assemble_gamma(params, ell, x9=x9), params)
    r = np.logspace(math.log10(rmin), math.log10(rmax), samples) if rmin > 0 else \
        np.concatenate([[0.0], np.logspace(-8, math.log10(rmax), samples - 1)])
    rows, excluded = [], []
    for tv in times:
        for rv in r:
            try:
                fs = field.evaluate(tv, rv)
            except AtSingularity:
                excluded.append((tv, float(rv)))
                continue
            rows.append((tv, rv, fs.rho[0], fs.u[0], fs.c[0], fs.p[0], fs.e[0], fs.S_proxy[0]))
    return rows, excluded


def cmd_field(args) -> int:
    out = _out_dir(args)
    if args.report:
        with open(args.report) as fh:
            prm = json.load(fh)["params"]
        n = args.n or prm["n"]
        gamma = args.gamma or prm["gamma"]
        lam = args.lam or prm["lambda"]
        ell = args.ell if args.ell is not None else prm.get("ell")
        x9 = prm.get("x9", args.x9)
    else:
        if None in (args.n, args.gamma, args.lam):
            print("field: need --n, --gamma and --lambda or --report", file=sys.stderr)
            return EXIT_INTERNAL
        n, gamma, lam, ell, x9 = args.n, args.gamma, args.lam, args.ell, args.x9
    if args.vertical:
        ell = None
    try:
        rows, excluded = field_rows(n, gamma, lam, ell, x9, args.times, args.rmin, args.rmax, args.samples)
    except (DomainError, BarrierExit, NoNodeCapture) as exc:
        return _emit_error(EXIT_REGIME, exc, None)
    except RilabError as exc:
        return _emit_error(EXIT_INTERNAL, exc, None)
    write_csv(out / "field.csv", FIELD_HEADER, rows)
    print(json.dumps({"rows": len(rows), "excluded": excluded}))
    return EXIT_OK


def sweep_point(task):
    """One sweep row; runs in a worker process."""
    n, gamma, lam, trace = task
    thr = lambda_thresholds(n, gamma, lam)
    row = [n, gamma, lam, thr.lambda_circ, thr.relevant, "", "", "", ""]
    if not thr.relevant:
        return row
    params = GasParams.isentropic(n, gamma, lam)
    bar = barrier_check(params)
    row[5:8] = [bar.propA, bar.propB, bar.propC]
    if trace and bar.all_hold:
        try:
            sigma = recover_x(trace_sigma(params), (np.inf, 1.0))
            sp = recover_x(trace_sigma_prime(params), (-np.inf, 1.0))
            row[8] = intersection_test(hugoniot_locus(sigma, params), sp).kind
        except RilabError as exc:
            row[8] = type(exc).__name__
    return row


def sweep_tasks(n, gammas, lambdas=None, count=10, trace=False):
    tasks = []
    for g in gammas:
        if lambdas:
            lams = list(lambdas)
        else:
            lc = lambda_thresholds(n, g).lambda_circ
            lams = [1.0 + (lc - 1.0) * k / (count + 1) for k in range(1, count + 1)]
        tasks.extend((n, g, lam, trace) for lam in lams)
    if len(tasks) > 1_000_000:
        raise DomainError("sweep grid exceeds 10^6 points")
    return tasks


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, str):
        return v
    return fmt(v)


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    tasks = sweep_tasks(args.n, args.gammas, args.lambdas, args.lambda_count, args.trace)
    path = out / "sweep.csv"
    with open(path, "w") as fh:
        fh.write(",".join(SWEEP_HEADER) + "\n")
        fh.flush()
        try:
            if args.jobs > 1:
                with ProcessPoolExecutor(max_workers=args.jobs) as ex:
                    for row in ex.map(sweep_point, tasks):
                        fh.write(",".join(_cell(v) for v in row) + "\n")
                        fh.flush()
            else:
                for row in map(sweep_point, tasks):
                    fh.write(",".join(_cell(v) for v in row) + "\n")
                    fh.flush()
        except KeyboardInterrupt:
            print(json.dumps({"interrupted": True, "path": str(path)}), file=sys.stderr)
            return EXIT_INTERNAL
    print(json.dumps({"rows": len(tasks), "path": str(path)}))
    return EXIT_OK


def main(argv=None) -> int:
    args = parse_args(argv)
    return {"analyze": cmd_analyze, "field": cmd_field, "sweep": cmd_sweep}[args.cmd](args)


if __name__ == "__main__":
    sys.exit(main())
