"""Command line: ``orliczfb {validate-g,solve,sweep,oracle,analyze}``.

Exit codes: 0 ok, 2 invalid input, 3 non-convergence or numeric failure,
4 property violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import energy, fbtools, harness, mesh, oracle, orlicz, solver
from .errors import (InvalidParameter, NoFreeBoundary, NumericError,
                     PropertyViolation, RangeError)

EXIT_OK, EXIT_INVALID, EXIT_NONCONV, EXIT_PROPERTY = 0, 2, 3, 4

log = logging.getLogger("orliczfb")


def _load_json(arg):
    """A path to a JSON file, or inline JSON text."""
    if os.path.exists(arg):
        with open(arg) as fh:
            return json.load(fh)
    try:
        return json.loads(arg)
    except json.JSONDecodeError as exc:
        raise InvalidParameter(f"{arg!r} is neither a file nor JSON") from exc


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _write_json(obj, path):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate_g(args):
    nf = orlicz.from_spec(_load_json(args.nfunction))
    report = {"label": nf.label, "delta": nf.delta, "g0": nf.g0}
    status = EXIT_OK
    report["condition"] = orlicz.verify_condition(nf, 1e-6, 1e6, 400)
    if not report["condition"]["ok"]:
        status = EXIT_PROPERTY
    for name, fn in (("g_properties", orlicz.check_g_properties),
                     ("g_tilde_bounds", orlicz.check_g_tilde_bounds)):
        try:
            report[name] = {"ok": True, "margins": fn(nf)}
        except PropertyViolation as exc:
            report[name] = {"ok": False, "error": str(exc), "witness": exc.witness}
            status = EXIT_PROPERTY
    if args.condi is not None:
        report["condi"] = orlicz.check_condi(nf, args.condi)
        if not report["condi"]["ok"]:
            status = EXIT_PROPERTY
    _write_json(report, args.out)
    return status


def cmd_solve(args):
    cfg = _load_json(args.config)
    grid, nf, alpha, scfg, theta = harness.build_problem(cfg)
    if "eps" not in cfg:
        raise InvalidParameter("solve config needs 'eps'")
    pp = energy.PenaltyParams(float(cfg["eps"]), alpha)
    res = solver.minimize(grid, nf, pp, scfg, theta_pos=theta)
    os.makedirs(args.out, exist_ok=True)
    mesh.write_field_csv(res.field, os.path.join(args.out, "field.csv"))
    _write_json(res.to_dict(), os.path.join(args.out, "result.json"))
    try:
        report = fbtools.build_report(res.field, nf, theta)
        report.to_json(os.path.join(args.out, "fbreport.json"))
        fbtools.extract_fb(res.field, theta).write_csv(os.path.join(args.out, "fb.csv"))
    except NoFreeBoundary as exc:
        _write_json({"error": f"no free boundary: {exc}"}, os.path.join(args.out, "fbreport.json"))
    log.info("J_eps=%.10g converged=%s", res.breakdown.total, res.converged)
    return EXIT_OK if res.converged else EXIT_NONCONV


def cmd_sweep(args):
    cfg = _load_json(args.config)
    if "eps_list" not in cfg:
        raise InvalidParameter("sweep config needs 'eps_list'")
    sw = harness.run_sweep(cfg, cfg["eps_list"], cold_start=args.cold or cfg.get("cold_start", False))
    os.makedirs(args.out, exist_ok=True)
    sw.to_csv(os.path.join(args.out, "sweep.csv"), timing=args.timing)
    summary = sw.summary(cfg.get("vol_tol"))
    if args.timing:
        summary["wall_time"] = [r["wall_time"] for r in sw.rows]
    _write_json(summary, os.path.join(args.out, "summary.json"))
    return EXIT_OK if summary["all_converged"] else EXIT_NONCONV


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InvalidParameter(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = float(v)
    return out


def cmd_oracle(args):
    nf = orlicz.from_spec(_load_json(args.nfunction)) if args.nfunction else orlicz.make_power(2)
    p = _parse_params(args.params)
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "1d":
        sol = oracle.solve_1d_exact(p.get("phi_left", 1.0), p.get("alpha", 0.5), nf)
        grid = mesh.interval(int(p.get("n", 400)), 0.0, 1.0, sol.phi_left, 0.0)
        mesh.write_field_csv(sol.on_grid(grid), os.path.join(args.out, "profile.csv"))
    else:
        sol = oracle.solve_radial(p.get("R", 1.0), p.get("phi", 1.0), p.get("alpha", 0.75 * math.pi),
                                  nf, int(p.get("N", 2)))
        with open(os.path.join(args.out, "profile.csv"), "w") as fh:
            fh.write("r,u\n")
            for r, u in zip(sol.r, sol.u):
                fh.write(f"{float(r)!r},{float(u)!r}\n")
        if "n" in p:
            grid = mesh.disc(int(p["n"]), sol.R, phi0=sol.phi_boundary)
            mesh.write_field_csv(sol.on_grid(grid), os.path.join(args.out, "field.csv"))
    _write_json(sol.to_dict(), os.path.join(args.out, "values.json"))
    return EXIT_OK


def cmd_analyze(args):
    fld = mesh.read_field_csv(args.field)
    nf = orlicz.from_spec(_load_json(args.nfunction))
    report = fbtools.build_report(fld, nf, args.theta)
    text = report.to_json(args.out)
    if args.out is None:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="orliczfb", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-g", help="check the structural conditions of an N-function")
    p.add_argument("--nfunction", required=True, help="JSON file or inline JSON")
    p.add_argument("--condi", type=float, default=None, metavar="T0")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate_g)

    p = sub.add_parser("solve", help="minimise J_eps for one eps")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve over a list of eps")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing", action="store_true", help="write wall times (breaks byte-identity)")
    p.add_argument("--cold", action="store_true", help="cold start every eps")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="reference solutions")
    p.add_argument("--kind", choices=["1d", "radial"], required=True)
    p.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")
    p.add_argument("--nfunction", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("analyze", help="free-boundary report for a field CSV")
    p.add_argument("--field", required=True)
    p.add_argument("--nfunction", required=True)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidParameter, RangeError, NoFreeBoundary, KeyError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
