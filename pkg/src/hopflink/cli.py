"""Command-line front end.

Every command prints a JSON document on stdout.  Exit codes: 0 pass,
1 numeric failure, 2 usage error.  Errors are JSON objects with an
``error`` code and a ``message``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .current import (
    CurrentLattice,
    current_from_omega,
    divergence,
    omega_from_direction,
    pullback_volume,
    solve_omega_coulomb,
)
from .defects import DefectCurve, FramingError, NonRegularZeroError, WindingError, attach_winding, pushoff_curve
from .fieldlab import check_boundary, make_field, normalize_phi, sample
from .hopf import BOUNDARY_TOL, analyze_defects, field_pair, run
from .io import (
    curves_from_dict,
    curves_to_dict,
    dumps_stable,
    load_lattice,
    load_manifold,
    manifold_from_dict,
    obj_polylines,
    read_json,
    save_lattice,
    write_json,
)
from .linking import (
    LinkingError,
    LinkingResult,
    RoundSphere,
    gauss_linking,
    intersection_linking,
    polyline_linking_exact,
    polyline_linking_solid_angle,
    sphere_pair_standard,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _emit(obj, path: str | None = None) -> None:
    text = dumps_stable(obj)
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


def _error(code: str, message: str) -> dict:
    return {"error": code, "message": message, "version": __version__}


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(str(resources.files("hopflink") / "data" / name))


# --------------------------------------------------------------------------
# configuration from flags


def _parse_params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _config(args) -> RunConfig:
    try:
        cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
        over = {}
        if getattr(args, "field", None):
            over["field"] = {"kind": args.field, "params": _parse_params(args.param)}
        elif getattr(args, "param", None):
            over["field"] = {"kind": cfg.field["kind"], "params": {**cfg.field.get("params", {}), **_parse_params(args.param)}}
        if args.grid is not None or args.box is not None:
            g = dict(cfg.grid)
            if args.grid is not None:
                g["nodes"] = args.grid
            if args.box is not None:
                g.pop("box_min", None)
                g.pop("box_max", None)
                g["half_width"] = args.box
            over["grid"] = g
        if getattr(args, "backend", None):
            over["linking_backend"] = args.backend
        cfg = cfg.updated(
            seed=args.seed,
            tolerance=args.tolerance,
            threads=args.threads,
            report=args.report,
            **over,
        )
        make_field(cfg.field["kind"], **dict(cfg.field.get("params", {})))
        return cfg
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(str(exc)) from exc


def _workers(cfg: RunConfig) -> int:
    return cfg.threads or os.cpu_count() or 1


# --------------------------------------------------------------------------
# demo


def cmd_demo(args) -> int:
    from .suite import CASES, TITLES, run_suite

    if args.list:
        _emit({"cases": [TITLES[k] for k in CASES]})
        return EXIT_PASS
    keys = args.case or list(CASES)
    for k in keys:
        if k not in CASES:
            raise UsageError(f"unknown case {k!r}; choose from {list(CASES)}")
    results = run_suite(keys, nodes=args.grid, echo=lambda s: print(s, file=sys.stderr, flush=True))
    table = [{"case": r.key, "title": r.title, "status": r.status, "seconds": round(r.seconds, 1),
              "checks": [{"name": c.name, "passed": c.passed, "expected_failure": c.expected_failure, "detail": c.detail} for c in r.checks]}
             for r in results]
    ok = all(r.ok for r in results)
    _emit({"version": __version__, "grid_override": args.grid, "passed": ok, "cases": table}, args.report)
    return EXIT_PASS if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# field


def cmd_field(args) -> int:
    cfg = _config(args)
    if args.action == "sample":
        fld = make_field(cfg.field["kind"], **cfg.field.get("params", {}))
        if args.target == "unit":
            fld = field_pair(cfg.field, cfg.preimage_point, cfg.lift_point)[0]
        elif args.target == "planar":
            fld = field_pair(cfg.field, cfg.preimage_point, cfg.lift_point)[1]
        lat = sample(fld, cfg.grid_spec())
        chk = check_boundary(lat, tol=args.boundary_tol)
        if args.out:
            save_lattice(args.out, lat, cfg.provenance())
        _emit({"version": __version__, "config": cfg.provenance(), "type": type(lat).__name__, "field": fld.to_dict(),
               "grid": lat.grid.to_dict(), "boundary_value": lat.boundary_value,
               "boundary_deviation": chk.max_deviation, "boundary_ok": chk.passed, "out": args.out}, cfg.report)
        return EXIT_PASS
    lat = load_lattice(args.input)
    chk = check_boundary(lat, tol=args.boundary_tol)
    _emit({"version": __version__, "input": args.input, "boundary_deviation": chk.max_deviation, "tol": chk.tol, "passed": chk.passed}, cfg.report)
    return EXIT_PASS if chk.passed else EXIT_FAIL


# --------------------------------------------------------------------------
# current


def cmd_current(args) -> int:
    cfg = _config(args)
    order = cfg.diff_order
    summary = {"version": __version__, "action": args.action}
    if args.action == "build":
        nf_field, phi_field = field_pair(cfg.field, cfg.preimage_point, cfg.lift_point)
        grid = cfg.grid_spec()
        if args.route == "unitsphere":
            j = pullback_volume(sample(nf_field, grid), order)
        else:
            m = normalize_phi(sample(phi_field, grid))
            j = current_from_omega(omega_from_direction(m, order), order)
        div = divergence(j, order=order)
        summary.update({"config": cfg.provenance(), "route": args.route, "max_interior_divergence": div.max_interior,
                        "excluded_fraction": j.excluded_fraction()})
        if args.out:
            save_lattice(args.out, j, cfg.provenance())
            summary["out"] = args.out
    elif args.action == "solve-omega":
        j = load_lattice(args.input)
        if not isinstance(j, CurrentLattice):
            raise UsageError(f"{args.input} holds a {type(j).__name__}, not a current")
        omega = solve_omega_coulomb(j, workers=_workers(cfg), max_boundary_fraction=cfg.max_boundary_fraction, order=order)
        resid = current_from_omega(omega, order).values - j.values
        k = 4
        inner = np.linalg.norm(resid[k:-k, k:-k, k:-k], axis=-1).max()
        scale = np.linalg.norm(j.values, axis=-1).max()
        summary.update({"input": args.input, "max_curl_residual": float(inner),
                        "relative_curl_residual": float(inner / scale) if scale else 0.0,
                        "max_interior_divergence": divergence(CurrentLattice(omega.grid, omega.values), order=order).max_interior})
        if args.out:
            save_lattice(args.out, omega, cfg.provenance())
            summary["out"] = args.out
    else:
        j = load_lattice(args.input)
        div = divergence(CurrentLattice(j.grid, j.values, j.mask), order=order)
        summary.update({"input": args.input, "max_interior_divergence": div.max_interior,
                        "excluded_fraction": j.excluded_fraction()})
    _emit(summary, cfg.report)
    return EXIT_PASS


# --------------------------------------------------------------------------
# defects


def _phi_lattice(cfg: RunConfig):
    return sample(field_pair(cfg.field, cfg.preimage_point, cfg.lift_point)[1], cfg.grid_spec())


def cmd_defects(args) -> int:
    cfg = _config(args)
    phi = _phi_lattice(cfg)
    if args.action == "extract":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            curves, stats = analyze_defects(phi, cfg)
        doc = {"version": __version__, "config": cfg.provenance(), "extraction": stats, **curves_to_dict(curves)}
        if args.out:
            write_json(args.out, doc)
        if args.obj:
            Path(args.obj).write_text(obj_polylines(curves, include_pushoffs=True))
        _emit(doc, cfg.report)
        return EXIT_FAIL if any(not c.closed for c in curves) else EXIT_PASS
    curves = curves_from_dict(read_json(args.curves))
    out = []
    for c in curves:
        bare = DefectCurve(c.vertices, c.closed)
        if args.action == "winding":
            w = attach_winding(bare, phi, n_patches=cfg.patches, samples=cfg.winding_samples)
            out.append({"W": w.W, "beta": w.beta, "eta": w.eta})
        else:
            delta = (args.delta or cfg.pushoff_factor) * phi.grid.h
            p = pushoff_curve(phi, bare, delta)
            out.append({"delta": delta, "self_link": polyline_linking_exact(c.vertices, p.vertices, seed=cfg.seed), "pushoff": p.vertices})
    _emit({"version": __version__, "config": cfg.provenance(), "action": args.action, "curves": out}, cfg.report)
    return EXIT_PASS


# --------------------------------------------------------------------------
# link


def _manifolds(args):
    if args.pair:
        name = {"circles": "orthogonal_circles.json", "torus": "torus_link_2_4.json", "spheres": "spheres_r7.json"}[args.pair]
        d = read_json(bundled(name))
        return manifold_from_dict(d["P"]), manifold_from_dict(d["Q"])
    if args.files and len(args.files) == 1:
        d = read_json(args.files[0])
        if not (isinstance(d, dict) and "P" in d and "Q" in d):
            raise UsageError("a single manifold file must hold both 'P' and 'Q'")
        return manifold_from_dict(d["P"]), manifold_from_dict(d["Q"])
    if args.files and len(args.files) == 2:
        return load_manifold(args.files[0]), load_manifold(args.files[1])
    raise UsageError("give --pair, one file with P and Q, or two manifold files")


def cmd_link(args) -> int:
    P, Q = _manifolds(args)
    backend = args.backend or ("quadrature" if P.dim == 1 else "montecarlo")
    seed = 0 if args.seed is None else args.seed
    res = tuple(args.resolution) if args.resolution else None
    if backend in ("quadrature", "montecarlo"):
        r = gauss_linking(P, Q, backend=backend, resolution=res, samples=args.samples, seed=seed)
    elif backend in ("crossing", "solid_angle"):
        if P.dim != 1 or Q.dim != 1 or P.ambient != 3:
            raise UsageError(f"the {backend} backend needs two curves in R^3")
        m = args.polygon
        A, B = P.sample_points((m,)), Q.sample_points((m,))
        if backend == "crossing":
            v = polyline_linking_exact(A, B, seed=seed)
            r = LinkingResult(float(v), v, "crossing", 0.0, m, 1, seed, None)
        else:
            v = polyline_linking_solid_angle(A, B)
            r = LinkingResult(v, int(round(v)), "solid_angle", 0.0, m, 1, None, None)
    elif backend == "intersection":
        if not isinstance(P, RoundSphere):
            raise UsageError("the intersection backend needs P to be a round sphere")
        v = intersection_linking(Q, P, resolution=res)
        r = LinkingResult(float(v), v, "intersection", 0.0, None, P.dim + 1, None, None)
    else:
        raise UsageError(f"unknown backend {backend!r}")
    doc = {"version": __version__, "config": {"P": P.spec, "Q": Q.spec, "backend": backend, "seed": seed,
                                                "samples": args.samples, "resolution": res},
           "result": r.to_dict()}
    if args.tolerance is not None and backend in ("quadrature", "montecarlo"):
        ok = abs(r.value - r.rounded) <= args.tolerance
        doc["passed"] = ok
        _emit(doc, args.report)
        return EXIT_PASS if ok else EXIT_FAIL
    _emit(doc, args.report)
    return EXIT_PASS


# --------------------------------------------------------------------------
# hopf


def cmd_hopf(args) -> int:
    if args.action == "demo":
        args.list, args.case = False, None
        return cmd_demo(args)
    cfg = _config(args)
    if cfg.threads is None:
        cfg = cfg.updated(threads=os.cpu_count() or 1)
    report = run(cfg)
    doc = report.to_dict()
    if cfg.report:
        write_json(cfg.report, doc)
    sys.stdout.write(dumps_stable(doc))
    return EXIT_PASS if report.passed else EXIT_FAIL


# --------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--grid", type=int, default=None, help="lattice nodes per axis")
    p.add_argument("--box", type=float, default=None, help="half width of the cubic box")
    p.add_argument("--tolerance", type=float, default=None, help="pass tolerance")
    p.add_argument("--report", default=None, help="also write the JSON output to this path")
    p.add_argument("--threads", type=int, default=None, help="FFT workers (default: all cores)")
    return p


def _field_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or TOML run configuration")
    p.add_argument("--field", help="field kind: hopf_unit, milnor, planar, constant, preimage, lift")
    p.add_argument("--param", action="append", help="field parameter key=value (value parsed as JSON)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="hopflink", description="Hopf invariants from defect linking numbers.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", parents=[common], help="run the canonical acceptance cases")
    p.add_argument("--list", action="store_true", help="list cases without running them")
    p.add_argument("--case", action="append", help="run only this case (repeatable)")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("field", help="sample fields and check boundaries")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("sample", parents=[common])
    _field_flags(q)
    q.add_argument("--target", choices=["native", "unit", "planar"], default="native")
    q.add_argument("--boundary-tol", type=float, default=BOUNDARY_TOL)
    q.add_argument("--out", help="npz lattice path")
    q = s.add_parser("check-boundary", parents=[common])
    q.add_argument("input")
    q.add_argument("--boundary-tol", type=float, default=BOUNDARY_TOL)
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("current", help="currents, omega and conservation checks")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("build", parents=[common])
    _field_flags(q)
    q.add_argument("--route", choices=["direction", "unitsphere"], default="unitsphere")
    q.add_argument("--out")
    q = s.add_parser("solve-omega", parents=[common])
    q.add_argument("input")
    q.add_argument("--out")
    q = s.add_parser("check-conservation", parents=[common])
    q.add_argument("input")
    p.set_defaults(func=cmd_current)

    p = sub.add_parser("defects", help="zero-set extraction, windings and pushoffs")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("extract", parents=[common])
    _field_flags(q)
    q.add_argument("--out", help="curves JSON path")
    q.add_argument("--obj", help="OBJ polyline path")
    for name in ("winding", "pushoff"):
        q = s.add_parser(name, parents=[common])
        _field_flags(q)
        q.add_argument("curves", help="curves JSON from 'defects extract'")
        if name == "pushoff":
            q.add_argument("--delta", type=float, help="pushoff level in units of h")
    p.set_defaults(func=cmd_defects)

    p = sub.add_parser("link", help="linking numbers")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("compute", parents=[common])
    q.add_argument("files", nargs="*", help="manifold JSON/OBJ files")
    q.add_argument("--pair", choices=["circles", "torus", "spheres"], help="bundled example pair")
    q.add_argument("--backend", choices=["quadrature", "montecarlo", "crossing", "solid_angle", "intersection"])
    q.add_argument("--samples", type=int, default=1_000_000)
    q.add_argument("--resolution", type=int, nargs="+")
    q.add_argument("--polygon", type=int, default=256, help="vertices per curve for the polyline backends")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("hopf", help="full pipeline")
    s = p.add_subparsers(dest="action", required=True)
    q = s.add_parser("run", parents=[common])
    _field_flags(q)
    q.add_argument("--backend", choices=["crossing", "solid_angle", "quadrature"])
    q = s.add_parser("demo", parents=[common])
    p.set_defaults(func=cmd_hopf)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stdout.write(dumps_stable(_error("usage", str(exc))))
        return EXIT_USAGE
    except (FileNotFoundError, KeyError) as exc:
        sys.stdout.write(dumps_stable(_error("usage", f"{type(exc).__name__}: {exc}")))
        return EXIT_USAGE
    except FramingError as exc:
        sys.stdout.write(dumps_stable(_error("framing", str(exc))))
        return EXIT_FAIL
    except (WindingError, NonRegularZeroError) as exc:
        sys.stdout.write(dumps_stable(_error("winding", str(exc))))
        return EXIT_FAIL
    except LinkingError as exc:
        sys.stdout.write(dumps_stable(_error("linking", str(exc))))
        return EXIT_FAIL
    except ValueError as exc:
        sys.stdout.write(dumps_stable(_error("numeric", str(exc))))
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
