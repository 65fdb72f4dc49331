"""Command line interface.

Exit codes: 0 success, 1 a certificate failed, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .arnoldcount import HomogeneousQuadric, arnold_identity_certificate
from .certificate import Certificate, bundle, jsonable
from .errors import CCBodyError, GridMismatch
from .gaussmap import gauss_identity_certificate, rolle_identity_certificate
from .glue_smooth import export_mesh, glue, kernel_certificate, make_kernel, quasicone_field, smooth
from .linefree import line_search, linefree_certificate
from .pipeline import PipelineConfig, run_pipeline
from .quadforms import signature_law_certificate
from .strip import (
    StripModel,
    build_strip,
    default_g,
    degenerate_strip,
    nonconstancy_certificate,
    strip_cc_certificate,
    strip_field,
    strip_model_checks,
    zero_function,
)
from .supportgeo import SupportField, curvature_positivity_certificate, z_convexity_certificate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _emit(obj, path=None) -> None:
    text = json.dumps(jsonable(obj), indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    print(text)


def _verdict(cert: Certificate, path=None) -> int:
    _emit(cert.to_dict(), path)
    return EXIT_OK if cert.passed else EXIT_FAIL


def _window(values):
    return (float(values[0]), float(values[1])) if values else None


def load_field(path, strip_path=None, epsilon=None, floor_fraction: float = 0.25) -> SupportField:
    """Read a binary field; with a strip model, rebuild it with exact section models.

    The rebuilt field must match the stored values, otherwise
    :class:`GridMismatch` is raised.
    """
    fld = SupportField.from_binary(path)
    if strip_path is None:
        return fld
    strip = StripModel.from_json(Path(strip_path).read_text())
    z_max = float(fld.z[-1])
    rebuilt = strip_field(strip, z_max, fld.z_step, fld.n_theta)
    if fld.provenance in ("glued", "smoothed"):
        rebuilt = glue(rebuilt, quasicone_field(rebuilt.z, rebuilt.theta))
    if fld.provenance == "smoothed":
        if epsilon is None:
            raise GridMismatch("a smoothed field needs --epsilon to be rebuilt")
        rebuilt = smooth(rebuilt, make_kernel(epsilon, fld.z_step, fld.n_theta, floor_fraction))
    scale = max(1.0, float(np.max(np.abs(fld.values))))
    if not rebuilt.same_grid(fld) or float(np.max(np.abs(rebuilt.values - fld.values))) > 1e-12 * scale:
        raise GridMismatch("stored field does not match the one rebuilt from the strip model")
    return rebuilt


# ---------------------------------------------------------------- commands


def cmd_forms_check(args) -> int:
    cert = bundle("forms", [
        signature_law_certificate(args.n_forms, args.max_dim, args.seed),
        gauss_identity_certificate(n_points=args.n_points, seed=args.seed),
    ])
    return _verdict(cert, args.json)


def cmd_strip_build(args) -> int:
    if args.degenerate:
        strip, info = degenerate_strip(args.z_max, args.grid_step), None
    else:
        if args.g == "zero":
            g = zero_function(args.z_max, args.grid_step)
        else:
            g = default_g(args.z_max, args.grid_step)
        strip, info = build_strip(g, m=args.m, rho_scale=args.rho_scale)
    Path(args.out).write_text(strip.to_json())
    parts = strip_model_checks(strip)
    parts.append(strip_cc_certificate(strip))
    cert = bundle("strip_build", parts)
    cert.details["nonconstancy"] = nonconstancy_certificate(strip).to_dict()
    if info is not None:
        cert.details["kernel_dim"] = info.kernel_dim
        cert.details["residual"] = info.residual
    if args.field:
        strip_field(strip, args.z_max, 1.0 / args.z_res, args.n_theta).to_binary(args.field)
    return _verdict(cert, args.json)


def cmd_certify(args) -> int:
    fld = load_field(args.field, args.strip, args.epsilon)
    if args.what == "cc":
        cert = z_convexity_certificate(fld, _window(args.window), args.tol)
    elif args.what == "curvature":
        cert = curvature_positivity_certificate(fld, method=args.method)
    else:
        win = _window(args.window) or (-10.0, 10.0)
        cert = linefree_certificate(fld, args.margin, win, args.budget, args.seed)
    return _verdict(cert, args.json)


def cmd_linefree(args) -> int:
    fld = load_field(args.field, args.strip, args.epsilon)
    rep = line_search(fld, _window(args.window) or (-10.0, 10.0), args.budget, args.seed)
    cert = linefree_certificate(fld, args.margin, report=rep)
    _emit({"best_line": rep.best_line.to_dict(), "margin": rep.margin, "evaluations": rep.evaluations,
           "seed": rep.seed, "passed": cert.passed, "method": rep.method}, args.json)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_glue(args) -> int:
    fld = load_field(args.field, args.strip)
    out = glue(fld, quasicone_field(fld.z, fld.theta))
    out.to_binary(args.out)
    return _verdict(z_convexity_certificate(out), args.json)


def cmd_smooth(args) -> int:
    fld = load_field(args.field, args.strip)
    kernel = make_kernel(args.epsilon, fld.z_step, fld.n_theta, args.floor_fraction)
    out = smooth(fld, kernel)
    out.to_binary(args.out)
    parts = [kernel_certificate(kernel), curvature_positivity_certificate(out)]
    return _verdict(bundle("smooth", parts), args.json)


def cmd_export(args) -> int:
    fld = load_field(args.field, args.strip, args.epsilon)
    mesh = export_mesh(fld, _window(args.window) or (-3.0, 3.0), args.stride, args.out)
    _emit({"mesh": args.out, "vertices": int(mesh.vertices.shape[0] * mesh.vertices.shape[1]),
           "faces": int(mesh.faces().shape[0])})
    return EXIT_OK


def cmd_arnold_verify(args) -> int:
    try:
        k, l = (int(v) for v in args.signature.split(","))
    except ValueError:
        print("signature must be given as k,l", file=sys.stderr)
        return EXIT_USAGE
    if k + l != 4 or k < 0 or l < 0:
        print("signature must describe a 4 x 4 form", file=sys.stderr)
        return EXIT_USAGE
    quad = HomogeneousQuadric(np.diag([1.0] * k + [-1.0] * l))
    cert = arnold_identity_certificate(quad, args.lines, args.seed)
    _emit({"violations": cert.details["violations"], "skipped_near_tangent": cert.details["skipped_near_tangent"],
           "retained": cert.details["retained"], "passed": cert.passed}, args.json)
    return EXIT_OK if cert.passed else EXIT_FAIL


def cmd_rolle_check(args) -> int:
    return _verdict(rolle_identity_certificate(args.k, args.l, args.epsilon, args.points, args.seed), args.json)


def cmd_run(args) -> int:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    for key in ("epsilon", "delta", "seed", "budget", "rho_scale", "g_kind", "m", "output_dir", "z_window"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    config = PipelineConfig.from_dict(cfg)
    report = run_pipeline(config)
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccbody", description="Line-free hyperbolic bodies and their certificates.")
    sub = p.add_subparsers(dest="command", required=True)

    def with_json(sp):
        sp.add_argument("--json", help="also write the JSON result to this file")
        return sp

    forms = sub.add_parser("forms", help="quadratic form self-tests")
    fs = forms.add_subparsers(dest="action", required=True)
    fc = with_json(fs.add_parser("check", help="signature law and Gauss identity"))
    fc.add_argument("--n-forms", type=int, default=500)
    fc.add_argument("--max-dim", type=int, default=6)
    fc.add_argument("--n-points", type=int, default=10_000)
    fc.add_argument("--seed", type=int, default=0)
    fc.set_defaults(func=cmd_forms_check)

    strip = sub.add_parser("strip", help="strip construction")
    ss = strip.add_subparsers(dest="action", required=True)
    sb = with_json(ss.add_parser("build", help="build a strip model and certify it"))
    sb.add_argument("--out", required=True, help="strip model JSON")
    sb.add_argument("--field", help="also write the strip support field (binary)")
    sb.add_argument("--g", choices=("default", "zero"), default="default")
    sb.add_argument("--degenerate", action="store_true", help="f = (1, z), u = 0")
    sb.add_argument("--basis-size", "--m", dest="m", type=int, default=8)
    sb.add_argument("--rho-scale", type=float, default=1.0)
    sb.add_argument("--z-max", type=float, default=12.0, help="half-length of the z range (12 is needed for gluing)")
    sb.add_argument("--grid-step", type=float, default=1.0 / 1024.0, help="ODE grid step")
    sb.add_argument("--z-res", type=int, default=256, help="grid rows per unit z")
    sb.add_argument("--n-theta", type=int, default=256)
    sb.set_defaults(func=cmd_strip_build)

    def field_args(sp, needs_epsilon=False):
        sp.add_argument("--field", required=True, help="binary support field")
        sp.add_argument("--strip", help="strip model JSON used to attach exact sections")
        if needs_epsilon:
            sp.add_argument("--epsilon", type=float, help="smoothing width of a smoothed field")
        return sp

    cert = sub.add_parser("certify", help="certificates on a stored field")
    cs = cert.add_subparsers(dest="what", required=True)
    cc = with_json(field_args(cs.add_parser("cc", help="convexity in z"), True))
    cc.add_argument("--z-window", "--window", dest="window", type=float, nargs=2)
    cc.add_argument("--tol", type=float, default=1e-7)
    cv = with_json(field_args(cs.add_parser("curvature", help="section curvature positivity"), True))
    cv.add_argument("--method", choices=("discrete", "spectral"), default="discrete")
    cl = with_json(field_args(cs.add_parser("linefree", help="line-freeness margin"), True))
    cl.add_argument("--margin", type=float, default=0.0)
    cl.add_argument("--budget", type=int, default=32)
    cl.add_argument("--seed", type=int, default=0)
    cl.add_argument("--z-window", "--window", dest="window", type=float, nargs=2)
    for sp in (cc, cv, cl):
        sp.set_defaults(func=cmd_certify)

    lf = with_json(field_args(sub.add_parser("linefree", help="line search report"), True))
    lf.add_argument("--margin", type=float, default=0.0)
    lf.add_argument("--budget", type=int, default=32)
    lf.add_argument("--seed", type=int, default=0)
    lf.add_argument("--z-window", "--window", dest="window", type=float, nargs=2)
    lf.set_defaults(func=cmd_linefree)

    gl = with_json(field_args(sub.add_parser("glue", help="glue a strip field to the quasi-cone")))
    gl.add_argument("--out", required=True)
    gl.set_defaults(func=cmd_glue)

    sm = with_json(field_args(sub.add_parser("smooth", help="smooth a glued field")))
    sm.add_argument("--epsilon", type=float, required=True)
    sm.add_argument("--floor-fraction", type=float, default=0.25)
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_smooth)

    ex = field_args(sub.add_parser("export", help="export the boundary mesh as OBJ"), True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--z-window", "--window", dest="window", type=float, nargs=2)
    ex.add_argument("--stride", type=int, default=4)
    ex.set_defaults(func=cmd_export)

    ar = sub.add_parser("arnold", help="counting identity on projective quadrics")
    ars = ar.add_subparsers(dest="action", required=True)
    av = with_json(ars.add_parser("verify"))
    av.add_argument("--signature", default="2,2")
    av.add_argument("--lines", type=int, default=1000)
    av.add_argument("--seed", type=int, default=7)
    av.set_defaults(func=cmd_arnold_verify)

    ro = sub.add_parser("rolle", help="Rolle function gradient identity")
    ros = ro.add_subparsers(dest="action", required=True)
    rc = with_json(ros.add_parser("check"))
    rc.add_argument("--k", type=int, default=2)
    rc.add_argument("--l", type=int, default=2)
    rc.add_argument("--epsilon", type=float, default=0.1)
    rc.add_argument("--points", type=int, default=1000)
    rc.add_argument("--seed", type=int, default=0)
    rc.set_defaults(func=cmd_rolle_check)

    run = sub.add_parser("run", help="full pipeline")
    run.add_argument("--config", help="JSON config; flags override its entries")
    run.add_argument("--out", dest="output_dir")
    run.add_argument("--epsilon", type=float)
    run.add_argument("--delta", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--budget", type=int)
    run.add_argument("--rho-scale", type=float)
    run.add_argument("--g", dest="g_kind", choices=("default", "zero"))
    run.add_argument("--basis-size", "--m", dest="m", type=int)
    run.add_argument("--z-window", type=float, nargs=2)
    run.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CCBodyError, FileNotFoundError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
