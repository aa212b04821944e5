"""Command-line front end.

Subcommands: check-ambient, flow, variation, stability, list-presets.
Outputs are plain files (CSV with a header row, JSON reports embedding
the resolved configuration); exit codes: 0 success, 2 usage error,
3 blow-up detected, 4 defect/degeneracy detected.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import ambient, analysis, backend, flow, scenarios, surface
from .errors import HkflowError

BANNER = "=" * 70

_STATUS_EXIT = {
    "reached_t_end": 0,
    "converged": 0,
    "blowup_detected": 3,
    "defect_exceeded": 4,
    "degenerate": 4,
}

# residual limits for the ambient report, keyed by name suffix
_AMBIENT_LIMITS = (
    ("ricci", 1e-6),
    ("curvature_match", 1e-6),
    ("frame_duality", 1e-12),
    ("frame_orthonormal", 1e-12),
    ("metric_reconstruction", 1e-12),
    ("quaternion", 1e-12),
    ("compatibility", 1e-12),
    ("transition_roundtrip", 1e-10),
    ("transition_curvature_agree", 1e-8),
    ("cone_angle_err", 1e-6),
    ("omega_closed", 1e-4),
    ("omega_parallel", 5e-3),
    ("structure_eq", 1e-5),
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else repr(v)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _apply_threads(args):
    if args.threads is not None:
        backend.set_threads(args.threads)


def _model_from_args(args, parser):
    kind = args.model or "flat"
    if kind == "flat":
        return ambient.flat_model()
    if args.c is not None and args.c <= 0:
        parser.error("c must be positive")
    return ambient.eh_model(args.c if args.c is not None else 1.0)


def _parse_grid(spec, parser):
    try:
        n1, n2 = spec.lower().split("x")
        return int(n1), int(n2)
    except ValueError:
        parser.error("--grid wants N1xN2, e.g. 64x32")


def _ambient_failures(report):
    fails = []
    for key, val in report.items():
        if not isinstance(val, float):
            continue
        if key.startswith("selftest_sphere"):
            if abs(val - 1.0) > 1e-5:
                fails.append("%s = %r (want 1)" % (key, val))
            continue
        if key == "selftest_flat_factor_ricci":
            if abs(val) > 1e-8:
                fails.append("%s = %r (want 0)" % (key, val))
            continue
        for suffix, lim in _AMBIENT_LIMITS:
            if key.endswith(suffix):
                if abs(val) > lim:
                    fails.append("%s = %.3e > %.1e" % (key, val, lim))
                break
    return fails


def cmd_check_ambient(args, parser):
    _apply_threads(args)
    model = _model_from_args(args, parser)
    print(BANNER)
    print("ambient validation: model=%s c=%g" % (model.kind, model.c))
    print(BANNER)
    report = ambient.validate_ambient(model, seed=args.seed)
    fails = _ambient_failures(report)
    for key in sorted(report):
        print("  %-36s %s" % (key, _fmt(report[key])))
    payload = {
        "config": {"model": model.kind, "c": model.c, "seed": args.seed},
        "report": report,
        "failures": fails,
        "passed": not fails,
    }
    out = _outdir(args)
    _write_json(os.path.join(out, "ambient_report.json"), payload)
    print(BANNER)
    print("result: %s (%d failures)" % ("PASS" if not fails else "FAIL",
                                        len(fails)))
    for f in fails:
        print("  " + f)
    return 0 if not fails else 1


def _scenario_from_args(args, parser, default_preset=None):
    if args.preset:
        try:
            pre = scenarios.preset(args.preset)
        except HkflowError as exc:
            parser.error(str(exc))
        spec = pre.scenario
        cfg = pre.flow_config
    else:
        kind = args.model or "flat"
        if kind == "flat":
            spec = scenarios.ScenarioSpec(
                "custom-flat", "flat", topology="torus", n1=64, n2=64,
                eps=0.1, potential="coscos", rho_rule="pullback_omega2")
        else:
            if args.c is not None and args.c <= 0:
                parser.error("c must be positive")
            spec = scenarios.ScenarioSpec(
                "custom-eh", "eh", c=args.c if args.c is not None else 1.0,
                topology="sphere", n1=64, n2=32, eps=0.05, potential="y20",
                rho_rule="induced_dmu")
        cfg = flow.FlowConfig()
    if args.grid:
        spec.n1, spec.n2 = _parse_grid(args.grid, parser)
    if args.seed is not None:
        spec.seed = args.seed
    if cfg is None:
        cfg = flow.FlowConfig()
    if args.dt is not None:
        cfg.dt_mode = "fixed"
        cfg.dt = args.dt
    if args.cfl is not None:
        cfg.dt_mode = "cfl"
        cfg.cfl_factor = args.cfl
    if args.steps is not None:
        cfg.max_steps = args.steps
    if args.t_end is not None:
        cfg.t_end = args.t_end
    return spec, cfg


def _snapshot_rows(grid, imm, geo):
    rows = []
    eta = geo.eta
    for i in range(grid.n1):
        for j in range(grid.n2):
            p = imm.points[i, j]
            rows.append((
                i, j, imm.chart_id, p[0], p[1], p[2], p[3],
                geo.lam[i, j], eta[i, j, 0], eta[i, j, 1], eta[i, j, 2],
                geo.normA2[i, j],
            ))
    return rows


_SNAP_HEADER = ("i", "j", "chart", "x0", "x1", "x2", "x3",
                "lambda", "eta1", "eta2", "eta3", "A2")


def cmd_flow(args, parser):
    _apply_threads(args)
    spec, cfg = _scenario_from_args(args, parser)
    out = _outdir(args)
    print(BANNER)
    print("flow run: scenario=%s  grid %dx%d" % (spec.name, spec.n1, spec.n2))
    print(BANNER)
    model, grid, imm, rep = spec.build()
    for k in sorted(rep):
        print("  initial %-24s %s" % (k, _fmt(rep[k])))

    geo0 = surface.surface_geometry(model, grid, imm)
    _write_csv(os.path.join(out, "snap_0.csv"), _SNAP_HEADER,
               _snapshot_rows(grid, imm, geo0))

    result = flow.flow_run(model, grid, imm, cfg)
    series = [[rec.as_dict()[k] for k in flow.MONITOR_FIELDS]
              for rec in result.records]
    _write_csv(os.path.join(out, "series.csv"), flow.MONITOR_FIELDS, series)

    geo1 = surface.surface_geometry(model, grid, result.imm)
    _write_csv(os.path.join(out, "snap_%d.csv" % result.steps), _SNAP_HEADER,
               _snapshot_rows(grid, result.imm, geo1))

    summary = {
        "config": {
            "scenario": spec.as_dict(),
            "flow": cfg.as_dict(),
            "seed": args.seed,
            "threads": args.threads,
            "backend": backend.backend_name(),
        },
        "initial_report": rep,
        "status": result.status,
        "steps": result.steps,
        "time": result.time,
        "first_record": result.records[0].as_dict(),
        "last_record": result.records[-1].as_dict(),
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    print(BANNER)
    print("status: %s after %d steps (t = %s)" %
          (result.status, result.steps, _fmt(result.time)))
    print("energy %s -> %s" % (_fmt(result.records[0].energy),
                               _fmt(result.records[-1].energy)))
    print("wrote %s" % os.path.join(out, "series.csv"))
    return _STATUS_EXIT.get(result.status, 4)


def cmd_variation(args, parser):
    _apply_threads(args)
    scen = args.scenario or "flat-graph"
    out = _outdir(args)
    checks = []
    print(BANNER)
    print("variation checks: scenario=%s  check=%s" % (scen, args.check))
    print(BANNER)
    if scen == "flat-graph":
        if args.check in ("first", "both"):
            n = 128
            if args.grid:
                n, _ = _parse_grid(args.grid, parser)
            for trial in range(3):
                model, grid, imm, T = scenarios.make_first_variation_pair(
                    n=n, seed=args.seed + trial)
                res = analysis.first_variation(
                    model, grid, imm, analysis.VariationField(T))
                checks.append({"name": "first-variation-%d" % trial,
                               "analytic": res["analytic"], "fd": res["fd"],
                               "rel_err": res["rel_err"]})
    elif scen == "plane":
        grid = surface.build_grid("torus", 64, 64)
        model, imm, rep = scenarios.make_flat_lagrangian_graph(
            grid, "zero", eps=0.0, rho_rule="unit")
        X1, _ = grid.mesh()
        T = np.zeros(imm.points.shape)
        T[..., 2] = np.sin(X1)
        res = analysis.second_variation_critical(
            model, grid, imm, analysis.VariationField(T))
        checks.append({"name": "second-variation-plane",
                       "analytic": res["analytic"], "fd": res["fd"],
                       "rel_err": res["rel_err"],
                       "target_4pi2": 4.0 * math.pi ** 2})
    elif scen == "eh-zero-section":
        grid = surface.build_grid("sphere", 64, 32)
        model, imm, rep = scenarios.make_eh_zero_section(
            args.c if args.c is not None else 1.0, grid)
        geo = surface.surface_geometry(model, grid, imm)
        T = geo.amb["vectors"][..., :, 0]
        res = analysis.second_variation_critical(
            model, grid, imm, analysis.VariationField(T, "e0"))
        checks.append({"name": "second-variation-e0",
                       "analytic": res["analytic"], "fd": res["fd"],
                       "rel_err": res["rel_err"], "parts": res["parts"]})
    else:
        parser.error("unknown scenario %r (flat-graph, plane, "
                     "eh-zero-section)" % scen)
    if args.check in ("second", "both") and scen == "flat-graph":
        parser.error("second-variation checks need a critical scenario "
                     "(plane or eh-zero-section)")
    for ch in checks:
        print("  %-24s analytic %s  fd %s  rel_err %s" %
              (ch["name"], _fmt(ch["analytic"]), _fmt(ch["fd"]),
               _fmt(ch["rel_err"])))
    payload = {
        "config": {"scenario": scen, "check": args.check, "seed": args.seed,
                   "c": args.c},
        "checks": checks,
    }
    _write_json(os.path.join(out, "variation_report.json"), payload)
    print("wrote %s" % os.path.join(out, "variation_report.json"))
    return 0


_STAB_HEADER = ("row", "r", "A", "R01_coeff", "min_eigenvalue",
                "max_eigenvalue", "verdict")


def cmd_stability(args, parser):
    _apply_threads(args)
    out = _outdir(args)
    rows = []
    print(BANNER)
    if args.preset == "eh-stability-report" or (
            args.preset is None and (args.model or "eh") == "eh"
            and args.scenario in (None, "bolt")):
        pre = scenarios.preset("eh-stability-report")
        spec = pre.scenario
        c = args.c if args.c is not None else spec.c
        if c <= 0:
            parser.error("c must be positive")
        print("stability report: Eguchi-Hanson, c=%g" % c)
        print(BANNER)
        model = ambient.eh_model(c)
        for r in spec.extra["r_values"]:
            rr = r * c ** 0.25
            A = 1.0 - c / rr ** 4
            coeff = (2.0 * A - 2.0) / rr ** 2
            rows.append(("radial", rr, A, coeff, None, None, ""))
        grid = surface.build_grid("sphere", spec.n1, spec.n2)
        _, imm, _ = scenarios.make_eh_zero_section(c, grid)
        sf = analysis.stability_form(model, grid, imm)
        tr = sf.M[..., 0, 0] + sf.M[..., 1, 1]
        max_eig = float((tr - sf.min_eigenvalue).max())
        verdict = ("strongly stable" if sf.global_min > 0.0
                   else "not strongly stable")
        rows.append(("bolt", c ** 0.25, 0.0, -2.0 / math.sqrt(c),
                     sf.global_min, max_eig, verdict))
    elif (args.model or "flat") == "flat":
        print("stability report: flat plane")
        print(BANNER)
        grid = surface.build_grid("torus", 64, 64)
        model, imm, _ = scenarios.make_flat_lagrangian_graph(
            grid, "zero", eps=0.0, rho_rule="unit")
        sf = analysis.stability_form(model, grid, imm)
        tr = sf.M[..., 0, 0] + sf.M[..., 1, 1]
        max_eig = float((tr - sf.min_eigenvalue).max())
        verdict = ("strongly stable" if sf.global_min > 0.0
                   else "not strongly stable")
        rows.append(("plane", None, None, None, sf.global_min, max_eig,
                     verdict))
    else:
        parser.error("unsupported stability request")
    for row in rows:
        print("  " + "  ".join(_fmt(x) for x in row))
    _write_csv(os.path.join(out, "stability_report.csv"), _STAB_HEADER, rows)
    print("wrote %s" % os.path.join(out, "stability_report.csv"))
    return 0


def cmd_list_presets(args, parser):
    print(BANNER)
    print("available presets")
    print(BANNER)
    for name in scenarios.preset_names():
        pre = scenarios.preset(name)
        print("  %-22s %s" % (name, pre.description))
        for exp in pre.expect:
            print("  %-22s   - %s" % ("", exp))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hkflow",
        description="numerical laboratory for the hyperkahler surface flow",
    )
    sub = parser.add_subparsers(dest="command")
    defs = dict(
        model=dict(choices=("flat", "eh"), default=None),
        c=dict(type=float, default=None),
        grid=dict(default=None, metavar="N1xN2"),
        dt=dict(type=float, default=None),
        cfl=dict(type=float, default=None),
        steps=dict(type=int, default=None),
        t_end=dict(type=float, default=None),
        preset=dict(default=None),
        seed=dict(type=int, default=0),
        threads=dict(type=int, default=None),
        out=dict(default=None),
    )
    for name in ("check-ambient", "flow", "variation", "stability",
                 "list-presets"):
        p = sub.add_parser(name)
        for flag, kw in defs.items():
            p.add_argument("--" + flag.replace("_", "-"), **kw)
        if name == "variation":
            p.add_argument("--scenario", default=None)
            p.add_argument("--check", choices=("first", "second", "both"),
                           default="first")
        if name == "stability":
            p.add_argument("--scenario", default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    if getattr(args, "c", None) is not None and args.c <= 0:
        parser.error("c must be positive")
    handlers = {
        "check-ambient": cmd_check_ambient,
        "flow": cmd_flow,
        "variation": cmd_variation,
        "stability": cmd_stability,
        "list-presets": cmd_list_presets,
    }
    try:
        return handlers[args.command](args, parser)
    except HkflowError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
