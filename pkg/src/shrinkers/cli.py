"""Command-line front end.

Subcommands: end, sweep, geodesic, torus, classify, linearized, replay.  Options come
from flags, then an optional key=value config file, then built-in defaults.  Solver
settings (DomainConfig / EndSolverConfig field names) may also be given in the config
file.  Exit codes: 0 ok, 2 usage, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .classifier import classify, census, find_torus, scan_closed
from .ends import (EndSolverConfig, flow_defect, picard_solve, solve_end,
                   verify_end_properties)
from .errors import ConfigError, DomainError, NumericalFailure, NoConvergence
from .geodesic import DomainConfig, Window, integrate_geodesic
from .io import (RunManifest, read_curve_csv, sha256_file, write_curve_csv, write_report,
                 write_svg, write_table_csv)
from .linearized import (limit_check, linearized_identity_residual, refined_identity_residual,
                         sigma_limit_check, solve_linearized)

log = logging.getLogger("shrinkers")

_DOMAIN_KEYS = {f.name for f in dataclasses.fields(DomainConfig)} - {"alpha"}
_END_KEYS = {f.name for f in dataclasses.fields(EndSolverConfig)} - {"x_max", "a_schedule"}

# keys whose default is None but whose value is numeric
_FLOAT_KEYS = {"sigma", "picard_b"}

OUT_KEYS = ("csv", "report", "svg", "figure", "csv_dir")

DEFAULTS = {
    "end": {"sigma": None, "xmax": 50.0, "picard": False},
    "sweep": {"sigmas": None, "xmax": 50.0, "jobs": 1},
    "geodesic": {"init": None, "length": 10.0, "through_axis": False},
    "torus": {"scan": "0.2:2.0:180", "length": 50.0},
    "classify": {"init": None, "curve": None, "length": 20.0, "closed": False},
    "linearized": {"rmax": 40.0, "rmin": 1e-3, "sigma_limit": False},
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# option handling

def _coerce(key, value, default):
    if not isinstance(value, str):
        return value
    v = value.strip()
    if isinstance(default, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(default, int):
            return int(v)
        if isinstance(default, float):
            return float(v)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {value!r}") from None
    return v


def read_config_file(path):
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    with fh:
        for k, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{k}: expected key=value")
            key, val = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def merge_options(command, ns_dict, file_cfg):
    """flags > config file > defaults."""
    base = dict(DEFAULTS.get(command, {}))
    base.update({"n": None, "alpha": None})
    for k in OUT_KEYS:
        base.setdefault(k, None)
    for key in _DOMAIN_KEYS | _END_KEYS:
        base.setdefault(key, None)
    opts = dict(base)
    for key, val in file_cfg.items():
        if key not in base:
            raise UsageError(f"unknown config key {key!r} for {command}")
        ref = DEFAULTS.get(command, {}).get(key)
        if key in ("n", "alpha") or key in _FLOAT_KEYS:
            ref = 0.0
        elif key in _DOMAIN_KEYS:
            ref = getattr(DomainConfig(), key)
        elif key in _END_KEYS:
            ref = getattr(EndSolverConfig(), key)
        opts[key] = _coerce(key, val, ref)
    for key, val in ns_dict.items():
        if key in base and val is not None:
            opts[key] = val
    return opts


def domain_config(opts) -> DomainConfig:
    if opts.get("alpha") is not None and opts.get("n") is not None:
        raise UsageError("give either --n or --alpha, not both")
    if opts.get("alpha") is not None:
        alpha = float(opts["alpha"])
    else:
        n = 2.0 if opts.get("n") is None else float(opts["n"])
        if n < 1:
            raise UsageError("n must be >= 1")
        alpha = n - 1.0
    kw = {k: float(opts[k]) for k in _DOMAIN_KEYS if opts.get(k) is not None}
    return DomainConfig(alpha=alpha, **kw)


def end_config(opts) -> EndSolverConfig:
    kw = {k: opts[k] for k in _END_KEYS if opts.get(k) is not None}
    return EndSolverConfig(x_max=float(opts.get("xmax") or 50.0), **kw)


def _floats(text, what):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse {what}: {text!r}") from None
    return vals


def _range(text):
    parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"expected lo:hi:count, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UsageError(f"cannot parse range {text!r}") from None
    if not (0 < lo < hi) or n < 1:
        raise UsageError("range needs 0 < lo < hi and count >= 1")
    return lo, hi, n


# ---------------------------------------------------------------------------
# end / sweep

def _end_payload(end, cfg, ecfg, opts):
    rc = cfg.cylinder_radius()
    pay = {"sigma": end.sigma, "alpha": end.alpha, "x_max": float(end.x[-1]), "u0": end.u0,
           "cylinder_radius": rc, "flags": end.flags}
    if end.flags.get("degenerate") == "ray":
        pay["ray_deviation"] = float(np.max(np.abs(end.u - end.sigma * end.x)))
        pay["all_ok"] = True
        return pay
    prop = verify_end_properties(end, cfg, ecfg)
    pay.update({"u0_margin": rc - end.u0, "flow_defect": flow_defect(end),
                "anchors": end.a_used, "richardson": end.richardson,
                "properties": dataclasses.asdict(prop), "all_ok": prop.all_ok})
    if opts.get("picard"):
        pic = picard_solve(end.sigma, cfg, ecfg)
        sel = pic.x <= end.x[-1]
        diff = float(np.max(np.abs(pic.u()[sel] - end(pic.x[sel]))))
        pay["picard"] = dict(pic.record(), sup_difference=diff)
    return pay


def _end_curve(end, cfg):
    return end.profile_curve(cfg)


def cmd_end(opts):
    sigma = opts.get("sigma")
    if sigma is None:
        raise UsageError("--sigma is required")
    if not (math.isfinite(sigma) and sigma > 0):
        raise UsageError("sigma must be positive")
    cfg, ecfg = domain_config(opts), end_config(opts)
    end = solve_end(float(sigma), cfg, ecfg)
    curve = _end_curve(end, cfg)
    outs = []
    if opts["csv"]:
        write_curve_csv(opts["csv"], curve)
        outs.append(opts["csv"])
    pay = _end_payload(end, cfg, ecfg, opts)
    if opts["report"]:
        write_report(opts["report"], "end", pay)
        outs.append(opts["report"])
    rc = cfg.cylinder_radius() or None
    label = f"sigma={end.sigma:g}"
    if opts["svg"]:
        write_svg(opts["svg"], [(label, end.x, end.u)], cylinder_radius=rc,
                  cone_slope=end.sigma)
        outs.append(opts["svg"])
    if opts["figure"]:
        from .plotting import plot_profiles
        plot_profiles(opts["figure"], [(label, end.x, end.u)], rc, end.sigma)
        outs.append(opts["figure"])
    print(f"sigma={end.sigma:g} u(0)={end.u0:.12g} all_ok={pay['all_ok']}")
    return outs


def _sweep_one(sigma, opts):
    cfg, ecfg = domain_config(opts), end_config(opts)
    try:
        return sigma, solve_end(sigma, cfg, ecfg), None
    except NumericalFailure as e:
        return sigma, None, f"{type(e).__name__}: {e}"


def cmd_sweep(opts):
    if opts.get("sigmas") is None:
        raise UsageError("--sigmas is required")
    sigmas = _floats(opts["sigmas"], "sigma list")
    if not sigmas:
        raise UsageError("empty sigma list")
    if any(not (math.isfinite(s) and s > 0) for s in sigmas):
        raise UsageError("sigma must be positive")
    cfg = domain_config(opts)
    jobs = max(1, int(opts.get("jobs") or 1))
    plain_opts = {k: v for k, v in opts.items()}
    if jobs > 1 and len(sigmas) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, sigmas, [plain_opts] * len(sigmas)))
    else:
        results = [_sweep_one(s, plain_opts) for s in sigmas]
    outs = []
    rows = []
    curves = []
    for sigma, end, err in results:   # input order, independent of scheduling
        if end is None:
            rows.append([sigma, float("nan"), "failed", err])
            log.warning("sigma=%g failed: %s", sigma, err)
            continue
        rows.append([sigma, end.u0, "ok", ""])
        curves.append((f"sigma={sigma:g}", end.x, end.u))
        if opts["csv_dir"]:
            p = os.path.join(opts["csv_dir"], f"end_sigma={sigma:g}.csv")
            write_curve_csv(p, _end_curve(end, cfg))
            outs.append(p)
    if opts["csv_dir"]:
        p = os.path.join(opts["csv_dir"], "summary.csv")
        write_table_csv(p, ["sigma", "u0", "status", "note"], rows)
        outs.append(p)
    rc = cfg.cylinder_radius() or None
    if opts["svg"] and curves:
        write_svg(opts["svg"], curves, cylinder_radius=rc, cone_slope=1.0)
        outs.append(opts["svg"])
    if opts["figure"] and curves:
        from .plotting import plot_profiles
        plot_profiles(opts["figure"], curves, rc, 1.0)
        outs.append(opts["figure"])
    u0 = [r[1] for r in rows if r[2] == "ok"]
    ok_s = [r[0] for r in rows if r[2] == "ok"]
    order = np.argsort(ok_s)
    mono = bool(np.all(np.diff(np.asarray(u0)[order]) < 0)) if len(u0) > 1 else True
    pay = {"alpha": cfg.alpha,
           "runs": [{"sigma": r[0], "u0": r[1], "status": r[2], "note": r[3]} for r in rows],
           "u0_decreasing_in_sigma": mono}
    if opts["report"]:
        write_report(opts["report"], "sweep", pay)
        outs.append(opts["report"])
    for r in rows:
        print(f"sigma={r[0]:g} u(0)={r[1]:.12g} {r[2]}")
    if not curves:
        raise NoConvergence("every sigma in the sweep failed")
    return outs


# ---------------------------------------------------------------------------
# geodesic / torus / classify

def _init(text):
    vals = _floats(text, "initial condition")
    if len(vals) != 3:
        raise UsageError("--init takes x,r,theta")
    return tuple(vals)


def _curve_outputs(opts, curve, cfg, kind, payload, label):
    outs = []
    if opts["csv"]:
        write_curve_csv(opts["csv"], curve)
        outs.append(opts["csv"])
    if opts["report"]:
        write_report(opts["report"], kind, payload)
        outs.append(opts["report"])
    rc = cfg.cylinder_radius() or None
    if opts["svg"]:
        write_svg(opts["svg"], [(label, curve.x, curve.r)], cylinder_radius=rc)
        outs.append(opts["svg"])
    if opts["figure"]:
        from .plotting import plot_profiles
        plot_profiles(opts["figure"], [(label, curve.x, curve.r)], rc)
        outs.append(opts["figure"])
    return outs


def cmd_geodesic(opts):
    if opts.get("init") is None:
        raise UsageError("--init is required")
    cfg = domain_config(opts)
    init = _init(opts["init"])
    c = integrate_geodesic(init, float(opts["length"]), Window(), cfg,
                           through_axis=bool(opts["through_axis"]))
    rep = census(c, cfg)
    pay = {"alpha": cfg.alpha, "init": list(init), "length": c.length,
           "termination": c.termination, "samples": len(c.s), "flags": c.flags,
           "census": rep.record()}
    print(f"termination={c.termination} samples={len(c.s)} vertical={rep.n_vertical} "
          f"horizontal={rep.n_horizontal}")
    return _curve_outputs(opts, c, cfg, "geodesic", pay, f"init={opts['init']}")


def cmd_torus(opts):
    cfg = domain_config(opts)
    lo, hi, n = _range(opts["scan"])
    L = float(opts["length"])
    r0, shots, brackets = scan_closed(lo, hi, n, cfg, L)
    scan = [{"r0": s.r0, "residual": s.residual, "reason": s.reason,
             "crossing_r": float(s.curve.r[-1])} for s in shots]
    pay = {"alpha": cfg.alpha, "scan": scan, "brackets": brackets}
    if not brackets:
        if opts["report"]:
            write_report(opts["report"], "torus", pay)
        raise NoConvergence("no sign change of the closure residual in the scan")
    T = find_torus(brackets[0], cfg, max_length=L)
    pay["torus"] = T.record()
    print(f"brackets={len(brackets)} r_inner={T.r_inner:.15g} r_outer={T.r_outer:.15g} "
          f"closure={T.assembly_gap:.3g}")
    return _curve_outputs(opts, T.curve, cfg, "torus", pay, "closed geodesic")


def cmd_classify(opts):
    cfg = domain_config(opts)
    if opts.get("curve"):
        if opts.get("init"):
            raise UsageError("give either --curve or --init")
        c = read_curve_csv(opts["curve"], cfg, closed=bool(opts["closed"]))
        src = {"curve": opts["curve"]}
    elif opts.get("init"):
        init = _init(opts["init"])
        c = integrate_geodesic(init, float(opts["length"]), Window(), cfg, through_axis=True)
        src = {"init": list(init), "length": float(opts["length"])}
    else:
        raise UsageError("--curve or --init is required")
    rep = classify(c, cfg)
    pay = dict(src, alpha=cfg.alpha, termination=c.termination, classification=rep.record())
    outs = []
    if opts["report"]:
        write_report(opts["report"], "classify", pay)
        outs.append(opts["report"])
    extra = f" sigma={rep.sigma_estimate:.10g}" if rep.sigma_estimate is not None else ""
    print(f"verdict={rep.verdict}{extra}")
    return outs


def cmd_linearized(opts):
    cfg = domain_config(opts)
    sol = solve_linearized(cfg.alpha, r_max=float(opts["rmax"]), r_min=float(opts["rmin"]))
    res = linearized_identity_residual(sol)
    lim = limit_check(sol)
    pay = {"alpha": cfg.alpha, "r_max": sol.r_max, "r_min": float(sol.r[0]),
           "defect": sol.defect(), "identity_residual": res,
           "identity_residual_refined": refined_identity_residual(sol),
           "sign_changes": sol.sign_changes(), "zero": sol.zero(),
           "g_min": float(np.min(sol.g)), "g_max": float(np.max(sol.g)),
           "limit": {"r": lim.r, "g": lim.g, "limit_integral": lim.limit_integral,
                     "mismatch": lim.mismatch, "r_dg": lim.r_dg,
                     "pointwise_relation": lim.pointwise, "limit_ok": lim.limit_ok}}
    if opts["sigma_limit"]:
        pay["sigma_limit"] = sigma_limit_check(cfg, end_config(opts), sol=sol).record()
    outs = []
    if opts["csv"]:
        write_table_csv(opts["csv"], ["r", "g", "dg", "ddg"],
                        [list(map(float, row)) for row in zip(sol.r, sol.g, sol.dg, sol.ddg)])
        outs.append(opts["csv"])
    if opts["report"]:
        write_report(opts["report"], "linearized", pay)
        outs.append(opts["report"])
    if opts["figure"]:
        from .plotting import plot_linearized
        plot_linearized(opts["figure"], sol.r, sol.g, sol.zero())
        outs.append(opts["figure"])
    print(f"identity_residual={res:.3e} defect={pay['defect']:.3e} "
          f"sign_changes={pay['sign_changes']} zero={pay['zero']:.12g}")
    return outs


HANDLERS = {"end": cmd_end, "sweep": cmd_sweep, "geodesic": cmd_geodesic, "torus": cmd_torus,
            "classify": cmd_classify, "linearized": cmd_linearized}


def run_command(command, opts):
    """Run a handler with merged options; returns the list of files written."""
    return HANDLERS[command](opts)


def cmd_replay(path):
    man = RunManifest.read(path)
    if man.command not in HANDLERS:
        raise UsageError(f"manifest has unknown command {man.command!r}")
    run_command(man.command, dict(man.config))
    bad = [o["path"] for o in man.outputs
           if not os.path.exists(o["path"]) or sha256_file(o["path"]) != o["sha256"]]
    for o in man.outputs:
        print(f"{'MISMATCH' if o['path'] in bad else 'ok'} {o['path']}")
    if bad:
        raise NumericalFailure(f"{len(bad)} output(s) differ from the manifest")


# ---------------------------------------------------------------------------
# argparse

def _common(p, outputs=("csv", "report", "svg", "figure")):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--n", type=float, help="hypersurface dimension n (alpha = n - 1)")
    g.add_argument("--alpha", type=float, help="alpha = n - 1 directly (any real >= 0)")
    p.add_argument("--config", help="key=value file (flags override it)")
    p.add_argument("--manifest", help="write a run manifest here")
    helps = {"csv": "curve CSV", "report": "JSON report", "svg": "SVG profile plot",
             "figure": "PNG figure (matplotlib)", "csv_dir": "directory for per-run CSVs"}
    for k in outputs:
        p.add_argument("--" + k.replace("_", "-"), dest=k, help=helps[k])


def _flag(p, name, help_):
    p.add_argument(name, action="store_const", const=True, default=None, help=help_)


def build_parser():
    ap = argparse.ArgumentParser(prog="shrinkers",
                                 description="Rotational self-shrinker profile curves.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("end", help="asymptotically conical end u_sigma")
    _common(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--xmax", type=float)
    _flag(p, "--picard", "also run the fixed-point construction and compare")

    p = sub.add_parser("sweep", help="family of ends over several sigma")
    _common(p, ("report", "svg", "figure", "csv_dir"))
    p.add_argument("--sigmas", help="comma separated list")
    p.add_argument("--xmax", type=float)
    p.add_argument("--jobs", type=int, help="parallel worker processes")

    p = sub.add_parser("geodesic", help="integrate one profile curve")
    _common(p)
    p.add_argument("--init", help="x,r,theta")
    p.add_argument("--length", type=float)
    _flag(p, "--through-axis", "continue through r = 0 as the mirror image")

    p = sub.add_parser("torus", help="closed geodesic by shooting from the r-axis")
    _common(p)
    p.add_argument("--scan", help="lo:hi:intervals for r0")
    p.add_argument("--length", type=float, help="arclength budget per shot")

    p = sub.add_parser("classify", help="census and verdict for a curve")
    _common(p, ("report",))
    p.add_argument("--init", help="x,r,theta")
    p.add_argument("--curve", help="curve CSV to classify")
    p.add_argument("--length", type=float)
    _flag(p, "--closed", "treat the CSV curve as closed")

    p = sub.add_parser("linearized", help="linearized equation at the plane")
    _common(p, ("report", "csv", "figure"))
    p.add_argument("--rmax", type=float)
    p.add_argument("--rmin", type=float)
    _flag(p, "--sigma-limit", "compare with the ends for sigma = 4, 8, 16")

    p = sub.add_parser("replay", help="re-run a manifest and verify checksums")
    p.add_argument("manifest")
    return ap


def _setup_logging():
    level = os.environ.get("SHRINKER_LOG", "").strip().lower()
    lv = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(level,
                                                                                 logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=lv, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    t0 = time.perf_counter()
    try:
        if ns.command == "replay":
            cmd_replay(ns.manifest)
            return 0
        d = vars(ns)
        file_cfg = read_config_file(d["config"]) if d.get("config") else {}
        opts = merge_options(ns.command, d, file_cfg)
        outs = run_command(ns.command, opts)
        if d.get("manifest"):
            man = RunManifest.build(ns.command, argv, opts, __version__,
                                    time.perf_counter() - t0, outs)
            man.write(d["manifest"])
    except (UsageError, ConfigError, DomainError) as e:
        print(f"shrinkers: error: {e}", file=sys.stderr)
        return 2
    except NumericalFailure as e:
        print(f"shrinkers: numerical failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
