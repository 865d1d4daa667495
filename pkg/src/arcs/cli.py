"""Command-line front end: ``arcs certify|simulate|sweep|convergence``.

Exit codes
    certify      0 certified with witness, 1 not certified, 2 invalid input
    simulate     0 completed cleanly, 2 config error, 3 suspected blow-up,
                 4 bound violations
    sweep        0 all runs finished (any status), 2 spec error
    convergence  0 observed orders in [1.7, 2.3], 1 otherwise
"""
from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import configparser
import csv
import itertools
import json
import math
import os
import sys

import numpy as np

from . import certifier
from .config import SCHEMA, _typed, read_ini, resolve
from .diagnostics import Monitor, bounds_check, energy_monitor, write_series
from .errors import ArcsError, BetaInfeasible, Infeasible, NotFound
from .snapshots import SnapshotWriter
from .solver import SUSPECTED_BLOWUP, decay_study

EXIT_OK, EXIT_NOT_CERTIFIED, EXIT_INVALID, EXIT_BLOWUP, EXIT_VIOLATION = 0, 1, 2, 3, 4

FORCE_BANNER = ("WARNING: --force-params runs parameters without certification; "
                "results are exploratory and outside the theorem's coverage")


def _threads():
    try:
        return max(1, int(os.environ.get("ARC_THREADS", "1")))
    except ValueError:
        return 1


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path is None:
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(type(o))


# -- certify -----------------------------------------------------------------

def cmd_certify(args) -> int:
    if args.config:
        try:
            cp, lines = read_ini(args.config)
            typed = _typed(cp, lines)
            if args.n is not None:
                typed["model"]["theorem_n"] = args.n
            if args.alpha is not None:
                typed["model"]["alpha"] = args.alpha
            if args.beta is not None:
                typed["model"]["beta"] = args.beta
            cfg = resolve(typed, force_params=True)
        except (ArcsError, OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        problems = [w[len("uncertified: "):] for w in cfg.warnings if w.startswith("uncertified: ")]
        report = {
            "n": cfg.theorem_n, "alpha": cfg.alpha, "beta": cfg.beta,
            "certified": cfg.certified,
            "reasons": problems,
            "certificate": None if cfg.certificate is None else cfg.certificate.as_dict(),
            "witness": None if cfg.witness is None else cfg.witness.as_dict(),
            "aux": cfg.aux.as_dict(),
            "hypotheses": {k: v.as_dict() for k, v in cfg.hypotheses.items()},
        }
        _dump(report)
        return EXIT_OK if cfg.certified else EXIT_NOT_CERTIFIED

    if args.n is None or args.alpha is None or args.beta is None:
        print("error: --n, --alpha and --beta are required without --config", file=sys.stderr)
        return EXIT_INVALID
    n, alpha, beta = args.n, args.alpha, args.beta
    if n < 2 or not (alpha > 0 and beta > 0) or not all(map(math.isfinite, (alpha, beta))):
        print("error: need n >= 2 and finite alpha, beta > 0", file=sys.stderr)
        return EXIT_INVALID

    report = {"n": n, "alpha": alpha, "beta": beta, "certified": False, "reasons": [],
              "certificate": None, "witness": None,
              "aux": {"eta1": None, "eta2": None, "c0": None, "c4": None, "theta": None,
                      "note": "eta1, eta2, c0 and c4 need --config"}}
    try:
        cert = certifier.certify(n, alpha, beta)
        report["certificate"] = cert.as_dict()
        if not cert.feasible:
            report["reasons"].append(f"alpha does not exceed threshold {cert.threshold_star:.10g}")
        else:
            w = certifier.find_witness(n, alpha, beta)
            report["witness"] = w.as_dict()
            report["aux"]["theta"] = certifier.theta_exponent(w.p, n)
            report["certified"] = True
    except BetaInfeasible as exc:
        report["reasons"].append(f"BetaInfeasible: {exc}")
    except NotFound as exc:
        report["reasons"].append(f"NotFound: {exc}")
        report["search_box"] = exc.box
    except Infeasible as exc:
        report["reasons"].append(f"Infeasible: {exc}")
    _dump(report)
    return EXIT_OK if report["certified"] else EXIT_NOT_CERTIFIED


# -- simulate ----------------------------------------------------------------

def simulate(config_path, out_dir=None, force_params=False, overrides=None, quiet=False):
    """Run one configuration end to end; returns (exit_code, summary dict)."""
    try:
        cp, lines = read_ini(config_path)
        typed = _typed(cp, lines)
        cfg = resolve(typed, force_params=force_params)
    except (ArcsError, OSError, ValueError) as exc:
        if not quiet:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID, {"status": "InvalidConfig", "error": str(exc)}

    out = out_dir or cfg.output_dir
    os.makedirs(out, exist_ok=True)
    cfg.output_dir = out
    cfg.write_resolved(os.path.join(out, "resolved.json"))

    monitor = Monitor(cfg.grid, cfg.chi, cfg.xi, cfg.p, cfg.r, cfg.sigma, cfg.coefficients,
                      cfg.scheme.u_floor, cfg.blowup_cap)
    snaps = SnapshotWriter(out, enabled=cfg.snapshots)

    def observer(state):
        monitor(state)
        snaps(state)

    from .solver import run
    try:
        result = run(cfg, observer)
    except ArcsError as exc:
        summary = {"status": "Error", "error": str(exc)}
        _dump(summary, os.path.join(out, "summary.json"))
        return EXIT_INVALID, summary

    write_series(os.path.join(out, "series.csv"), monitor.records)
    snaps.write_manifest()

    violations = []
    for rec, scale in zip(monitor.records, monitor.q_scales):
        violations.extend(bounds_check(rec, cfg.aux))
        if cfg.coefficients is not None and rec.Q_max > 1e-9 * scale:
            violations.append(f"t={rec.t:.6g}: Q_max={rec.Q_max:.6g} > 1e-9*scale")

    recs = monitor.records
    energy = None
    if len(recs) >= 3:
        energy = energy_monitor(monitor.energy_series(), cfg.aux.theta).as_dict()

    if result.status == SUSPECTED_BLOWUP:
        code = EXIT_BLOWUP
    elif violations:
        code = EXIT_VIOLATION
    else:
        code = EXIT_OK

    def sup(name):
        vals = [getattr(r, name) for r in recs]
        vals = [v for v in vals if math.isfinite(v)]
        return max(vals) if vals else None

    summary = {
        "status": result.status,
        "reason": result.reason,
        "exit_code": code,
        "t_final": result.state.t,
        "n_steps": result.n_steps,
        "certified": cfg.certified,
        "suprema": {k: sup(k) for k in ("linf_u", "linf_v", "linf_w", "grad_linf_v",
                                        "grad_linf_w", "energy_p", "Q_max")},
        "mass": {"initial": recs[0].mass_u if recs else None,
                 "total_relative_drift": result.total_mass_drift,
                 "max_step_drift": result.max_step_drift},
        "worst_positivity_ratio": result.worst_positivity,
        "clamped_evaluations": result.clamped_evals + monitor.clamped,
        "energy_monitor": energy,
        "violations": violations,
        "warnings": cfg.warnings,
    }
    _dump(summary, os.path.join(out, "summary.json"))
    if not quiet:
        print(f"{result.status}: t={result.state.t:.6g}, steps={result.n_steps}, "
              f"violations={len(violations)} -> {out}")
    return code, summary


def cmd_simulate(args) -> int:
    if args.force_params:
        print(FORCE_BANNER, file=sys.stderr)
    code, _ = simulate(args.config, args.out, args.force_params)
    return code


# -- sweep -------------------------------------------------------------------

def _parse_params(items):
    params = {}
    for item in items:
        if "=" not in item:
            raise ValueError(f"--param needs key=v1,v2,...: {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        section, _, name = key.rpartition(".")
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ValueError(f"unknown config field {key!r}")
        values = [v.strip() for v in raw.split(",") if v.strip()]
        if not values:
            raise ValueError(f"empty value list for {key!r}")
        params[key] = values
    if not params:
        raise ValueError("sweep needs at least one --param")
    return params


def _sweep_one(job):
    base_path, run_dir, assignment, force = job
    cp, _ = read_ini(base_path)
    for key, value in assignment.items():
        section, _, name = key.rpartition(".")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][name] = value
    os.makedirs(run_dir, exist_ok=True)
    cfg_path = os.path.join(run_dir, "config.ini")
    with open(cfg_path, "w") as fh:
        cp.write(fh)
    try:
        code, summary = simulate(cfg_path, run_dir, force, quiet=True)
    except Exception as exc:  # isolate failures per run
        code, summary = -1, {"status": f"Error: {exc}"}
    sup = summary.get("suprema", {}) if isinstance(summary, dict) else {}
    return {"status": summary.get("status", "Error"), "exit_code": code,
            "sup_linf_u": sup.get("linf_u"), "max_energy_p": sup.get("energy_p")}


def cmd_sweep(args) -> int:
    if args.force_params:
        print(FORCE_BANNER, file=sys.stderr)
    try:
        params = _parse_params(args.param)
        read_ini(args.config)
    except (ArcsError, OSError, ValueError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = args.out
    os.makedirs(out, exist_ok=True)
    keys = list(params)
    combos = list(itertools.product(*(params[k] for k in keys)))
    jobs = [(args.config, os.path.join(out, f"run_{i:03d}"), dict(zip(keys, combo)),
             args.force_params) for i, combo in enumerate(combos)]
    workers = _threads()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]

    fmt = lambda v: "" if v is None else format(v, ".17g")  # noqa: E731
    with open(os.path.join(out, "sweep_summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run"] + keys + ["status", "sup_linf_u", "max_energy_p", "exit_code"])
        for (_, run_dir, assignment, _), res in zip(jobs, results):
            writer.writerow([os.path.basename(run_dir)] + [assignment[k] for k in keys]
                            + [res["status"], fmt(res["sup_linf_u"]), fmt(res["max_energy_p"]),
                               res["exit_code"]])
    print(f"{len(jobs)} runs -> {os.path.join(out, 'sweep_summary.csv')}")
    return EXIT_OK


# -- convergence -------------------------------------------------------------

def cmd_convergence(args) -> int:
    try:
        cells = [int(c) for c in args.cells.split(",") if c.strip()]
        if len(cells) < 2 or any(c < 4 for c in cells):
            raise ValueError("need at least two resolutions with >= 4 cells")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    dt = None if args.dt in (None, "auto") else float(args.dt)
    rows = decay_study(cells, dt=dt, t_end=args.t_end)
    print(f"{'cells':>6} {'h':>12} {'dt':>12} {'Linf error':>14} {'order':>7}")
    orders = []
    for i, row in enumerate(rows):
        order = ""
        if i > 0:
            o = math.log(rows[i - 1]["error"] / row["error"]) / math.log(
                rows[i - 1]["h"] / row["h"])
            orders.append(o)
            order = f"{o:7.3f}"
        print(f"{row['cells']:>6d} {row['h']:>12.5e} {row['dt']:>12.5e} "
              f"{row['error']:>14.6e} {order:>7}")
    ok = all(1.7 <= o <= 2.3 for o in orders)
    print("orders within [1.7, 2.3]" if ok else "orders outside [1.7, 2.3]")
    return EXIT_OK if ok else EXIT_NOT_CERTIFIED


def build_parser():
    ap = argparse.ArgumentParser(prog="arcs", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="check the (alpha, beta) condition and search weights")
    c.add_argument("--n", type=int)
    c.add_argument("--alpha", type=float)
    c.add_argument("--beta", type=float)
    c.add_argument("--config", help="run config; adds eta1, eta2, c0, c4 and hypothesis checks")
    c.set_defaults(func=cmd_certify)

    s = sub.add_parser("simulate", help="run one configuration")
    s.add_argument("config")
    s.add_argument("--out", help="output directory (default: [output] directory)")
    s.add_argument("--force-params", action="store_true",
                   help="run even if the parameters are not certified")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="Cartesian parameter sweep over config fields")
    w.add_argument("config")
    w.add_argument("--param", action="append", default=[],
                   help="section.key=v1,v2,... (repeatable)")
    w.add_argument("--out", default="sweep_out")
    w.add_argument("--force-params", action="store_true")
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("convergence", help="spatial order on the analytic decay solution")
    v.add_argument("--cells", default="32,64,128")
    v.add_argument("--dt", default=None, help="fixed time step (default: 0.25 h^2)")
    v.add_argument("--t-end", type=float, default=0.1)
    v.set_defaults(func=cmd_convergence)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
