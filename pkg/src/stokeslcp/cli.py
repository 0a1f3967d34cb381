"""Command line: run, bench and analyze."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np


def _print_rows(rows, out=None):
    if not rows:
        return
    out = out or sys.stdout
    w = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: format(v, ".6g") if isinstance(v, float) else v for k, v in r.items()})


def cmd_run(args):
    from .sim import SimulationConfig, run_simulation
    cfg = SimulationConfig.from_file(args.config)
    if args.output:
        cfg.output_dir = args.output
    if not cfg.output_dir:
        cfg.output_dir = os.path.splitext(os.path.basename(args.config))[0] + "_out"
    recs, _ = run_simulation(cfg, callback=(lambda r: print(
        f"step {r.step} n_c {r.stats['n_constraints']} bbpgd {r.stats['solver_steps']} "
        f"mvops {r.stats['mvops']} phi {float(r.stats['residual']):.3e}")) if args.verbose else None)
    print(f"wrote {len(recs)} records to {cfg.output_dir}")


def cmd_bench(args):
    from . import bench
    from .mobility import make_backend
    s = args.suite
    if s == "lcp":
        _print_rows([bench.lcp_suite(instances=args.instances, seed=args.seed)])
    elif s == "mobility":
        rows = [bench.single_sphere_anchor(make_backend(b)) for b in ("local", "rpy")]
        rows.append(bench.single_sphere_anchor(make_backend("bi", p=6, tol=1e-10)))
        _print_rows(rows)
        print()
        _print_rows(bench.two_sphere_convergence(gaps=(0.5, 0.2), orders=(4, 8), p_ref=12))
    elif s == "rollover":
        sig = bench.rollover_run(backend=args.backend, dt=args.dt, steps=args.steps)
        sig.pop("records")
        _print_rows([sig])
    elif s == "timestep":
        res = bench.timestep_study(backend=args.backend)
        _print_rows([{"dt": dt, "eps2": e} for dt, e in res["errors"].items()])
        print(f"ratio,{res['ratio']:.6g}")
    elif s == "tolerance":
        res = bench.tolerance_study(backend=args.backend)
        _print_rows([{"eps_tol": t, "mean_bbpgd_steps": v} for t, v in res["mean_steps"].items()])
        print(f"eps2_1e-3_vs_1e-6,{res['eps2']:.6g}")
    else:
        raise ValueError(f"unknown suite {s!r}")


def cmd_analyze(args):
    from . import analysis
    kind = args.kind
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        if kind == "rotlet-disk":
            from .rotlet import RotletDiskModel, fit_edge_log, u_theta_pv
            model = RotletDiskModel(R=args.R)
            s = args.R * (1 - np.geomspace(0.05, 0.001, args.samples))
            u = np.array([u_theta_pv(model, x) for x in s])
            (A, B), res = fit_edge_log(s, u, args.R)
            _print_rows([{"s": float(a), "u_theta": float(b)} for a, b in zip(s, u)], out)
            out.write(f"# A,{A:.17g}\n# B,{B:.17g}\n# residual_over_range,{res / np.ptp(u):.6g}\n")
            return
        if not args.records:
            raise ValueError("--records is required for this analysis")
        recs = analysis.load_records(args.records)
        if kind == "veldist":
            d = analysis.analyze_velocity_distribution(recs, r_bins=args.bins, u_bins=2 * args.bins)
            rows = []
            for i in range(d.P.shape[0]):
                for k in range(d.P.shape[1]):
                    rows.append({"r_lo": float(d.r_edges[i]), "r_hi": float(d.r_edges[i + 1]),
                                 "u_lo": float(d.u_edges[k]), "u_hi": float(d.u_edges[k + 1]),
                                 "P": float(d.P[i, k])})
            _print_rows(rows, out)
            corr, slope = analysis.ridge_correlation(d)
            out.write(f"# ridge_correlation,{corr:.6g}\n# ridge_slope,{slope:.6g}\n")
        elif kind == "lifetime":
            k, pa, pc = analysis.constraint_lifetime_histogram(recs)
            _print_rows([{"k": int(a), "P_A": float(b), "P_Ac": float(c)}
                         for a, b, c in zip(k, pa, pc)], out)
        elif kind == "bbpgd":
            _print_rows([{"step": r.step, "n_constraints": int(r.stats["n_constraints"]),
                          "n_active": int(r.stats["n_active"]),
                          "bbpgd_steps": int(r.stats["solver_steps"]),
                          "mvops": int(r.stats["mvops"])} for r in recs], out)
            summary = analysis.solver_summary(recs)
            out.write("".join(f"# {k},{v:.6g}\n" for k, v in summary.items()))
    finally:
        if args.out:
            out.close()


def build_parser():
    ap = argparse.ArgumentParser(prog="stokeslcp", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a simulation from a key = value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="output directory (overrides output_dir in the config)")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="benchmark suites")
    b.add_argument("--suite", required=True,
                   choices=["lcp", "mobility", "rollover", "timestep", "tolerance"])
    b.add_argument("--backend", default="rpy", choices=["local", "rpy", "bi"])
    b.add_argument("--instances", type=int, default=200)
    b.add_argument("--dt", type=float, default=0.1)
    b.add_argument("--steps", type=int, default=1000)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("analyze", help="post-process simulation records")
    a.add_argument("--records", help="directory written by `run`")
    a.add_argument("--kind", required=True, choices=["veldist", "lifetime", "bbpgd", "rotlet-disk"])
    a.add_argument("--out", help="write CSV here instead of stdout")
    a.add_argument("--bins", type=int, default=20)
    a.add_argument("--R", type=float, default=1.0, help="disk radius for rotlet-disk")
    a.add_argument("--samples", type=int, default=16)
    a.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
