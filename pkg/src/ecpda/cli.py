"""Command-line front end: ``ecpda {gen,solve,oracle,sweep,bench,phase}``.

Exit codes: 0 success, 1 solver/oracle infeasibility, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from scipy import stats

from .annealing import ScheduleConfig, best_over_kmax, write_trace_csv
from .lb import run_ecp_lb
from .ll import CENTROID_RULES, run_ecp_ll
from .network import (
    InstanceError,
    generate_gaussian_instance,
    load_instance,
    placement_to_dict,
    save_instance,
    save_placement,
)
from .oracle import InstanceTooLarge, lb_brute_force, ll_brute_force
from .phase import find_critical_temperatures

log = logging.getLogger("ecpda")

SWEEP_PARAMS = ("gamma", "k_max", "n", "clusters")


class UsageError(Exception):
    pass


def _solver(mode, centroid_rule="exact"):
    if mode == "lb":
        return run_ecp_lb
    return lambda inst, cfg, seed: run_ecp_ll(inst, cfg, seed, centroid_rule)


def _run(mode, centroid_rule, instance, config, seed):
    return _solver(mode, centroid_rule)(instance, config, seed)


def _config(args) -> ScheduleConfig:
    return ScheduleConfig(
        t_max=args.t_max,
        t_min=args.t_min,
        alpha=args.alpha,
        k_max=args.k_max,
        max_iters_per_temperature=args.max_iters,
    )


def _load(path, gamma=None):
    try:
        inst = load_instance(path)
    except FileNotFoundError as exc:
        raise UsageError(f"instance file not found: {path}") from exc
    return inst if gamma is None else inst.with_gamma(gamma)


def _map(fn, items, jobs):
    """Ordered map, in a process pool when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _emit_table(rows, header, args, stream=None):
    stream = stream or sys.stdout
    if args.format == "json":
        text = json.dumps([dict(zip(header, r)) for r in rows], indent=1) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in r])
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        stream.write(text)


# --- subcommands ------------------------------------------------------------


def cmd_generate(args):
    if args.k < 1 or args.n < args.k or args.d < 1:
        raise UsageError("need --k >= 1, --n >= --k and --d >= 1")
    inst = generate_gaussian_instance(args.k, args.n, args.d, seed=args.seed,
                                      cluster_spread=args.spread, center_box=tuple(args.box),
                                      gamma=args.gamma or 0.0)
    if args.out:
        save_instance(inst, args.out)
    else:
        from .network import instance_to_dict
        sys.stdout.write(json.dumps(instance_to_dict(inst), indent=1) + "\n")
    return 0


def cmd_solve(args):
    inst = _load(args.instance, args.gamma)
    config = _config(args)
    start = time.perf_counter()
    result = _run(args.mode, args.centroid_rule, inst, config, args.seed)
    elapsed = time.perf_counter() - start
    placement = result.placement
    if args.out:
        save_placement(placement, args.out)
    else:
        sys.stdout.write(json.dumps(placement_to_dict(placement), indent=1) + "\n")
    if args.trace:
        write_trace_csv(result.trace, args.trace)
    print(f"{args.mode}: {len(placement.controllers)} controller(s), objective "
          f"{placement.objective.total:.6g} (unprojected {result.soft_objective.total:.6g}), "
          f"{elapsed:.3f}s", file=sys.stderr)
    return 0


def cmd_oracle(args):
    inst = _load(args.instance, args.gamma)
    brute = lb_brute_force if args.mode == "lb" else ll_brute_force
    cap = args.max_controllers
    report = brute(inst, cap)
    if args.out:
        save_placement(report.placement, args.out)
    else:
        sys.stdout.write(json.dumps(placement_to_dict(report.placement), indent=1) + "\n")
    config = _config(args)
    if cap is not None:
        config = replace(config, k_max=cap)
    solved = _run(args.mode, args.centroid_rule, inst, config, args.seed).placement.objective.total
    ratio = solved / report.objective if report.objective > 0 else (1.0 if solved == 0 else float("inf"))
    print(f"{args.mode}: solver {solved:.6g} oracle {report.objective:.6g} ratio {ratio:.6f} "
          f"({report.subsets} subsets, {report.seconds:.3f}s)", file=sys.stderr)
    return 0


def _parse_values(param, text):
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("empty --values list")
    conv = float if param == "gamma" else int
    try:
        return [conv(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad --values: {exc}") from exc


def _sweep_point(job):
    param, value, base, gen, mode, rule, config, seed = job
    if param in ("n", "clusters"):
        k = value if param == "clusters" else gen["k"]
        n = value if param == "n" else gen["n"]
        inst = generate_gaussian_instance(k, n, gen["d"], seed=seed, cluster_spread=gen["spread"],
                                          center_box=gen["box"], gamma=gen["gamma"])
    else:
        inst = base.with_gamma(value) if param == "gamma" else base
    if param == "k_max":
        config = replace(config, k_max=value)
    start = time.perf_counter()
    result = _run(mode, rule, inst, config, seed)
    elapsed = time.perf_counter() - start
    obj = result.placement.objective.total
    return value, obj, len(result.placement.controllers), elapsed


def _generator_spec(args):
    return {"k": args.k, "n": args.n, "d": args.d, "spread": args.spread,
            "box": tuple(args.box), "gamma": args.gamma if args.gamma is not None else 0.0}


def cmd_sweep(args):
    values = _parse_values(args.param, args.values)
    base = None
    if args.param in ("gamma", "k_max"):
        if args.instance:
            base = _load(args.instance, args.gamma)
        else:
            base = generate_gaussian_instance(args.k, args.n, args.d, seed=args.seed,
                                              cluster_spread=args.spread, center_box=tuple(args.box),
                                              gamma=args.gamma or 0.0)
    config = _config(args)
    jobs = [(args.param, v, base, _generator_spec(args), args.mode, args.centroid_rule, config,
             args.seed) for v in values]
    rows = _map(_sweep_point, jobs, args.jobs)
    header = [args.param, "objective", "controllers", "wall_time"]
    if args.no_timing:
        rows = [r[:3] for r in rows]
        header = header[:3]
    _emit_table(rows, header, args)
    if args.param == "k_max":
        best = min(rows, key=lambda r: (r[1], r[0]))
        print(f"best k_max={best[0]} objective={best[1]:.6g}", file=sys.stderr)
    return 0


def _bench_point(job):
    n, k, mode, rule, config, seed, repeats, gamma, d = job
    times, first = [], None
    for r in range(repeats):
        inst = generate_gaussian_instance(k, n, d, seed=seed + r, gamma=gamma)
        start = time.perf_counter()
        result = _run(mode, rule, inst, config, seed + r)
        times.append(time.perf_counter() - start)
        if first is None:
            first = result.placement
    return n, k, mode, float(np.mean(times)), first.objective.total, len(first.controllers)


def linear_fit(ns, times):
    """Least-squares line through (N, wall time); returns (slope, intercept, r_squared)."""
    fit = stats.linregress(np.asarray(ns, float), np.asarray(times, float))
    return fit.slope, fit.intercept, fit.rvalue ** 2


def run_bench(n_grid, k_grid, mode="ll", config=ScheduleConfig(), seed=0, repeats=1, gamma=0.1,
              d=2, jobs=1, centroid_rule="exact"):
    points = [(n, k, mode, centroid_rule, config, seed, repeats, gamma, d)
              for k in k_grid for n in n_grid]
    return _map(_bench_point, points, jobs)


def cmd_bench(args):
    n_grid = _parse_values("n", args.n_grid)
    k_grid = _parse_values("clusters", args.k_grid)
    config = _config(args)
    rows = run_bench(n_grid, k_grid, args.mode, config, args.seed, args.repeats,
                     args.gamma if args.gamma is not None else 0.1, args.d, args.jobs,
                     args.centroid_rule)
    _emit_table(rows, ["n", "clusters", "solver", "wall_time", "objective", "controllers"], args)
    for k in k_grid:
        sub = [r for r in rows if r[1] == k]
        if len(sub) < 2:
            print(f"K={k}: single grid point, linear fit skipped", file=sys.stderr)
            continue
        slope, icpt, r2 = linear_fit([r[0] for r in sub], [r[3] for r in sub])
        print(f"K={k}: wall_time = {icpt:.4g} + {slope:.4g}*N, R^2 = {r2:.4f}", file=sys.stderr)
    return 0


def cmd_phase(args):
    if args.instance:
        inst = _load(args.instance, args.gamma)
    else:
        inst = generate_gaussian_instance(args.k, args.n, args.d, seed=args.seed,
                                          cluster_spread=args.spread, center_box=tuple(args.box),
                                          gamma=args.gamma or 0.0)
    config = _config(args)
    sched = config.resolve(inst)
    grid = np.geomspace(sched.t_max, sched.t_min, args.grid_points)
    result = find_critical_temperatures(inst, config, inst.gamma, grid, seed=args.seed)
    rows = list(result.rows())
    _emit_table(rows, ["temperature", "det", "effective_centroids"], args)
    if args.verbose:
        for t, det, sym in zip(result.temperatures, result.dets, result.sym_dets):
            print(f"T={t:.6g} det={det:.6g} det_sym={sym:.6g}", file=sys.stderr)
    if result.critical_temperatures:
        for t in result.critical_temperatures:
            print(f"critical temperature: {t:.6g}", file=sys.stderr)
    else:
        print("none detected", file=sys.stderr)
    return 0


# --- parser -------------------------------------------------------------------


def _add_gen_args(p, required=False):
    p.add_argument("--k", type=int, default=3, required=required, help="number of Gaussian clusters")
    p.add_argument("--n", type=int, default=60, help="number of nodes")
    p.add_argument("--d", type=int, default=2, help="dimension")
    p.add_argument("--spread", type=float, default=0.5, help="cluster standard deviation")
    p.add_argument("--box", type=float, nargs=2, default=(0.0, 10.0), metavar=("LO", "HI"))


def _add_solver_args(p):
    p.add_argument("--mode", choices=("ll", "lb"), default="ll")
    p.add_argument("--k-max", dest="k_max", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--t-min", dest="t_min", type=float, default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=100,
                   help="sweep limit per temperature")
    p.add_argument("--centroid-rule", choices=CENTROID_RULES, default="exact",
                   help="leader-less centroid update (exact free-energy minimizer or unweighted system)")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--gamma", type=float, default=None, help="override coupling weight")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ecpda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a Gaussian instance")
    _add_gen_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", parents=[common], help="anneal a placement")
    p.add_argument("instance")
    p.add_argument("--trace", default=None, help="write the annealing trace CSV here")
    _add_solver_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", parents=[common], help="exhaustive optimum and solver ratio")
    p.add_argument("instance")
    p.add_argument("--max-controllers", dest="max_controllers", type=int, default=None)
    _add_solver_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    p.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--instance", default=None, help="base instance (gamma/k_max sweeps)")
    p.add_argument("--no-timing", dest="no_timing", action="store_true",
                   help="omit the wall_time column")
    _add_gen_args(p)
    _add_solver_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", parents=[common], help="runtime scaling over an (N, K) grid")
    p.add_argument("--n-grid", dest="n_grid", default="250,500,1000,2000")
    p.add_argument("--k-grid", dest="k_grid", default="4")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--repeats", type=int, default=3, help="instances averaged per grid point")
    _add_solver_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("phase", parents=[common], help="critical-temperature scan")
    p.add_argument("--instance", default=None)
    p.add_argument("--grid-points", dest="grid_points", type=int, default=64)
    _add_gen_args(p)
    _add_solver_args(p)
    p.set_defaults(func=cmd_phase)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InstanceTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InstanceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
