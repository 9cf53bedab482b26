"""Command-line entry point.

    capbound run <scenario.json> [--csv out.csv]
    capbound sweep <scenario.json> -o <out.csv>
    capbound validate <scenario.json>
    capbound kernel-psi <scenario.json>

Exit codes: 0 success, 1 bad scenario or usage, 2 infeasible constraints,
3 numerical failure. ``CAPBOUND_THREADS`` caps worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import scenario as scn
from .errors import CapboundError, InfeasibleConstraints, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


def _workers() -> int:
    env = os.environ.get("CAPBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    return f"{float(x):.10g}"


def report(sc: scn.ScenarioModel, res: scn.Result, wall: float) -> dict:
    return {
        "scenario": sc.name,
        "bound": sc.bound.type,
        "bound_value_nats": res.bound_value_nats,
        "v": res.v,
        "theta_star": res.theta_star,
        **res.extras,
        "diagnostics": res.diagnostics,
        "wall_time": wall,
    }


def _point(args):
    data, var, value = args
    sc = scn.parse(data)
    return scn.evaluate_point(sc, None if var is None else {var: value})


def sweep_rows(sc: scn.ScenarioModel, workers: int | None = None) -> list[tuple[float, scn.Result]]:
    if sc.sweep is None:
        raise scn.ScenarioError("sweep: the scenario has no sweep block")
    grid = sc.sweep.values()
    var = sc.sweep.variable
    data = sc.model_dump(by_alias=True)
    jobs = [(data, var, g) for g in grid]
    workers = min(workers or _workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, jobs))
    else:
        results = [_point(j) for j in jobs]
    return list(zip(grid, results))


def write_csv(path, var: str, rows) -> None:
    n_theta = max((len(r.theta_star) for _, r in rows), default=0)
    extras = sorted({k for _, r in rows for k in r.extras})
    header = ["sweep_var", "value", "bound_nats", "v_nats"] + \
        [f"theta_star_{i + 1}" for i in range(n_theta)] + extras
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for g, r in rows:
            theta = list(r.theta_star) + [None] * (n_theta - len(r.theta_star))
            w.writerow([var, _fmt(g), _fmt(r.bound_value_nats), _fmt(r.v)] + [_fmt(t) for t in theta]
                       + [_fmt(r.extras.get(k)) for k in extras])


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, allow_nan=True)
    sys.stdout.write("\n")


def cmd_run(args) -> int:
    sc = scn.load(args.scenario)
    t0 = time.perf_counter()
    res = scn.evaluate_point(sc)
    _emit(report(sc, res, time.perf_counter() - t0))
    if args.csv:
        write_csv(args.csv, "", [(float("nan"), res)])
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = scn.load(args.scenario)
    t0 = time.perf_counter()
    rows = sweep_rows(sc)
    write_csv(args.output, sc.sweep.variable, rows)
    _emit({"scenario": sc.name, "rows": len(rows), "output": args.output,
           "wall_time": time.perf_counter() - t0})
    return EXIT_OK


def _with_bound(sc: scn.ScenarioModel, kind: str) -> scn.ScenarioModel:
    data = sc.model_dump(by_alias=True)
    data["bound"]["type"] = kind
    data["extra_bounds"] = []
    return scn.parse(data)


def cmd_validate(args) -> int:
    sc = _with_bound(scn.load(args.scenario), "validate")
    t0 = time.perf_counter()
    res = scn.evaluate_point(sc)
    _emit(report(sc, res, time.perf_counter() - t0))
    return EXIT_OK


def cmd_kernel_psi(args) -> int:
    sc = _with_bound(scn.load(args.scenario), "kernel-psi")
    t0 = time.perf_counter()
    res = scn.evaluate_point(sc)
    _emit(report(sc, res, time.perf_counter() - t0))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capbound",
                                description="Capacity lower bounds for Gaussian channels with input constraints.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="evaluate one scenario and print a JSON report")
    r.add_argument("scenario")
    r.add_argument("--csv", help="also write the result as a one-row CSV")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="evaluate the sweep grid and write a CSV")
    s.add_argument("scenario")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("validate", help="Monte-Carlo volume check against the volume exponent")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    k = sub.add_parser("kernel-psi", help="log spectral radius bounds for a sliding-window kernel")
    k.add_argument("scenario")
    k.set_defaults(func=cmd_kernel_psi)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scn.ScenarioError as exc:
        print(f"capbound: scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleConstraints as exc:
        print(f"capbound: infeasible constraints [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericalError as exc:
        print(f"capbound: numerical failure [{_where(exc)}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CapboundError, ValueError) as exc:
        print(f"capbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _where(exc: BaseException) -> str:
    """Module in which the exception was raised."""
    tb = exc.__traceback__
    mod = "capbound"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("capbound."):
            mod = name
        tb = tb.tb_next
    return mod


if __name__ == "__main__":
    sys.exit(main())
