"""Command line front end.

Subcommands
-----------
simulate    run a scenario file or preset, optionally writing the trace CSV
reproduce   run a named preset and write its trace CSV
lmi         scan a scalar gain range for certificate feasibility
sweep       re-run a scenario over a grid of one parameter, summary CSV out
synthesize  search for a certificate and print/save it

Exit codes: 0 success, 1 error (bad input, infeasible search), 2 completed
run with a constraint violation.  ``ERG_NUM_THREADS`` caps sweep parallelism.
"""

import argparse
import json
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .erg import run_scenario
from .errors import ErgDelayError, InfeasibleError
from .model import PrimaryGain
from .scenario import (
    is_preset,
    load_scenario,
    preset_dict,
    preset_names,
    preset_scenario,
    scenario_from_dict,
    with_overrides,
)
from .stability import VARIANTS, lmi_margin, optimize_p_volume, synthesize

VIOLATION_TOL = -1e-6


def current_threads():
    """Worker cap for sweeps, from ERG_NUM_THREADS (default: up to 8 cores)."""
    raw = os.environ.get("ERG_NUM_THREADS")
    if raw is not None:
        try:
            return max(int(raw), 1)
        except ValueError:
            raise ErgDelayError(
                f"ERG_NUM_THREADS must be an integer, got {raw!r}"
            ) from None
    return min(os.cpu_count() or 1, 8)


def _load(target, seed=None):
    if os.path.exists(target):
        return load_scenario(target, seed=seed)
    if is_preset(target):
        return scenario_from_dict(
            preset_dict(target), source=f"preset:{target}", seed=seed
        )
    raise ErgDelayError(
        f"{target!r} is neither a scenario file nor a preset "
        f"(presets: {', '.join(preset_names())})"
    )


def _print_summary(trace, name, quiet):
    if quiet:
        return
    s = trace.summary()
    print(f"run {name}: {len(trace.t)} rows")
    print(
        "  max_x={max_x:.6g}  settling_time={settling_time:.6g}  "
        "min_residual={min_residual:.6g}  min_delta={min_delta:.6g}  "
        "final_x={final_x:.6g}".format(**s)
    )


def cmd_simulate(args):
    scenario = _load(args.scenario, seed=args.seed)
    scenario = with_overrides(
        scenario, dt=args.dt, duration=args.duration, out=args.out
    )
    trace = run_scenario(scenario)
    if scenario.output.path:
        trace.to_csv(scenario.output.path, decimation=scenario.output.decimation)
        if not args.quiet:
            print(f"trace written to {scenario.output.path}")
    _print_summary(trace, scenario.name, args.quiet)
    if float(trace.residuals.min()) < VIOLATION_TOL:
        if not args.quiet:
            print(
                f"CONSTRAINT VIOLATION: min residual "
                f"{float(trace.residuals.min()):.6g}"
            )
        return 2
    return 0


def cmd_reproduce(args):
    scenario = preset_scenario(args.name)
    out = args.out or f"{scenario.name}_trace.csv"
    trace = run_scenario(scenario)
    trace.to_csv(out, decimation=scenario.output.decimation)
    if not args.quiet:
        print(f"trace written to {out}")
    _print_summary(trace, scenario.name, args.quiet)
    if float(trace.residuals.min()) < VIOLATION_TOL:
        if not args.quiet:
            print(
                f"CONSTRAINT VIOLATION: min residual "
                f"{float(trace.residuals.min()):.6g}"
            )
        return 2
    return 0


def _scan_point(variant, sys, k, seed, restarts, max_iter):
    gain = PrimaryGain(K=[[k]])
    try:
        cert = synthesize(
            variant, sys, gain, seed, restarts=restarts, max_iter=max_iter
        )
        return True, lmi_margin(cert, sys, gain)
    except InfeasibleError:
        return False, None


def cmd_lmi(args):
    scenario = _load(args.scenario, seed=args.seed)
    sys = scenario.system
    if sys.n != 1 or sys.m != 1:
        raise ErgDelayError("the lmi gain scan supports scalar loops only")
    if args.steps < 2:
        raise ErgDelayError("--steps must be at least 2")
    ks = np.linspace(args.k_min, args.k_max, args.steps)
    seed = 0 if args.seed is None else args.seed
    budget = dict(restarts=args.restarts, max_iter=args.max_iter)
    results = []
    for k in ks:
        ok, margin = _scan_point(args.variant, sys, float(k), seed, **budget)
        results.append(ok)
        if not args.quiet:
            tag = f"feasible, margin {margin:.4g}" if ok else "no certificate found"
            print(f"k = {k:+.4f}: {tag}")
    boundaries = []
    for a, b in zip(range(len(ks) - 1), range(1, len(ks))):
        if results[a] == results[b]:
            continue
        lo, hi = float(ks[a]), float(ks[b])
        lo_ok = results[a]
        while abs(hi - lo) > 0.01:
            mid = 0.5 * (lo + hi)
            ok, _ = _scan_point(args.variant, sys, mid, seed, **budget)
            if ok == lo_ok:
                lo = mid
            else:
                hi = mid
        boundaries.append(0.5 * (lo + hi))
    for b in boundaries:
        print(f"boundary: k = {b:+.4f}")
    if not args.quiet:
        print(
            "note: feasibility is search based; 'no certificate found' is "
            "not a proof of infeasibility"
        )
    return 0


def _set_in_dict(data, path, value):
    tokens = path.split(".")
    node = data
    for tok in tokens[:-1]:
        if isinstance(node, list):
            node = node[int(tok)]
        elif isinstance(node, dict) and tok in node:
            node = node[tok]
        else:
            raise ErgDelayError(f"sweep param path {path!r}: {tok!r} not found")
    last = tokens[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif isinstance(node, dict) and last in node:
        node[last] = value
    else:
        raise ErgDelayError(f"sweep param path {path!r}: {last!r} not found")


def cmd_sweep(args):
    if os.path.exists(args.scenario):
        with open(args.scenario) as fh:
            base = json.load(fh)
    elif is_preset(args.scenario):
        base = preset_dict(args.scenario)
    else:
        raise ErgDelayError(f"{args.scenario!r} is neither a file nor a preset")
    try:
        grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
    except ValueError as exc:
        raise ErgDelayError(f"bad --grid value: {exc}") from None

    def one(value):
        data = json.loads(json.dumps(base))
        _set_in_dict(data, args.param, value)
        scenario = scenario_from_dict(
            data, source=f"sweep:{args.param}={value:g}", seed=args.seed
        )
        trace = run_scenario(scenario)
        return trace.summary() | {"value": value}

    workers = current_threads()
    if len(grid) == 0:
        rows = []
    elif workers == 1 or len(grid) == 1:
        rows = [one(v) for v in grid]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(grid))) as pool:
            rows = list(pool.map(one, grid))

    header = ["param", "value", "max_x", "settling_time", "min_residual",
              "min_delta", "final_x", "violated"]
    lines = [",".join(header)]
    for row in rows:
        violated = 1.0 if row["min_residual"] < VIOLATION_TOL else 0.0
        lines.append(",".join(
            [args.param]
            + [repr(float(row[key])) for key in header[1:-1]]
            + [repr(violated)]
        ))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        if not args.quiet:
            print(f"sweep written to {args.out}")
    if not args.quiet:
        print(text, end="")
    return 0


def cmd_synthesize(args):
    scenario = _load(args.scenario)
    seed = 0 if args.seed is None else args.seed
    budget = dict(restarts=args.restarts, max_iter=args.max_iter)
    if args.objective == "margin":
        cert = synthesize(
            args.variant, scenario.system, scenario.gain, seed, **budget
        )
    else:
        cert = optimize_p_volume(
            scenario.constraints, scenario.system, scenario.gain,
            args.variant, seed, **budget
        )
    margin = lmi_margin(cert, scenario.system, scenario.gain)
    payload = cert.to_dict()
    if not args.quiet:
        print(f"{args.variant} certificate found, margin {margin:.6g}")
        print(json.dumps(payload, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
        if not args.quiet:
            print(f"certificate written to {args.out}")
    return 0


def _add_common(sub):
    sub.add_argument("--quiet", action="store_true", help="suppress chatter")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ergdelay",
        description="Constrained reference governing for input-delayed loops",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="run a scenario file or preset")
    p.add_argument("scenario", help="scenario JSON path or preset name")
    p.add_argument("--out", help="write the trace CSV here")
    p.add_argument("--dt", type=float, help="override the integration step")
    p.add_argument("--duration", type=float, help="override the run length")
    p.add_argument("--seed", type=int, help="override synthesis seeds")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("reproduce", help="run a named preset, write its trace")
    p.add_argument("name", help=f"preset name ({', '.join(preset_names())})")
    p.add_argument("--out", help="trace CSV path (default <name>_trace.csv)")
    _add_common(p)
    p.set_defaults(func=cmd_reproduce)

    p = subs.add_parser("lmi", help="scan a scalar gain range for feasibility")
    p.add_argument("scenario", help="scenario JSON path or preset name")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--k-min", type=float, default=-2.0)
    p.add_argument("--k-max", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=30,
                   help="search restarts per scan point")
    p.add_argument("--max-iter", type=int, default=200,
                   help="simplex iterations per restart")
    _add_common(p)
    p.set_defaults(func=cmd_lmi)

    p = subs.add_parser("sweep", help="re-run a scenario over a parameter grid")
    p.add_argument("scenario", help="scenario JSON path or preset name")
    p.add_argument("--param", required=True,
                   help="dotted path into the scenario, e.g. erg.kappa1")
    p.add_argument("--grid", required=True, help="comma separated values")
    p.add_argument("--out", help="write the summary CSV here")
    p.add_argument("--seed", type=int, help="override synthesis seeds")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("synthesize", help="search for a certificate")
    p.add_argument("scenario", help="scenario JSON path or preset name")
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--objective", choices=("margin", "volume"),
                   default="margin")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=200)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--out", help="write the certificate JSON here")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ErgDelayError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


def app():
    raise SystemExit(main())
