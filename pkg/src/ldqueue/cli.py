"""Command-line front end.

Subcommands map one-to-one onto library operations:

  psi       evaluate the arrival exponent psi(theta), optionally truncated
  simulate  run the scaled queue, write an event-log CSV
  surface   build the occupancy surface from an event-log CSV
  rate      evaluate a rate functional (poisson | finite-dim)
  overflow  solve the loss-queue overflow path problem
  ruin      solve the whole-life insurance ruin path problem
  verify    run a verification harness (decay | marginal | cross)

Distribution specs are JSON objects:

  {"kind": "uniform", "a": 0, "b": 1}
  {"kind": "exponential", "rate": 1}
  {"kind": "gamma", "shape": 2, "rate": 2}           (arrivals only)
  {"kind": "deterministic", "value": 1}

Flags override values from --config (a JSON file of flag-name: value).
Outputs land in --outdir (default: $LDQUEUE_OUTDIR or the working
directory).  Exit codes: 0 ok, 2 config error, 3 infeasible problem,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    GridError,
    InfeasibleError,
    InsufficientHitsError,
    LdqueueError,
    PartitionError,
    RangeError,
)
from .laws import renewal_from_spec, service_from_spec
from .psi import PsiEvaluator, psi_n, psi_n_truncated
from .rates import finite_dim_rate_detailed, poisson_rate
from .serialize import (
    dump_json,
    json_line,
    read_events_csv,
    read_increments_csv,
    read_tilt_csv,
    surface_to_json_dict,
    write_decay_csv,
    write_events_csv,
    write_surface_csv,
    write_tilt_csv,
)
from .simulate import SurfaceGrid, build_surface, simulate
from .solvers import (
    OverflowProblem,
    RuinProblem,
    solve_overflow,
    solve_ruin,
    whole_life_payoffs,
)
from .verify import (
    QueueLevelEvent,
    decay_curve,
    marginal_distribution_check,
    nested_partitions,
    rate_cross_check,
)

_EXIT_CONFIG, _EXIT_INFEASIBLE, _EXIT_NUMERIC = 2, 3, 4

# flags that must be present after merging the config file
_REQUIRED = {
    "psi": ("theta",),
    "simulate": ("arrival", "service", "lam", "T"),
    "surface": ("events", "lam", "T"),
    "rate": ("service", "T"),
    "overflow": ("x", "T"),
    "ruin": ("b", "p", "x", "T"),
    "verify": ("check",),
}


def _dist(value):
    if isinstance(value, dict):
        return value
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad distribution spec {value!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="ldqueue", description=__doc__,
                                  formatter_class=argparse.RawDescriptionHelpFormatter)
    top.add_argument("--config", help="JSON file of defaults; flags override")
    top.add_argument("--outdir", help="output directory "
                                      "(default $LDQUEUE_OUTDIR or cwd)")
    top.add_argument("--threads", type=int, default=1,
                     help="worker-thread cap for replication harnesses")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi", help="arrival exponent psi(theta)")
    p.add_argument("--kind", default="exponential",
                   help="arrival family shortcut when --arrival is absent")
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--arrival", type=_dist, help="arrival-law JSON spec")
    p.add_argument("--theta", type=float)
    p.add_argument("--truncate-K", type=float, dest="truncate_k")
    p.add_argument("--service", type=_dist,
                   help="service-law JSON spec (needed with --truncate-K)")

    p = sub.add_parser("simulate", help="run the scaled queue")
    p.add_argument("--arrival", type=_dist)
    p.add_argument("--service", type=_dist)
    p.add_argument("--lam", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="events.csv")

    p = sub.add_parser("surface", help="occupancy surface from events")
    p.add_argument("--events")
    p.add_argument("--lam", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--nt", type=int, default=64)
    p.add_argument("--ymax", type=float)
    p.add_argument("--scaled", action="store_true")
    p.add_argument("--out", default="surface.csv")
    p.add_argument("--out-json", default="surface.json")

    p = sub.add_parser("rate", help="evaluate a rate functional")
    p.add_argument("--method", choices=["poisson", "finite-dim"],
                   default="poisson")
    p.add_argument("--service", type=_dist)
    p.add_argument("--T", type=float)
    p.add_argument("--tilt", help="tilt CSV (poisson method)")
    p.add_argument("--increments", help="increment-table CSV (finite-dim)")
    p.add_argument("--arrival", type=_dist,
                   help="arrival-law spec (finite-dim)")

    p = sub.add_parser("overflow", help="most likely path to overflow")
    p.add_argument("--service", type=_dist,
                   default={"kind": "uniform", "a": 0, "b": 1})
    p.add_argument("--x", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--grid-n", type=int, default=32)
    p.add_argument("--prefix", default="overflow")

    p = sub.add_parser("ruin", help="most likely path to insurance ruin")
    p.add_argument("--service", type=_dist,
                   default={"kind": "uniform", "a": 0, "b": 1})
    p.add_argument("--b", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--x", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--horizons", type=int, default=64)
    p.add_argument("--grid-n", type=int, default=24)
    p.add_argument("--prefix", default="ruin")

    p = sub.add_parser("verify", help="verification harnesses")
    p.add_argument("--check", choices=["decay", "marginal", "cross"])
    p.add_argument("--arrival", type=_dist,
                   default={"kind": "exponential", "rate": 1})
    p.add_argument("--service", type=_dist,
                   default={"kind": "uniform", "a": 0, "b": 1})
    p.add_argument("--level", type=float, default=2.0)
    p.add_argument("--u", type=float, default=1.0)
    p.add_argument("--lambdas", default="100,200,400,800,1600")
    p.add_argument("--mc", action="store_true")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--lam", type=float, default=50.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="verify_report.json")
    return top


def _apply_config(parser: argparse.ArgumentParser, argv: list) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        try:
            defaults = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(defaults, dict):
            raise ConfigError("config file must hold a JSON object")
        explicit = set(argv)  # flags literally on the command line win
        for key, val in defaults.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise ConfigError(f"config key {key!r} is not a known flag")
            if f"--{key}" not in explicit:
                setattr(args, attr, _dist(val) if attr in ("arrival", "service")
                        and isinstance(val, str) else val)
    missing = [name for name in _REQUIRED.get(args.command, ())
               if getattr(args, name.replace("-", "_")) is None]
    if missing:
        raise ConfigError(f"{args.command}: missing required option(s): "
                          + ", ".join(f"--{m}" for m in missing))
    return args


def _outdir(args) -> Path:
    out = args.outdir or os.environ.get("LDQUEUE_OUTDIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- command bodies ------------------------------------------------------------

def _cmd_psi(args, outdir: Path) -> dict:
    spec = args.arrival or {"kind": args.kind, "rate": args.rate}
    ev = PsiEvaluator(renewal_from_spec(spec))
    if args.truncate_k is not None:
        if args.service is None:
            raise ConfigError("--truncate-K needs --service")
        svc = service_from_spec(args.service)
        val = float(psi_n_truncated(ev, svc, args.truncate_k, args.theta))
    else:
        val = float(psi_n(ev, args.theta))
    return {"theta": args.theta, "psi": val}


def _cmd_simulate(args, outdir: Path) -> dict:
    log = simulate(renewal_from_spec(args.arrival),
                   service_from_spec(args.service),
                   args.lam, args.T, args.seed)
    out = outdir / args.out
    write_events_csv(log, out)
    return {"events": str(out), "count": len(log), "lam": args.lam,
            "T": args.T, "seed": args.seed}


def _cmd_surface(args, outdir: Path) -> dict:
    log = read_events_csv(args.events, lam=args.lam, horizon=args.T)
    ymax = args.ymax
    if ymax is None:
        vmax = float(log.services.max()) if len(log) else 1.0
        ymax = args.T + vmax
    h = args.T / args.nt
    grid = SurfaceGrid.aligned(args.T, h, math.ceil(ymax / h) * h)
    surf = build_surface(log, grid, scaled=args.scaled)
    out = outdir / args.out
    write_surface_csv(surf, out)
    out_json = outdir / args.out_json
    dump_json(surface_to_json_dict(surf), out_json)
    return {"surface": str(out), "surface_json": str(out_json),
            "max_value": float(surf.values.max(initial=0.0))}


def _cmd_rate(args, outdir: Path) -> dict:
    svc = service_from_spec(args.service)
    if args.method == "poisson":
        if not args.tilt:
            raise ConfigError("poisson rate needs --tilt")
        tilt = read_tilt_csv(args.tilt)
        value = poisson_rate(tilt, svc, args.T)
        return {"value": "infinite" if math.isinf(value) else value,
                "iterations": 0, "gradient_norm": 0.0}
    if not args.increments or not args.arrival:
        raise ConfigError("finite-dim rate needs --increments and --arrival")
    table = read_increments_csv(args.increments)
    ev = PsiEvaluator(renewal_from_spec(args.arrival))
    return finite_dim_rate_detailed(table, ev, svc).to_json_dict()


def _cmd_overflow(args, outdir: Path) -> dict:
    problem = OverflowProblem(svc=service_from_spec(args.service),
                              x=args.x, T=args.T)
    path = solve_overflow(problem, grid_n=args.grid_n)
    files = _write_path_outputs(path, outdir, args.prefix)
    return {**path.summary(), **files}


def _cmd_ruin(args, outdir: Path) -> dict:
    h1, h2 = whole_life_payoffs(args.b, args.p, args.delta)
    problem = RuinProblem(svc=service_from_spec(args.service), h1=h1, h2=h2,
                          x=args.x, T=args.T,
                          u_grid=np.linspace(args.T / args.horizons, args.T,
                                             args.horizons))
    path = solve_ruin(problem, grid_n=args.grid_n)
    files = _write_path_outputs(path, outdir, args.prefix)
    return {**path.summary(), **files}


def _write_path_outputs(path, outdir: Path, prefix: str) -> dict:
    q_csv = outdir / f"{prefix}_q.csv"
    qbar_csv = outdir / f"{prefix}_qbar.csv"
    tilt_csv = outdir / f"{prefix}_tilt.csv"
    summary = outdir / f"{prefix}_summary.json"
    write_surface_csv(path.surface_q, q_csv)
    write_surface_csv(path.surface_qbar, qbar_csv)
    write_tilt_csv(path.tilt, tilt_csv)
    dump_json(path.summary(), summary)
    return {"q_csv": str(q_csv), "qbar_csv": str(qbar_csv),
            "tilt_csv": str(tilt_csv), "summary_json": str(summary)}


def _cmd_verify(args, outdir: Path) -> dict:
    arr = renewal_from_spec(args.arrival)
    svc = service_from_spec(args.service)
    out = outdir / args.out
    if args.check == "decay":
        event = QueueLevelEvent(arr=arr, svc=svc, u=args.u, level=args.level)
        lambdas = [float(x) for x in str(args.lambdas).split(",")]
        est = decay_curve(event, lambdas,
                          method="monte-carlo" if args.mc else "exact-oracle",
                          reps=args.reps, seed=args.seed, threads=args.threads)
        report = est.to_json_dict()
        write_decay_csv(est.lambdas,
                        [-y * l for y, l in zip(est.neg_log_prob_over_lambda,
                                                est.lambdas)],
                        est.neg_log_prob_over_lambda,
                        outdir / "decay_curve.csv")
        report["curve_csv"] = str(outdir / "decay_curve.csv")
    elif args.check == "marginal":
        rep = marginal_distribution_check(arr, svc, lam=args.lam, u=args.u,
                                          reps=args.reps, seed=args.seed,
                                          threads=args.threads)
        report = rep.to_json_dict()
    else:
        path = solve_overflow(OverflowProblem(svc=svc, x=args.level, T=args.u))
        rep = rate_cross_check(path.tilt, svc, args.u,
                               nested_partitions(args.u, 2.0 * args.u,
                                                 [2, 4, 8, 16]),
                               qbar=path.qbar_fn)
        report = rep.to_json_dict()
    dump_json(report, out)
    report["report_json"] = str(out)
    return report


_COMMANDS = {"psi": _cmd_psi, "simulate": _cmd_simulate, "surface": _cmd_surface,
             "rate": _cmd_rate, "overflow": _cmd_overflow, "ruin": _cmd_ruin,
             "verify": _cmd_verify}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        result = _COMMANDS[args.command](args, _outdir(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible problem: {exc}", file=sys.stderr)
        return _EXIT_INFEASIBLE
    except (BracketError, DomainError, GridError, PartitionError, RangeError,
            InsufficientHitsError, LdqueueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return _EXIT_NUMERIC
    print(json_line(result))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
