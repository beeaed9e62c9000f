"""Command-line entry point.

Subcommands: gen (write an instance directory), run (one simulation),
sweep (one axis, seeded replicates), certify (contraction certificate
JSON), report (melt a metrics CSV into long form).  The KACZSIM_OUT
environment variable overrides the default output directory when --out
is not given.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, problems
from .errors import KaczsimError
from .harness import RunOptions


def _out_dir(args, default="out") -> Path:
    out = args.out or os.environ.get("KACZSIM_OUT") or default
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config document; flags override it")
    p.add_argument("--block-size", type=int, help="rows per projection step")
    p.add_argument("--lam", type=float, help="regularization parameter (omit for consistent mode)")
    p.add_argument("--sampling", choices=["cycle", "iid"])
    p.add_argument("--trigger", choices=["every_k", "global"])
    p.add_argument("--interval", type=int, help="broadcast every k-th iteration")
    p.add_argument("--spacing", type=float, help="global broadcast tick spacing")
    p.add_argument("--cap", type=int, help="topology degree cap (default: agent count)")
    p.add_argument("--topology-seed", type=int)
    p.add_argument("--delay-bound", type=float)
    p.add_argument("--t-min", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--k-max", type=int)
    p.add_argument("--budget", type=int, help="event budget")
    p.add_argument("--stop-mode", choices=["first", "all"])
    p.add_argument("--rho", type=float, help="failure ratio")
    p.add_argument("--xi", type=float, help="failure intensity")
    p.add_argument("--agents", type=int, help="repartition the instance over this many agents")
    p.add_argument("--seed", type=int)


def _resolve_options(args) -> RunOptions:
    opts = RunOptions()
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        opts = harness.options_from_document(doc, opts)
    overrides = {
        "block_size": args.block_size, "lam": args.lam, "sampling": args.sampling,
        "trigger": args.trigger, "interval": args.interval, "spacing": args.spacing,
        "topology_cap": args.cap, "topology_seed": args.topology_seed,
        "delay_bound": args.delay_bound, "t_min": args.t_min, "t_max": args.t_max,
        "tol": args.tol, "k_max": args.k_max, "event_budget": args.budget,
        "stop_mode": args.stop_mode, "failure_rho": args.rho, "failure_xi": args.xi,
        "agents": args.agents, "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            opts = replace(opts, **{key: value})
    return opts


def cmd_gen(args) -> int:
    spec = problems.ProblemSpec(m=args.m, n=args.n, density=args.density,
                                noise=args.sigma, seed=args.seed, agents=args.agents)
    inst = problems.generate(spec)
    out = _out_dir(args, default="instance")
    problems.save(inst, out)
    print(f"wrote instance ({args.m}x{args.n}, {inst.A.nnz} nonzeros, {args.agents} shards) to {out}")
    return 0


def cmd_run(args) -> int:
    inst = problems.load(args.instance)
    opts = _resolve_options(args)
    result = harness.run_single(inst, opts)
    out = _out_dir(args)
    doc = opts.to_document()
    h = harness.config_hash(doc)
    harness.write_metrics_csv(
        [{"cell": 0, "rep": 0, "seed": opts.seed, "metrics": result.metrics, "config_hash": h}],
        out / "metrics.csv")
    harness.write_events_csv(result.log, out / "events.csv")
    (out / "configs.json").write_text(json.dumps({h: doc}, indent=2, sort_keys=True))
    m = result.metrics
    status = "converged" if result.converged else f"stopped ({result.stop_reason})"
    print(f"{status}: k_iter={m.k_iter:.1f} c={m.c:.1f} T={m.T:.3f} e_stop={m.e_stop:.6g}")
    print(f"wrote metrics.csv, events.csv, configs.json to {out}")
    return 0


def cmd_sweep(args) -> int:
    inst = problems.load(args.instance)
    base = _resolve_options(args)
    values = [float(v) for v in args.values.split(",")]
    xi_values = [float(v) for v in args.xi_values.split(",")] if args.xi_values else None
    outcome = harness.sweep(inst, args.axis, values, base, reps=args.reps, xi_values=xi_values)
    out = _out_dir(args)
    harness.write_metrics_csv(outcome.rows, out / "metrics.csv")
    harness.write_aggregated_csv(outcome.aggregated, out / "aggregated.csv", reps=args.reps)
    (out / "configs.json").write_text(json.dumps(outcome.configs, indent=2, sort_keys=True))
    print(f"swept {args.axis} over {len(outcome.cells)} cells x {args.reps} reps -> {out}")
    return 0


def cmd_certify(args) -> int:
    report = harness.certify(m=args.m, n=args.n, agents=args.agents, seed=args.seed,
                             window=args.window, l_window=args.l)
    out = _out_dir(args)
    path = out / "certify.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"hybrid_norm={report['hybrid_norm']:.6f} d={report['d']} "
          f"C_l={report['C_l_verdict']} -> {path}")
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    path = out / "report.csv"
    harness.write_report_csv(args.metrics, path)
    print(f"wrote long-format report to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kaczsim",
                                     description="asynchronous block projection simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate and save a problem instance")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--agents", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("--instance", required=True)
    p.add_argument("--out")
    _add_run_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sweep one axis with seeded replicates")
    p.add_argument("--instance", required=True)
    p.add_argument("--axis", choices=list(harness.SWEEP_AXES), required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--xi-values", help="comma-separated xi grid (failure axis)")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out")
    _add_run_options(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("certify", help="emit a contraction certificate JSON")
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=12)
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("report", help="melt metrics.csv into long format")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KaczsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
