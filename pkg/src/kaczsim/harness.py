"""Experiment harness: single runs, sweeps with seeded replicates, CSV output.

A sweep varies exactly one axis (agent-count fraction, neighbor fraction,
broadcast interval, failure ratio x intensity, or the regularization
parameter) over a base configuration, runs R seeded replicates per cell
(seed = base + 1000*cell + rep), and writes

* metrics.csv    -- one raw row per (cell, rep), pinned column order,
                    each row echoing a hash of its fully resolved config;
* aggregated.csv -- field-wise means per cell;
* configs.json   -- hash -> resolved config document, so any CSV row can be
                    reproduced from the output directory alone.

lam = 0 in a lambda sweep maps to the consistent-mode update applied to the
(inconsistent) data: the regularized correction needs lam > 0, and the
plain projection then measures the oscillating residual floor.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import engine, graphs, linalg, problems, topology
from .agents import AgentConfig
from .engine import EveryK, FailurePlan, GlobalSchedule, MetricsRecord, SimConfig
from .errors import InvalidParameter, NoConvergence
from .problems import ProblemInstance

RAW_HEADER = ["cell", "rep", "seed", "k_iter", "t_cmp", "c", "t_comm", "T",
              "e_stop", "k_stop", "t_stop", "config_hash"]
AGG_HEADER = ["cell", "value", "reps", "k_iter", "t_cmp", "c", "t_comm", "T",
              "e_stop", "k_stop", "t_stop", "converged"]

SWEEP_AXES = ("agents", "neighbors", "interval", "failure", "lambda")


def derive_agent_count(m: int, n: int, theta1: float) -> int:
    """Agent count for a per-agent data fraction theta1: ceil(m / (n * theta1))."""
    if theta1 <= 0:
        raise InvalidParameter(f"theta1 must be positive, got {theta1}")
    return math.ceil(m / (n * theta1))


def aggregate_replicates(records: list[MetricsRecord]) -> MetricsRecord:
    """Field-wise arithmetic mean of run metrics."""
    if not records:
        raise InvalidParameter("cannot aggregate zero records")
    means = {f: float(np.mean([getattr(r, f) for r in records]))
             for f in MetricsRecord.NUMERIC_FIELDS}
    return MetricsRecord(**means)


@dataclass
class RunOptions:
    """Resolved run configuration; field names mirror the simulator config."""

    agents: int | None = None          # None: use the instance's shard count
    block_size: int = 50
    lam: float | None = None           # None/0: consistent update
    sampling: str = "cycle"
    t_min: float = 0.5
    t_max: float = 1.0
    topology_cap: int | None = None    # None: equals agent count
    topology_seed: int = 0
    trigger: str = "every_k"           # every_k | global
    interval: int = 25
    spacing: float = 3.0
    delay_bound: float = 1.0
    tol: float = 1e-3
    k_max: int = 5000
    event_budget: int = 1_000_000
    stop_mode: str = "first"
    failure_rho: float = 0.0
    failure_xi: float = 0.0
    seed: int = 0
    record_trace: bool = False

    def to_document(self) -> dict:
        doc = {
            "agents": self.agents,
            "agent": {"block_size": self.block_size, "lam": self.lam,
                      "sampling": self.sampling, "t_min": self.t_min, "t_max": self.t_max},
            "topology": {"cap": self.topology_cap, "seed": self.topology_seed},
            "trigger": ({"kind": "every_k", "interval": self.interval}
                        if self.trigger == "every_k"
                        else {"kind": "global", "spacing": self.spacing}),
            "delay_bound": self.delay_bound,
            "tol": self.tol,
            "k_max": self.k_max,
            "event_budget": self.event_budget,
            "stop_mode": self.stop_mode,
            "failure": ({"rho": self.failure_rho, "xi": self.failure_xi, "seed": self.seed}
                        if self.failure_rho > 0 else None),
            "seed": self.seed,
        }
        return doc


def options_from_document(doc: dict, base: RunOptions | None = None) -> RunOptions:
    """Parse a config JSON document (the to_document layout) over defaults."""
    opts = base or RunOptions()
    if "agents" in doc and doc["agents"] is not None:
        opts = replace(opts, agents=int(doc["agents"]))
    agent = doc.get("agent", {})
    for key in ("block_size", "sampling", "t_min", "t_max"):
        if key in agent:
            opts = replace(opts, **{key: agent[key]})
    if "lam" in agent:
        opts = replace(opts, lam=agent["lam"])
    topo = doc.get("topology", {})
    if "cap" in topo:
        opts = replace(opts, topology_cap=topo["cap"])
    if "seed" in topo:
        opts = replace(opts, topology_seed=topo["seed"])
    trig = doc.get("trigger", {})
    if trig.get("kind") == "global":
        opts = replace(opts, trigger="global", spacing=float(trig["spacing"]))
    elif trig.get("kind") == "every_k":
        opts = replace(opts, trigger="every_k", interval=int(trig["interval"]))
    for key in ("delay_bound", "tol", "k_max", "event_budget", "stop_mode", "seed"):
        if key in doc:
            opts = replace(opts, **{key: doc[key]})
    failure = doc.get("failure")
    if failure:
        opts = replace(opts, failure_rho=float(failure["rho"]), failure_xi=float(failure["xi"]))
    return opts


def config_hash(doc: dict) -> str:
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def build_sim_config(inst: ProblemInstance, opts: RunOptions) -> SimConfig:
    """Materialize a simulator config (and its oracle) from an instance."""
    n_agents = opts.agents or len(inst.shards)
    shards = inst.shards if n_agents == len(inst.shards) else problems.partition(inst.dense(), inst.b, n_agents)
    lam = opts.lam if opts.lam else None   # 0 or None -> consistent update
    acfgs = [
        AgentConfig(i, s.A, s.b, s.rows, min(opts.block_size, s.A.shape[0]),
                    lam=lam, t_min=opts.t_min, t_max=opts.t_max, sampling=opts.sampling)
        for i, s in enumerate(shards)
    ]
    cap = opts.topology_cap if opts.topology_cap is not None else n_agents
    topo = topology.build_pascal(n_agents, cap, seed=opts.topology_seed)
    if lam is not None:
        oracle, _ = linalg.augmented_min_norm_solve(inst.dense(), inst.b, lam)
    else:
        oracle = inst.x_star
    trigger = EveryK(opts.interval) if opts.trigger == "every_k" else GlobalSchedule(opts.spacing)
    failure = (FailurePlan(opts.failure_rho, opts.failure_xi, seed=opts.seed)
               if opts.failure_rho > 0 else None)
    return SimConfig(
        topology=topo, agents=acfgs, oracle=oracle, delay_bound=opts.delay_bound,
        trigger=trigger, tol=opts.tol, k_max=opts.k_max, event_budget=opts.event_budget,
        seed=opts.seed, failure=failure, stop_mode=opts.stop_mode,
        ls_reference=inst.x_star, record_trace=opts.record_trace,
    )


def run_single(inst: ProblemInstance, opts: RunOptions) -> engine.RunResult:
    """One simulation; budget or k_max exhaustion still yields a result."""
    try:
        return engine.run(build_sim_config(inst, opts))
    except NoConvergence as exc:
        return exc.result


@dataclass
class SweepCell:
    cell: int
    value: tuple
    options: RunOptions


@dataclass
class SweepOutcome:
    cells: list[SweepCell]
    rows: list[dict]                       # per (cell, rep)
    aggregated: list[tuple[SweepCell, MetricsRecord]]
    configs: dict[str, dict]               # hash -> resolved document


def _cells_for_axis(inst: ProblemInstance, axis: str, values, xi_values, base: RunOptions) -> list[SweepCell]:
    cells = []
    if axis == "agents":
        for c, theta1 in enumerate(values):
            n = derive_agent_count(inst.m, inst.n, float(theta1))
            cells.append(SweepCell(c, (float(theta1),), replace(base, agents=n, topology_cap=None)))
    elif axis == "neighbors":
        n = base.agents or len(inst.shards)
        for c, theta2 in enumerate(values):
            cap = max(2, math.ceil(n * float(theta2)))
            cells.append(SweepCell(c, (float(theta2),), replace(base, topology_cap=cap)))
    elif axis == "interval":
        for c, dt in enumerate(values):
            cells.append(SweepCell(c, (int(dt),), replace(base, trigger="every_k", interval=int(dt))))
    elif axis == "failure":
        c = 0
        for rho in values:
            for xi in (xi_values or [base.failure_xi or 1.0]):
                cells.append(SweepCell(c, (float(rho), float(xi)),
                                       replace(base, failure_rho=float(rho), failure_xi=float(xi))))
                c += 1
    elif axis == "lambda":
        for c, lam in enumerate(values):
            cells.append(SweepCell(c, (float(lam),), replace(base, lam=float(lam) or None)))
    else:
        raise InvalidParameter(f"unknown sweep axis {axis!r}; pick one of {SWEEP_AXES}")
    return cells


def sweep(inst: ProblemInstance, axis: str, values, base: RunOptions,
          reps: int = 5, xi_values=None) -> SweepOutcome:
    if reps < 1:
        raise InvalidParameter(f"reps must be >= 1, got {reps}")
    cells = _cells_for_axis(inst, axis, values, xi_values, base)
    rows, aggregated, configs = [], [], {}
    for cell in cells:
        records = []
        for rep in range(reps):
            seed = base.seed + 1000 * cell.cell + rep
            opts = replace(cell.options, seed=seed)
            doc = opts.to_document()
            doc["axis"] = axis
            doc["value"] = list(cell.value)
            h = config_hash(doc)
            configs[h] = doc
            result = run_single(inst, opts)
            records.append(result.metrics)
            rows.append({"cell": cell.cell, "rep": rep, "seed": seed,
                         "metrics": result.metrics, "config_hash": h})
        aggregated.append((cell, aggregate_replicates(records)))
    return SweepOutcome(cells, rows, aggregated, configs)


# ----------------------------------------------------------------- CSV output

def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_HEADER)
        for row in rows:
            m = row["metrics"]
            w.writerow([row["cell"], row["rep"], row["seed"],
                        _fmt(m.k_iter), _fmt(m.t_cmp), _fmt(m.c), _fmt(m.t_comm),
                        _fmt(m.T), _fmt(m.e_stop), _fmt(m.k_stop), _fmt(m.t_stop),
                        row["config_hash"]])


def write_aggregated_csv(aggregated, path, reps: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGG_HEADER)
        for cell, m in aggregated:
            value = cell.value[0] if len(cell.value) == 1 else ";".join(map(str, cell.value))
            w.writerow([cell.cell, value, reps, _fmt(m.k_iter), _fmt(m.t_cmp), _fmt(m.c),
                        _fmt(m.t_comm), _fmt(m.T), _fmt(m.e_stop), _fmt(m.k_stop),
                        _fmt(m.t_stop), _fmt(m.converged)])


def write_events_csv(log: list[engine.Event], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "kind", "agent", "detail"])
        for ev in log:
            w.writerow([_fmt(ev.time), ev.kind, ev.agent, ev.detail])


def write_report_csv(metrics_csv, path) -> None:
    """Melt a raw metrics CSV into long (cell, rep, seed, metric, value) form."""
    with open(metrics_csv, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "rep", "seed", "metric", "value"])
        for row in rows:
            for metric in RAW_HEADER[3:-1]:
                w.writerow([row["cell"], row["rep"], row["seed"], metric, row[metric]])


# -------------------------------------------------------------- certification

def certify(m: int = 4, n: int = 3, agents: int = 2, seed: int = 0,
            window: int = 12, l_window: int | None = None) -> dict:
    """Contraction certificate on a small dense instance driven by the engine."""
    inst = problems.generate(problems.ProblemSpec(m=m, n=n, density=1.0, noise=0.0,
                                                  seed=seed, agents=agents))
    opts = RunOptions(block_size=1, interval=1, tol=1e-9, stop_mode="all",
                      event_budget=40 * max(window, 1) + 200, seed=seed, record_trace=True)
    result = run_single(inst, opts)
    window = min(window, len(result.ticks))
    report = graphs.certification_report(result.ticks, inst.dense(), agents,
                                         window, l_window=l_window)
    report["instance"] = {"m": m, "n": n, "agents": agents, "seed": seed}
    return report
