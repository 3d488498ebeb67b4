"""Experiment runner: parameter sweeps, single traced runs and ratio studies."""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bcu, capacity, engine, oracle, topology
from .division import plan_division
from .model import GHZ, MBIT, ConfigError, MobileUser, ServerState, SimConfig, load_config, validate_config

FAMILIES = ("servers", "task_size", "gen_rate", "cpu")
ALL_STRATEGIES = ("CoNet", "OneHop", "NoCooperation", "Local")
CSV_COLUMNS = ("family", "value", "strategy", "seed", "throughput", "mean_delay", "p95_delay",
               "avg_coop_distance", "tasks_completed", "rejected_bits")
METRICS = CSV_COLUMNS[4:]
WORKERS_ENV = "CONET_WORKERS"
CPU_SPREAD = 0.5  # a "v GHz class" draws server CPUs from [v(1-s), v(1+s)]


def reference_config() -> SimConfig:
    """Reference point shared by all sweeps: 120 servers, 4 Mbit tasks, 8 GHz class CPUs."""
    return SimConfig(
        n_servers=120,
        cpu_range=cpu_class(8.0),
        task_size_range=(4 * MBIT, 4 * MBIT),
        gen_rate=0.5,
        n_users=100,
        sim_horizon=10.0,
    )


def cpu_class(ghz: float) -> Tuple[float, float]:
    return (ghz * GHZ * (1 - CPU_SPREAD), ghz * GHZ * (1 + CPU_SPREAD))


def apply_family(cfg: SimConfig, family: str, value: float) -> SimConfig:
    """Grid units: servers is a count, task_size is Mbit, gen_rate is tasks/s per user, cpu is GHz."""
    if family == "servers":
        return cfg.replace(n_servers=int(value))
    if family == "task_size":
        return cfg.replace(task_size_range=(value * MBIT, value * MBIT))
    if family == "gen_rate":
        return cfg.replace(gen_rate=float(value))
    if family == "cpu":
        return cfg.replace(cpu_range=cpu_class(value))
    raise ValueError(f"unknown family {family!r}")


@dataclass
class SweepSpec:
    family: str
    grid: Sequence[float]
    fixed: SimConfig = field(default_factory=reference_config)
    strategies: Sequence[str] = ALL_STRATEGIES
    replications: int = 30
    base_seed: int = 0

    def validate(self) -> List[str]:
        problems = []
        if self.family not in FAMILIES:
            problems.append(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not self.grid:
            problems.append("grid must be non-empty")
        elif any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            problems.append("grid must be strictly increasing")
        if self.replications < 1:
            problems.append("replications must be >= 1")
        for s in self.strategies:
            try:
                engine.Strategy.parse(s)
            except ValueError as exc:
                problems.append(str(exc))
        if not problems:
            for v in self.grid:
                problems.extend(validate_config(apply_family(self.fixed, self.family, v)))
        return problems


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def run_cell(args) -> Dict[str, object]:
    cfg, family, value, strategy, seed = args
    topo = topology.generate(cfg, seed)
    res = engine.run(cfg, topo, strategy, seed)
    m = res.metrics
    return {
        "family": family, "value": value, "strategy": strategy, "seed": seed,
        "throughput": m.throughput, "mean_delay": m.mean_delay, "p95_delay": m.p95_delay,
        "avg_coop_distance": m.avg_coop_distance, "tasks_completed": m.tasks_completed,
        "rejected_bits": m.rejected_bits,
    }


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> Tuple[List[Dict], List[Dict]]:
    """All (grid value, strategy, replication) cells plus the aggregated table.

    Rows come back in grid, strategy, replication order whatever the worker count.
    """
    problems = spec.validate()
    if problems:
        raise ValueError("invalid sweep: " + "; ".join(problems))
    cells = []
    for v in spec.grid:
        cfg = apply_family(spec.fixed, spec.family, v)
        for s in spec.strategies:
            for r in range(spec.replications):
                cells.append((cfg, spec.family, v, s, spec.base_seed + r))
    workers = _workers() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with Pool(workers) as pool:
            rows = pool.map(run_cell, cells, chunksize=max(1, len(cells) // (4 * workers)))
    else:
        rows = [run_cell(c) for c in cells]
    return rows, aggregate_rows(rows)


def aggregate_rows(rows: Sequence[Dict]) -> List[Dict]:
    groups: Dict[tuple, List[Dict]] = {}
    for r in rows:
        groups.setdefault((r["family"], r["value"], r["strategy"]), []).append(r)
    out = []
    for (fam, val, strat), rs in groups.items():
        rec = {"family": fam, "value": val, "strategy": strat, "n": len(rs)}
        for m in METRICS:
            agg = engine.aggregate([r[m] for r in rs])
            rec[f"{m}_mean"] = agg["mean"]
            rec[f"{m}_hw"] = agg["half_width"]
        out.append(rec)
    return out


def aggregate_columns() -> List[str]:
    cols = ["family", "value", "strategy", "n"]
    for m in METRICS:
        cols += [f"{m}_mean", f"{m}_hw"]
    return cols


def write_csv(rows: Sequence[Dict], columns: Sequence[str], out) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r[c] is None else _fmt(r[c]) for c in columns])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    return text


TRACE_COLUMNS = ("task", "owner", "home", "created_at", "size", "alpha", "delay", "distance", "rejected", "shares")


def trace_rows(result: engine.RunResult) -> List[Dict]:
    rows = []
    for t in result.trace:
        shares = ";".join(f"{s}@{t.levels.get(s, '')}:{b!r}" for s, b in sorted(t.shares.items()))
        rows.append({"task": t.task, "owner": t.owner, "home": t.home, "created_at": t.created_at, "size": t.size,
                     "alpha": t.alpha, "delay": t.delay, "distance": t.distance,
                     "rejected": str(t.rejected).lower(), "shares": shares})
    return rows


def run_single(config_path, strategy: str, seed: int, out=None) -> Tuple[engine.RunResult, str]:
    """Run one configuration and write metrics plus a per-task trace next to ``out``."""
    cfg = load_config(config_path)
    topo = topology.generate(cfg, seed)
    result = engine.run(cfg, topo, strategy, seed)
    row = {"family": "single", "value": "", "strategy": engine.Strategy.parse(strategy).value, "seed": seed,
           **result.metrics.as_dict()}
    metrics_text = write_csv([row], CSV_COLUMNS, out)
    if out is not None:
        trace_path = Path(str(out) + ".trace.csv")
        write_csv(trace_rows(result), TRACE_COLUMNS, trace_path)
    return result, metrics_text


def random_snapshot(rng: np.random.Generator, cfg: SimConfig, n_servers: int, queue_frac: float, T: float):
    """Small topology with random backlogs, forest and capabilities ready for planning.

    Each backlog is drawn from U(0, queue_frac * T) and zeroed with probability 0.3.
    """
    cfg = cfg.replace(n_servers=n_servers)
    topo = topology.generate(cfg, int(rng.integers(2 ** 31)))
    states = {}
    for s in topo.servers:
        q = rng.uniform(0, queue_frac * T, size=3) * (rng.random(3) < 0.7)
        states[s.id] = ServerState(s.id, s.f_s, s.c_f, float(q[0]), float(q[1]), float(q[2]), s.neighbors)
    order = bcu.processing_order(states, "random", rng)
    forest = bcu.build_forest(topo, list(states.values()), order, cfg.kappa)
    caps = capacity.announce_round(forest, states, cfg.kappa, cfg.unit_delay)
    home = int(rng.integers(n_servers))
    # plan from the root of the home's tree so the whole tree can take part
    root = forest.path_to_root(home)[-1]
    user = MobileUser(0, cfg.user_cpu, cfg.fwd_cycles_per_bit / cfg.user_fwd_freq, root)
    return topo, states, forest, caps, user


RATIO_COLUMNS = oracle.RatioReport.CSV_HEADER


def run_ratio_study(config_path, n_instances: int, seed: int, out=None, m: int = 12, n_max: int = 4,
                    queue_frac: float = 0.05) -> Tuple[List[oracle.RatioReport], str]:
    cfg = load_config(config_path) if config_path is not None else reference_config()
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_instances):
        n = int(rng.integers(2, n_max + 1))
        T = float(rng.uniform(*cfg.task_size_range))
        topo, states, forest, caps, user = random_snapshot(rng, cfg, n, queue_frac, T)
        detail = plan_division(forest, caps, states, user, T, cfg.kappa, cfg.gamma, cfg.unit_delay)
        reports.append(oracle.measure_ratio(detail, states, cfg.kappa, cfg.gamma, m=m, exact=True))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATIO_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    usable = [r.delta for r in reports if r.exact and r.delta is not None]
    if n_instances:
        w.writerow([f"# max_delta={max(usable)!r}" if usable else "# max_delta="])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    return reports, text


def _parse_grid(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = argparse.ArgumentParser(prog="conet", description="Cooperative edge offloading simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    sw = sub.add_parser("sweep", help="run one sweep family")
    sw.add_argument("--config", help="fixed parameters (defaults to the built-in reference point)")
    sw.add_argument("--family", required=True, choices=FAMILIES)
    sw.add_argument("--grid", required=True, help="comma-separated values")
    sw.add_argument("--strategies", default=",".join(ALL_STRATEGIES))
    sw.add_argument("--replications", type=int, default=30)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--out", required=True, help="raw CSV path; aggregates go to <out>.agg.csv")

    sg = sub.add_parser("single", help="one traced run")
    sg.add_argument("--config", required=True)
    sg.add_argument("--strategies", default="CoNet", help="strategy name")
    sg.add_argument("--seed", type=int, default=0)
    sg.add_argument("--out", required=True)

    ra = sub.add_parser("ratio", help="approximation-ratio study on small snapshots")
    ra.add_argument("--config")
    ra.add_argument("--replications", type=int, default=100, help="number of instances")
    ra.add_argument("--seed", type=int, default=0)
    ra.add_argument("--out", required=True)

    args = p.parse_args(argv)
    try:
        if args.verb == "sweep":
            fixed = load_config(args.config) if args.config else reference_config()
            spec = SweepSpec(family=args.family, grid=_parse_grid(args.grid), fixed=fixed,
                             strategies=[s.strip() for s in args.strategies.split(",") if s.strip()],
                             replications=args.replications, base_seed=args.seed)
            rows, agg = run_sweep(spec)
            write_csv(rows, CSV_COLUMNS, args.out)
            write_csv(agg, aggregate_columns(), str(args.out) + ".agg.csv")
        elif args.verb == "single":
            run_single(args.config, args.strategies, args.seed, args.out)
        else:
            run_ratio_study(args.config, args.replications, args.seed, args.out)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
