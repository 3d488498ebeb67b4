"""Discrete-event simulation of task offloading under the cooperation strategies.

Queues are FIFO and drain at constant rates, so a queue is fully described by
the time it next goes idle; backlogs in bits follow from that. Task delays are
therefore known exactly when a task is planned, and completion events are
scheduled accordingly.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import bcu
from .capacity import announce_round
from .division import PlanDetail, plan_division
from .model import MetricsRecord, ServerState, SimConfig, Task
from .topology import Topology, rng_streams


class Strategy(str, Enum):
    CONET = "CoNet"
    LOCAL = "Local"
    NO_COOPERATION = "NoCooperation"
    ONE_HOP = "OneHop"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        for s in cls:
            if s.value.lower() == name.strip().lower():
                return s
        raise ValueError(f"unknown strategy {name!r}")


MAX_DEPTH = {Strategy.CONET: None, Strategy.ONE_HOP: 1, Strategy.NO_COOPERATION: 0}

# tie order at equal timestamps
KIND_ORDER = {
    "announce_tick": 0,
    "processing_complete": 1,
    "fwd_complete": 2,
    "result_complete": 3,
    "task_arrival": 4,
}


@dataclass(order=True)
class Event:
    time: float
    order: int
    id: int
    kind: str = field(compare=False)
    payload: tuple = field(compare=False, default=())


@dataclass
class TaskRecord:
    task: int
    owner: int
    home: int
    created_at: float
    size: float
    alpha: float
    delay: float
    distance: float
    offloaded: bool
    rejected: bool
    shares: Dict[int, float] = field(default_factory=dict)
    levels: Dict[int, int] = field(default_factory=dict)


@dataclass
class RunResult:
    metrics: MetricsRecord
    trace: List[TaskRecord]
    config: SimConfig
    seed: int
    strategy: Strategy
    forest_rebuilds: int
    components: int
    horizon_throughput: float = 0.0


def coop_distance(plan) -> float:
    """Share-weighted mean of (1 + depth below home) over servers holding bits; 0 if none."""
    total = math.fsum(plan.server_bits.values())
    if total <= 0:
        return 0.0
    return math.fsum(b * (1 + plan.depth[s]) for s, b in plan.server_bits.items()) / total


def aggregate(values: Sequence[float]) -> Dict[str, Optional[float]]:
    """Sample mean and 95% normal-approximation half-width (None for one value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("nothing to aggregate")
    mean = float(arr.mean())
    if arr.size < 2:
        return {"mean": mean, "half_width": None, "n": int(arr.size)}
    sd = float(arr.std(ddof=1))
    return {"mean": mean, "half_width": 1.96 * sd / math.sqrt(arr.size), "n": int(arr.size)}


class _Queue:
    """FIFO server at a constant service rate, tracked by its idle time."""

    __slots__ = ("rate", "free_at")

    def __init__(self, rate: float):
        self.rate = rate  # bits per second; inf means instantaneous
        self.free_at = 0.0

    def backlog(self, now: float) -> float:
        if math.isinf(self.rate) or self.free_at <= now:
            return 0.0
        return (self.free_at - now) * self.rate

    def push(self, now: float, bits: float) -> float:
        start = max(self.free_at, now)
        if not math.isinf(self.rate):
            self.free_at = start + bits / self.rate
        else:
            self.free_at = start
        return self.free_at


class _LiveStates(Mapping):
    """Server states with backlogs refreshed to the current time on access."""

    def __init__(self, servers: Sequence[ServerState], proc, tf, rf):
        self._servers = {s.id: s for s in servers}
        self._proc, self._tf, self._rf = proc, tf, rf
        self.now = 0.0

    def __getitem__(self, k):
        s = self._servers[k]
        now = self.now
        s.q_s = self._proc[k].backlog(now)
        s.q_tf = self._tf[k].backlog(now)
        s.q_rf = self._rf[k].backlog(now)
        return s

    def __iter__(self):
        return iter(self._servers)

    def __len__(self):
        return len(self._servers)

    def snapshot(self) -> Dict[int, ServerState]:
        out = {}
        for k in self._servers:
            s = self[k]
            out[k] = ServerState(s.id, s.f_s, s.c_f, s.q_s, s.q_tf, s.q_rf, s.neighbors)
        return out


def generate_tasks(cfg: SimConfig, n_users: int, rng: np.random.Generator) -> List[Task]:
    """Poisson arrivals per user over the horizon; ids in arrival order."""
    raw = []
    for u in range(n_users):
        t = 0.0
        while cfg.gen_rate > 0:
            t += rng.exponential(1.0 / cfg.gen_rate)
            if t >= cfg.sim_horizon:
                break
            size = rng.uniform(cfg.task_size_range[0], cfg.task_size_range[1])
            raw.append((t, u, size))
    raw.sort()
    return [Task(id=i, size=float(sz), created_at=float(t), owner=u) for i, (t, u, sz) in enumerate(raw)]


def run(cfg: SimConfig, topo: Topology, strategy, seed: Optional[int] = None,
        audit: Optional[Callable[[float, Dict[str, float]], None]] = None) -> RunResult:
    """Simulate ``sim_horizon`` seconds of arrivals and drain every queue.

    ``audit`` (tests only) is called after each event with the bit ledger.
    """
    strategy = Strategy.parse(strategy) if isinstance(strategy, str) else strategy
    seed = cfg.seed if seed is None else seed
    streams = rng_streams(seed)
    kappa, gamma, D_u = cfg.kappa, cfg.gamma, cfg.unit_delay

    servers = [ServerState(s.id, s.f_s, s.c_f, neighbors=s.neighbors) for s in topo.servers]
    proc = {s.id: _Queue(s.f_s / kappa) for s in servers}
    tfq = {s.id: _Queue(1.0 / s.c_f if s.c_f > 0 else math.inf) for s in servers}
    rfq = {s.id: _Queue(1.0 / s.c_f if s.c_f > 0 else math.inf) for s in servers}
    live = _LiveStates(servers, proc, tfq, rfq)
    user_free = {u.id: 0.0 for u in topo.users}
    users = {u.id: u for u in topo.users}

    tasks = generate_tasks(cfg, len(topo.users), streams["arrivals"])
    heap: List[Event] = []
    seq = 0

    def push(time, kind, payload=()):
        nonlocal seq
        heapq.heappush(heap, Event(time, KIND_ORDER[kind], seq, kind, payload))
        seq += 1

    for task in tasks:
        push(task.created_at, "task_arrival", (task.id,))
    cooperative = strategy != Strategy.LOCAL
    if cooperative:
        n_ticks = int(math.floor(cfg.sim_horizon / cfg.announce_period)) + 1 if cfg.sim_horizon > 0 else 1
        for i in range(n_ticks):
            t = i * cfg.announce_period
            if t <= cfg.sim_horizon:
                push(t, "announce_tick", (i,))

    # pending: bits committed to a processing queue (user or server) and not yet finished
    ledger = {"generated": 0.0, "completed": 0.0, "rejected": 0.0, "pending": 0.0}
    forest = None
    caps = None
    tick_states = None
    rebuilds = 0
    order_rng = streams["order"]
    records: List[TaskRecord] = []
    max_depth = MAX_DEPTH.get(strategy)

    while heap:
        ev = heapq.heappop(heap)
        now = ev.time
        live.now = now
        if ev.kind == "announce_tick":
            tick_states = live.snapshot()
            order = bcu.processing_order(tick_states.keys(), cfg.order_policy, order_rng)
            forest = bcu.build_forest(topo, list(tick_states.values()), order, kappa)
            caps = announce_round(forest, tick_states, kappa, D_u, round_index=ev.payload[0])
            rebuilds += 1
        elif ev.kind == "task_arrival":
            task = tasks[ev.payload[0]]
            user = users[task.owner]
            ledger["generated"] += task.size
            if not cooperative:
                wait = max(0.0, user_free[user.id] - now)
                work = task.size * kappa / user.f_m
                user_free[user.id] = now + wait + work
                ledger["pending"] += task.size
                push(now + wait + work, "processing_complete", (-1 - user.id, task.size))
                push(now + wait + work, "result_complete", (task.id,))
                records.append(TaskRecord(task.id, user.id, user.home_server, now, task.size, 1.0, wait + work,
                                          0.0, False, False))
            else:
                rec = _execute(task, user, now, forest, caps, live, tick_states, max_depth, cfg, proc, tfq, rfq,
                               user_free, push, ledger)
                records.append(rec)
        elif ev.kind == "processing_complete":
            who, bits = ev.payload
            ledger["completed"] += bits
            ledger["pending"] -= bits
        # fwd_complete and result_complete only mark time; their effects were
        # accounted when the task was planned
        if audit is not None:
            audit(now, dict(ledger, in_queue=ledger["pending"]))

    metrics = _metrics(records)
    horizon_tp = (math.fsum(r.size for r in records if not r.rejected) / cfg.sim_horizon
                  if cfg.sim_horizon > 0 else 0.0)
    return RunResult(metrics=metrics, trace=records, config=cfg, seed=seed, strategy=strategy,
                     forest_rebuilds=rebuilds, components=len(topo.components()), horizon_throughput=horizon_tp)


def _execute(task, user, now, forest, caps, live, tick_states, max_depth, cfg, proc, tfq, rfq, user_free, push,
             ledger) -> TaskRecord:
    kappa, gamma = cfg.kappa, cfg.gamma
    detail: PlanDetail = plan_division(forest, caps, live, user, task.size, kappa, gamma, cfg.unit_delay,
                                       max_depth=max_depth, announce_states=tick_states)
    plan = detail.plan
    # realized delays use backlogs before this task joins the queues
    server_delay = 0.0
    for s, sh in detail.shares.items():
        if sh.own_bits > 0 or sh.tf > 0:
            server_delay = max(server_delay, detail.realized_delay(s, kappa, live))

    # capacity check before anything is committed
    for s, sh in detail.shares.items():
        st = live[s]
        if st.q_s + sh.own_bits > cfg.q_max:
            return _reject(task, user, now, ledger)
        extra_tf = sh.bits_in if sh.tf > 0 else 0.0
        if st.q_tf + st.q_rf + extra_tf + gamma * sh.bits_in > cfg.qf_max:
            return _reject(task, user, now, ledger)

    for s, sh in detail.shares.items():
        if sh.own_bits > 0:
            ledger["pending"] += sh.own_bits
            done = proc[s].push(now, sh.own_bits)
            push(done, "processing_complete", (s, sh.own_bits))
        if sh.tf > 0:
            done = tfq[s].push(now, sh.bits_in)
            push(done, "fwd_complete", (s, sh.bits_in))
        rfq[s].push(now, gamma * sh.bits_in)

    local_bits = plan.alpha * task.size
    wait = max(0.0, user_free[user.id] - now)
    user_work = detail.user_delay
    user_free[user.id] = now + wait + user_work
    if local_bits > 0:
        ledger["pending"] += local_bits
        push(now + wait + local_bits * kappa / user.f_m, "processing_complete", (-1 - user.id, local_bits))
    delay = max(wait + user_work, server_delay)
    push(now + delay, "result_complete", (task.id,))
    offloaded = bool(plan.server_bits)
    return TaskRecord(task.id, user.id, user.home_server, now, task.size, plan.alpha, delay,
                      coop_distance(plan), offloaded, False, dict(plan.server_bits), dict(plan.levels_used))


def _reject(task, user, now, ledger) -> TaskRecord:
    ledger["rejected"] += task.size
    return TaskRecord(task.id, user.id, user.home_server, now, task.size, 1.0, 0.0, 0.0, False, True)


def _metrics(records: Sequence[TaskRecord]) -> MetricsRecord:
    done = [r for r in records if not r.rejected]
    rejected_bits = math.fsum(r.size for r in records if r.rejected)
    if not done:
        return MetricsRecord(rejected_bits=rejected_bits)
    delays = np.array([r.delay for r in done])
    bits = math.fsum(r.size for r in done)
    dist = [r.distance for r in done if r.offloaded]
    return MetricsRecord(
        throughput=bits / float(delays.sum()) if delays.sum() > 0 else 0.0,
        mean_delay=float(delays.mean()),
        p95_delay=float(np.percentile(delays, 95)),
        avg_coop_distance=float(np.mean(dist)) if dist else 0.0,
        tasks_completed=len(done),
        rejected_bits=rejected_bits,
    )
