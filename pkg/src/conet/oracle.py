"""Centralized min-max unit allocation and the empirical approximation ratio.

A task of ``m`` equal units is spread over ``N`` servers; server i finishes
``n`` units after ``overhead[i] + n * unit_bits * per_bit[i]`` seconds. The
centralized optimum minimizes the largest of these.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .division import PlanDetail

EXACT_LIMIT = 10 ** 6


@dataclass
class UnitInstance:
    per_bit: Sequence[float]  # seconds per bit (Ca plus any per-bit forwarding cost)
    overhead: Sequence[float]  # seconds that do not depend on the allocation
    m: int
    unit_bits: float = 1.0

    def __post_init__(self):
        if len(self.per_bit) != len(self.overhead):
            raise ValueError("per_bit and overhead must have one entry per server")
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError("m must be a non-negative integer")
        self.m = int(self.m)

    @property
    def n(self) -> int:
        return len(self.per_bit)

    def delay(self, i: int, units: int) -> float:
        return self.overhead[i] + units * self.unit_bits * self.per_bit[i]

    def makespan(self, alloc: Sequence[int]) -> float:
        return max(self.delay(i, k) for i, k in enumerate(alloc))


@dataclass
class OracleResult:
    allocation: Tuple[int, ...]
    d_star: float
    exact: bool


@dataclass
class RatioReport:
    d_m: float
    d_star: Optional[float]
    delta: Optional[float]
    bound_lo: float
    bound_hi: float
    exact: bool
    d_predicted: float = 0.0
    participants: int = 0

    CSV_HEADER = ("delta", "d_m", "d_star", "bound_lo", "bound_hi", "exact")

    def csv_row(self) -> Tuple:
        fmt = lambda x: "" if x is None else repr(float(x))
        return (fmt(self.delta), fmt(self.d_m), fmt(self.d_star), fmt(self.bound_lo), fmt(self.bound_hi),
                str(bool(self.exact)).lower())


def brute_force(inst: UnitInstance) -> OracleResult:
    """Enumerate every composition of m into N parts; ties go to the smallest tuple."""
    best = None
    for cut in itertools.combinations(range(inst.m + inst.n - 1), inst.n - 1):
        parts, prev = [], -1
        for c in cut:
            parts.append(c - prev - 1)
            prev = c
        parts.append(inst.m + inst.n - 2 - prev)
        key = (inst.makespan(parts), tuple(parts))
        if best is None or key < best:
            best = key
    return OracleResult(allocation=best[1], d_star=best[0], exact=True)


def _solve_exact(inst: UnitInstance) -> OracleResult:
    n, m = inst.n, inst.m
    # tail[i][k]: best makespan for servers i.. carrying k units
    tail = [[math.inf] * (m + 1) for _ in range(n + 1)]
    tail[n][0] = -math.inf
    for i in range(n - 1, -1, -1):
        d = [inst.delay(i, k) for k in range(m + 1)]
        nxt = tail[i + 1]
        row = tail[i]
        for k in range(m + 1):
            row[k] = min(max(d[j], nxt[k - j]) for j in range(k + 1))
    d_star = tail[0][m]
    # smallest count that still admits an optimal completion, position by position,
    # gives the lexicographically smallest optimum
    alloc, left = [], m
    for i in range(n):
        for j in range(left + 1):
            if max(inst.delay(i, j), tail[i + 1][left - j]) <= d_star:
                alloc.append(j)
                left -= j
                break
    return OracleResult(allocation=tuple(alloc), d_star=d_star, exact=True)


def _solve_local(inst: UnitInstance) -> OracleResult:
    alloc = [0] * inst.n
    heap = [(inst.delay(i, 1), i) for i in range(inst.n)]
    heapq.heapify(heap)
    for _ in range(inst.m):
        _, i = heapq.heappop(heap)
        alloc[i] += 1
        heapq.heappush(heap, (inst.delay(i, alloc[i] + 1), i))
    # pairwise exchange: move a unit off the bottleneck while it strictly helps
    improved = True
    while improved and inst.m > 0:
        improved = False
        cur = inst.makespan(alloc)
        worst = max(range(inst.n), key=lambda i: (inst.delay(i, alloc[i]), -i))
        if alloc[worst] == 0:
            break
        for j in range(inst.n):
            if j == worst:
                continue
            alloc[worst] -= 1
            alloc[j] += 1
            if inst.makespan(alloc) < cur:
                improved = True
                break
            alloc[worst] += 1
            alloc[j] -= 1
    return OracleResult(allocation=tuple(alloc), d_star=inst.makespan(alloc), exact=False)


def solve_optimal(inst: UnitInstance, exact: Optional[bool] = None) -> OracleResult:
    if inst.n == 0:
        raise ValueError("no servers")
    if inst.m == 0:
        return OracleResult(allocation=(0,) * inst.n, d_star=inst.makespan([0] * inst.n), exact=True)
    if exact is None:
        exact = inst.m * inst.n <= EXACT_LIMIT and inst.m * inst.m * inst.n <= 5 * 10 ** 7
    return _solve_exact(inst) if exact else _solve_local(inst)


def quantize(bits: Sequence[float], m: int) -> List[int]:
    """Largest-remainder rounding of a bit split onto m units."""
    total = math.fsum(bits)
    if total <= 0:
        return [0] * len(bits)
    exact = [b / total * m for b in bits]
    base = [int(math.floor(x)) for x in exact]
    short = m - sum(base)
    order = sorted(range(len(bits)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def instance_from_plan(detail: PlanDetail, states, kappa: float, gamma: float, m: int) -> Tuple[UnitInstance, List[int], List[int]]:
    """Same participants and delay terms as the decentralized plan.

    Returns the instance, the participating server ids, and the plan's split
    rounded onto the same unit grid.
    """
    ids = sorted(s for s, sh in detail.shares.items() if sh.own_bits > 0)
    per_bit, overhead, bits = [], [], []
    for s in ids:
        sh, st = detail.shares[s], states[s]
        per_bit.append(kappa / st.f_s + gamma * st.c_f)
        overhead.append(sh.offset + st.q_s * kappa / st.f_s + sh.tf + st.q_rf * st.c_f)
        bits.append(sh.own_bits)
    total = math.fsum(bits)
    inst = UnitInstance(per_bit=per_bit, overhead=overhead, m=m, unit_bits=total / m if m else 0.0)
    return inst, ids, quantize(bits, m)


def delay_extremes(detail: PlanDetail, states, kappa: float) -> Tuple[float, float]:
    """D_min and D_max over participants' forwarding and queueing delays."""
    rf, tf, mu = [], [], []
    for s, sh in detail.shares.items():
        if sh.own_bits <= 0 and sh.tf <= 0:
            continue
        st = states[s]
        rf.append(sh.rf_own)
        if sh.parent is not None:
            rf.append(sh.rf_edge)
        if sh.tf > 0:
            tf.append(sh.tf)
        mu.append(st.q_s * kappa / st.f_s)
    groups = [g for g in (rf, tf, mu) if g]
    d_min = min(min(g) for g in groups)
    d_max = max(max(g) for g in groups)
    return d_min, d_max


def measure_ratio(detail: PlanDetail, states, kappa: float, gamma: float, m: int = 12,
                  exact: Optional[bool] = True) -> RatioReport:
    inst, ids, dec_alloc = instance_from_plan(detail, states, kappa, gamma, m)
    d_min, d_max = delay_extremes(detail, states, kappa) if ids else (0.0, 0.0)
    if d_min > 0:
        lo, hi = d_min / d_max, d_max / d_min
    else:
        lo, hi = 0.0, math.inf
    if not ids:
        return RatioReport(0.0, None, None, lo, hi, False, detail.plan.predicted_delay, 0)
    d_m = inst.makespan(dec_alloc)
    res = solve_optimal(inst, exact=exact)
    delta = d_m / res.d_star if res.d_star > 0 else None
    return RatioReport(d_m=d_m, d_star=res.d_star, delta=delta, bound_lo=lo, bound_hi=hi, exact=res.exact,
                       d_predicted=detail.plan.predicted_delay, participants=len(ids))


def bound_check(report: RatioReport, slack: float = 1e-9) -> bool:
    if report.delta is None:
        return False
    return 1.0 - slack <= report.delta <= report.bound_hi + slack


def random_instance(rng: np.random.Generator, n_max: int = 4, m_max: int = 12) -> UnitInstance:
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    per_bit = rng.uniform(0.2, 2.0, size=n)
    overhead = rng.uniform(0.0, 3.0, size=n) * (rng.random(size=n) < 0.7)
    return UnitInstance(per_bit=list(per_bit), overhead=list(overhead), m=m, unit_bits=1.0)
