"""User/server offloading split, recursive in-BCU division and branch termination.

All capabilities here are rates in bits/second and all delays are seconds. The
user's processing capability ``f_m`` is likewise a rate (f_m / kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .bcu import CooperationForest
from .capacity import limited_capability
from .model import CapabilityTable, DivisionPlan, MobileUser, ServerState


@dataclass
class OffloadDecision:
    alpha: float
    offload_allowed: bool
    predicted_delay: float


@dataclass
class BranchTermination:
    """One branch of the division tree ended by the terminal check.

    ``path`` runs from the home server to the excluded server; ``levels`` is the
    level of the excluded server (home is level 1). ``rf`` and ``tf`` hold one
    value per hop and ``mu`` one value per server on the path.
    """

    path: List[int]
    rf: List[float]
    tf: List[float]
    mu: List[float]
    accumulated: float
    terminated: bool = True

    @property
    def levels(self) -> int:
        return len(self.path)


@dataclass
class BCUDivision:
    raw: Dict[int, float]
    beta: Dict[int, float]
    shares: Dict[int, float]
    terminated: bool = False


@dataclass
class ServerShare:
    """Everything the plan knows about one participating server."""

    server: int
    parent: Optional[int]
    level: int
    bits_in: float  # bits arriving at this server for its whole subtree
    own_bits: float
    budget: float
    tf: float = 0.0  # own task forwarding delay, zero if it did not divide
    rf_own: float = 0.0  # returning its own result
    rf_edge: float = 0.0  # charged at the parent for this subtree's results
    offset: float = 0.0  # ancestors' tf + rf on the way in and out
    model_offset: float = 0.0  # rf edges from here up to home, the in-BCU delay model
    mu: float = 0.0
    cap: float = 0.0  # capability rate the parent sized this share with
    divided: bool = False


@dataclass
class PlanDetail:
    plan: DivisionPlan
    shares: Dict[int, ServerShare] = field(default_factory=dict)
    bcu_beta: Dict[int, Dict[int, float]] = field(default_factory=dict)
    branches: List[BranchTermination] = field(default_factory=list)
    user_delay: float = 0.0

    def realized_delay(self, s: int, kappa: float, states: Mapping[int, ServerState]) -> float:
        sh = self.shares[s]
        st = states[s]
        return sh.offset + (st.q_s + sh.own_bits) * kappa / st.f_s + sh.tf + sh.rf_own

    def model_delay(self, s: int, kappa: float, states: Mapping[int, ServerState]) -> float:
        """Planned delay: host form for the home and dividing servers, child form
        (share over announced capability plus the return via the host) otherwise."""
        sh = self.shares[s]
        if sh.parent is None or sh.divided:
            st = states[s]
            return sh.model_offset + (st.q_s + sh.own_bits) * kappa / st.f_s + sh.tf + sh.rf_own
        if sh.cap <= 0:
            return math.inf
        return sh.model_offset + sh.own_bits / sh.cap


def offload_gate(f_m: float, c_m_f: float, c: float) -> bool:
    if c_m_f == 0:
        return True
    if c < 1.0 / c_m_f:
        return True
    return f_m * c_m_f > 1 and c > f_m / (f_m * c_m_f - 1)


def alpha_of(f_m: float, c_m_f: float, c: float) -> float:
    a = f_m * (1.0 - c_m_f * c)
    return a / (c + a)


def split_user_server(T: float, f_m: float, c_m_f: float, c: float) -> OffloadDecision:
    if not offload_gate(f_m, c_m_f, c):
        return OffloadDecision(alpha=1.0, offload_allowed=False, predicted_delay=T / f_m)
    a = f_m * (1.0 - c_m_f * c)
    denom = c + a
    if denom <= 0:
        raise ArithmeticError(f"gate admitted c={c} but the split denominator is {denom}")
    return OffloadDecision(alpha=a / denom, offload_allowed=True, predicted_delay=T / denom)


def host_raw_share(c0: float, D: float, T_in: float, q: float, q_tf: float, q_rf: float, c_f: float,
                   gamma: float) -> float:
    sigma = (q_rf + q_tf) * c_f
    return (c0 * (D - c_f * T_in - sigma) - q) / (1.0 + gamma * c_f * c0)


def child_raw_share(c_j: float, D: float, host_q_rf: float, host_c_f: float, gamma: float) -> float:
    theta = host_q_rf * host_c_f
    return c_j * (D - theta) / (1.0 + gamma * c_j * host_c_f)


def divide_bcu(T_in: float, host: ServerState, c0: float, children_caps: Sequence[Tuple[int, float]], D: float,
               gamma: float) -> BCUDivision:
    """Split ``T_in`` between a host and its admitted children.

    Raw shares equalize delays to ``D``; negatives are clamped and the rest is
    rescaled so the shares sum to ``T_in`` exactly. If nothing is positive the
    host keeps everything and the division reports termination.
    """
    raw = {host.id: host_raw_share(c0, D, T_in, host.q_s, host.q_tf, host.q_rf, host.c_f, gamma)}
    for j, cj in children_caps:
        raw[j] = child_raw_share(cj, D, host.q_rf, host.c_f, gamma)
    clamped = {k: max(0.0, v) for k, v in raw.items()}
    total = math.fsum(clamped.values())
    if total <= 0 or T_in <= 0:
        beta = {k: (1.0 if k == host.id else 0.0) for k in raw}
        return BCUDivision(raw=raw, beta=beta, shares={k: b * T_in for k, b in beta.items()}, terminated=total <= 0)
    beta = {k: v / total for k, v in clamped.items()}
    shares = {k: b * T_in for k, b in beta.items()}
    # push the rounding residue onto the largest share so the sum is exact
    residue = T_in - math.fsum(shares.values())
    if residue:
        big = max(shares, key=lambda k: (shares[k], -k))
        shares[big] += residue
    return BCUDivision(raw=raw, beta=beta, shares=shares)


def terminal_check(accumulated: float, D_m: float) -> bool:
    return accumulated >= D_m


def level_bounds(rf_min: float, rf_max: float, tf_min: float, tf_max: float, mu_min: float, mu_max: float,
                 D_m: float) -> Tuple[float, float]:
    lo_den = rf_max + tf_max
    hi_den = rf_min + tf_min
    lower = 1.0 + (D_m - mu_max) / lo_den if lo_den > 0 else (-math.inf if D_m < mu_max else math.inf)
    upper = 1.0 + (D_m - mu_min) / hi_den if hi_den > 0 else math.inf
    return lower, upper


def branch_bounds(branch: BranchTermination, D_m: float) -> Tuple[float, float]:
    return level_bounds(min(branch.rf), max(branch.rf), min(branch.tf), max(branch.tf),
                        min(branch.mu), max(branch.mu), D_m)


def plan_division(forest: CooperationForest, caps: CapabilityTable, states: Mapping[int, ServerState],
                  user: MobileUser, T: float, kappa: float, gamma: float, unit_delay: float,
                  max_depth: Optional[int] = None, announce_states: Optional[Mapping[int, ServerState]] = None,
                  ) -> PlanDetail:
    """Plan one task: user split at the home server, then recursive division.

    ``states`` are the backlogs at planning time. ``announce_states`` are the
    backlogs the capability table was computed from (defaults to ``states``);
    they matter only for depth-limited strategies, which re-derive capability.
    ``max_depth`` limits how many levels below the home server may take bits.
    """
    home = user.home_server
    if home not in states or home not in forest.children:
        raise KeyError(f"unknown home server {home}")
    announce_states = states if announce_states is None else announce_states

    def cap_rate(u: int, depth_left: Optional[int]) -> float:
        return limited_capability(forest, announce_states, caps, u, depth_left, unit_delay) / unit_delay

    f_m = user.f_m / kappa
    c_home = cap_rate(home, max_depth)
    decision = split_user_server(T, f_m, user.c_m_f, c_home)
    alpha = decision.alpha
    D_m = decision.predicted_delay
    plan = DivisionPlan(alpha=alpha, task_size=T, predicted_delay=D_m, offload_allowed=decision.offload_allowed)
    detail = PlanDetail(plan=plan)
    T_off = T - alpha * T
    detail.user_delay = alpha * T / f_m + T_off * user.c_m_f
    if T_off <= 0:
        return detail

    def mu_of(u: int) -> float:
        st = states[u]
        return st.q_s * kappa / st.f_s

    # iterative depth-first division; each stack entry is a server that has received bits
    root = ServerShare(server=home, parent=None, level=1, bits_in=T_off, own_bits=0.0, budget=D_m, mu=mu_of(home))
    # per-server trail for termination records: (path, rf per hop, tf per hop, mu per server)
    trails = {home: ([home], [], [], [root.mu], 0.0)}
    stack = [root]
    while stack:
        sh = stack.pop()
        u = sh.server
        st = states[u]
        detail.shares[u] = sh
        depth = sh.level - 1
        c0 = st.f_s / kappa
        path, rfs, tfs, mus, acc = trails[u]
        can_divide = max_depth is None or depth < max_depth
        admitted = []
        if can_divide and forest.children[u]:
            tf_prospective = (st.q_tf + sh.bits_in) * st.c_f
            rf_idle = st.q_rf * st.c_f
            for j in forest.children[u]:
                mu_j = mu_of(j)
                over = acc + tf_prospective + rf_idle + mu_j
                if terminal_check(over, D_m):
                    detail.branches.append(BranchTermination(
                        path=path + [j], rf=rfs + [rf_idle], tf=tfs + [tf_prospective], mu=mus + [mu_j],
                        accumulated=over))
                    continue
                left = None if max_depth is None else max_depth - depth - 1
                admitted.append((j, cap_rate(j, left)))
        if not admitted:
            sh.own_bits = sh.bits_in
            sh.tf = 0.0
            sh.rf_own = (st.q_rf + gamma * sh.own_bits) * st.c_f
            continue
        div = divide_bcu(sh.bits_in, st, c0, admitted, sh.budget, gamma)
        sh.own_bits = div.shares[u]
        detail.bcu_beta[u] = div.beta
        children_with_bits = [j for j, _ in admitted if div.shares[j] > 0]
        if not children_with_bits:
            sh.own_bits = sh.bits_in
            sh.tf = 0.0
            sh.rf_own = (st.q_rf + gamma * sh.own_bits) * st.c_f
            continue
        sh.divided = True
        sh.tf = (st.q_tf + sh.bits_in) * st.c_f
        sh.rf_own = (st.q_rf + gamma * sh.own_bits) * st.c_f
        caps_of = dict(admitted)
        for j in reversed(children_with_bits):
            bits = div.shares[j]
            rf_edge = (st.q_rf + gamma * bits) * st.c_f
            child = ServerShare(
                server=j, parent=u, level=sh.level + 1, bits_in=bits, own_bits=0.0,
                budget=sh.budget - rf_edge, rf_edge=rf_edge,
                offset=sh.offset + sh.tf + rf_edge,
                model_offset=sh.model_offset + rf_edge,
                mu=mu_of(j),
                cap=caps_of[j],
            )
            trails[j] = (path + [j], rfs + [rf_edge], tfs + [sh.tf], mus + [child.mu], acc + sh.tf + rf_edge)
            stack.append(child)

    # final shares, betas relative to the whole offloaded amount
    for u, sh in detail.shares.items():
        if sh.own_bits > 0:
            plan.server_bits[u] = sh.own_bits
            plan.depth[u] = sh.level - 1
    total_off = math.fsum(plan.server_bits.values())
    plan.beta = {u: b / total_off for u, b in plan.server_bits.items()}
    # levels per branch: deepest participating level along each leaf's path
    for u, sh in detail.shares.items():
        if not any(detail.shares[c].parent == u for c in forest.children[u] if c in detail.shares):
            plan.levels_used[u] = sh.level
    return detail


def spread(values: Sequence[float]) -> float:
    """Relative spread (max - min) / max of a set of delays."""
    values = [v for v in values]
    hi = max(values)
    if hi <= 0:
        return 0.0
    return (hi - min(values)) / hi
