"""Delay model and the periodic bottom-up capability announcement.

Capabilities in a CapabilityTable are bits per unit delay D_u. Rates used by the
division step are bits/second, i.e. capability / D_u.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional

from .bcu import CooperationForest
from .model import CapabilityTable, ServerState


@dataclass(frozen=True)
class DelayBreakdown:
    processing: float
    task_fwd: float
    result_fwd: float

    @property
    def total(self) -> float:
        return self.processing + self.task_fwd + self.result_fwd


def processing_delay(s: ServerState, l: float, kappa: float) -> float:
    return (s.q_s + l) * kappa / s.f_s


def task_fwd_delay(s: ServerState, l_tf: float) -> float:
    return (s.q_tf + l_tf) * s.c_f


def result_fwd_delay(s: ServerState, l_tf: float, gamma: float) -> float:
    return (s.q_rf + gamma * l_tf) * s.c_f


def host_unit_capability(c0_rate: float, unit_delay: float, d_tf: float, d_rf: float, q: float) -> float:
    """Bits the server itself can finish inside one unit delay, clamped at zero."""
    return max(0.0, c0_rate * (unit_delay - d_tf - d_rf) - q)


def child_unit_capability(c_announced: float, unit_delay: float, d_rf: float) -> float:
    """A child's contribution to its host, net of the return trip through the host.

    ``c_announced`` is in bits per unit delay, so the result is too.
    """
    return max(0.0, c_announced * (unit_delay - d_rf) / unit_delay)


def unit_delay_capability(s: ServerState, kappa: float, unit_delay: float, is_host: bool = True,
                          c_announced: Optional[float] = None, d_tf: Optional[float] = None,
                          d_rf: Optional[float] = None) -> float:
    """Cd for a server in host form, or for a child given its announced capability.

    Forwarding context defaults to current backlogs with no prospective load.
    """
    d_rf = s.q_rf * s.c_f if d_rf is None else d_rf
    if is_host:
        d_tf = s.q_tf * s.c_f if d_tf is None else d_tf
        return host_unit_capability(s.f_s / kappa, unit_delay, d_tf, d_rf, s.q_s)
    if c_announced is None:
        raise ValueError("child form needs the child's announced capability")
    return child_unit_capability(c_announced, unit_delay, d_rf)


def own_capability(s: ServerState, kappa: float, unit_delay: float) -> float:
    return unit_delay_capability(s, kappa, unit_delay, is_host=True)


def k_parameters(s: ServerState, kappa: float, unit_delay: float, host: Optional[ServerState] = None) -> Dict[str, float]:
    """Forwarding-degree parameters from backlogs (no prospective load).

    ``k_host`` is the server seen as host; ``k_child`` is the server seen as a
    child of ``host`` (None for a root).
    """
    d_tf = s.q_tf * s.c_f
    d_rf = s.q_rf * s.c_f
    out = {"k_host": (d_rf + d_tf + s.q_s * kappa / s.f_s) / unit_delay}
    out["k_child"] = (host.q_rf * host.c_f / unit_delay) if host is not None else 0.0
    return out


def announce_round(forest: CooperationForest, states: Mapping[int, ServerState], kappa: float,
                   unit_delay: float, round_index: int = 0) -> CapabilityTable:
    """Leaves first: each server announces its own Cd plus its children's net terms."""
    order = forest.bottom_up_order()
    raw, own, announced, k = {}, {}, {}, {}
    for u in order:
        s = states[u]
        raw[u] = s.f_s / kappa * unit_delay
        own[u] = own_capability(s, kappa, unit_delay)
        d_rf_children = s.q_rf * s.c_f
        total = own[u]
        for j in forest.children[u]:
            total += child_unit_capability(announced[j], unit_delay, d_rf_children)
        announced[u] = total
        k[u] = k_parameters(s, kappa, unit_delay)["k_host"]
    return CapabilityTable(round=round_index, raw=raw, unit_delay=own, announced=announced, k=k)


def limited_capability(forest: CooperationForest, states: Mapping[int, ServerState], table: CapabilityTable,
                       u: int, depth: Optional[int], unit_delay: float) -> float:
    """Announced capability of ``u`` when cooperation may reach only ``depth`` levels below it.

    ``depth=None`` is the unrestricted announcement from the table.
    """
    if depth is None:
        return table.announced[u]
    total = table.unit_delay[u]
    if depth <= 0:
        return total
    d_rf = states[u].q_rf * states[u].c_f
    for j in forest.children[u]:
        cj = limited_capability(forest, states, table, j, depth - 1, unit_delay)
        total += child_unit_capability(cj, unit_delay, d_rf)
    return total
