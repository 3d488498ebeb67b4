"""Loop-free cooperation forest construction.

Each server, in processing order, picks at most one host among its neighbours.
A server's descendant set (its CSM) vetoes candidates that would close a loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .model import ServerState
from .selection import CandidateMatrix, select_host


@dataclass
class CooperationForest:
    parent: Dict[int, int] = field(default_factory=dict)
    children: Dict[int, List[int]] = field(default_factory=dict)
    csm: Dict[int, Set[int]] = field(default_factory=dict)

    @property
    def nodes(self) -> List[int]:
        return sorted(self.children)

    def roots(self) -> List[int]:
        return [s for s in self.nodes if s not in self.parent]

    def path_to_root(self, s: int) -> List[int]:
        path = [s]
        while path[-1] in self.parent:
            path.append(self.parent[path[-1]])
            if len(path) > len(self.children) + 1:
                raise RuntimeError("cycle in parent relation")
        return path

    def depth(self, s: int) -> int:
        return len(self.path_to_root(s)) - 1

    def subtree(self, s: int) -> List[int]:
        out, stack = [], [s]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children[u])
        return out

    def bottom_up_order(self) -> List[int]:
        """Every server appears after all of its children (leaves first)."""
        order = []
        for r in self.roots():
            # iterative post-order
            stack = [(r, False)]
            while stack:
                u, done = stack.pop()
                if done:
                    order.append(u)
                    continue
                stack.append((u, True))
                for c in reversed(self.children[u]):
                    stack.append((c, False))
        if len(order) != len(self.children):
            raise RuntimeError("cycle in parent relation: some servers unreachable from any root")
        return order

    def copy(self) -> "CooperationForest":
        return CooperationForest(
            parent=dict(self.parent),
            children={k: list(v) for k, v in self.children.items()},
            csm={k: set(v) for k, v in self.csm.items()},
        )


def conflict_check(h_s: Iterable[int], csm_s: Set[int]) -> List[int]:
    """Drop candidates that are already descendants of the choosing server."""
    return [h for h in h_s if h not in csm_s]


def _candidate_matrix(ids: Sequence[int], states: Dict[int, ServerState], kappa: float) -> CandidateMatrix:
    rows = [(kappa / states[i].f_s, states[i].q_s, states[i].q_f) for i in ids]
    return CandidateMatrix(ids=list(ids), rows=np.array(rows))


def processing_order(n_ids: Sequence[int], policy: str = "id", rng: Optional[np.random.Generator] = None) -> List[int]:
    ids = sorted(n_ids)
    if policy == "id":
        return ids
    if policy == "random":
        if rng is None:
            raise ValueError("random order policy needs a generator")
        return [ids[i] for i in rng.permutation(len(ids))]
    raise ValueError(f"unknown order policy {policy!r}")


def build_forest(topo, states: Optional[Sequence[ServerState]] = None, order: Optional[Sequence[int]] = None,
                 kappa: float = 500.0) -> CooperationForest:
    """Greedy construction: each server attaches to its best legal neighbour."""
    states = topo.servers if states is None else states
    by_id = {s.id: s for s in states}
    ids = sorted(by_id)
    order = ids if order is None else list(order)
    forest = CooperationForest(children={s: [] for s in ids}, csm={s: set() for s in ids})
    for s in order:
        cands = conflict_check(topo.adjacency[s], forest.csm[s])
        if not cands:
            continue
        h = select_host(_candidate_matrix(cands, by_id, kappa))
        forest.parent[s] = h
        forest.children[h].append(s)
        carried = forest.csm[s] | {s}
        a: Optional[int] = h
        while a is not None:
            forest.csm[a] |= carried
            a = forest.parent.get(a)
    for s in ids:
        forest.children[s].sort()
    return forest


def bcu_of(forest: CooperationForest, s: int) -> Tuple[int, List[int]]:
    if s not in forest.children:
        raise KeyError(f"unknown server id {s}")
    return s, list(forest.children[s])


def has_cycle(parent: Dict[int, int]) -> bool:
    """Independent check by colouring a depth-first walk over parent pointers."""
    state: Dict[int, int] = {}
    for start in parent:
        path = []
        u = start
        while u in parent and state.get(u, 0) == 0:
            state[u] = 1
            path.append(u)
            u = parent[u]
        if state.get(u, 0) == 1 and u in parent:
            return True
        for p in path:
            state[p] = 2
    return False


def check_forest(forest: CooperationForest, topo) -> List[str]:
    problems = []
    if has_cycle(forest.parent):
        problems.append("parent relation has a cycle")
        return problems
    for s, h in forest.parent.items():
        if h not in topo.adjacency[s]:
            problems.append(f"parent {h} of {s} is not a neighbour")
    for s in forest.nodes:
        desc = set(forest.subtree(s)) - {s}
        if forest.csm[s] != desc:
            problems.append(f"csm of {s} differs from its descendants")
        if s in forest.csm[s]:
            problems.append(f"{s} is in its own csm")
    return problems


def dump_forest(forest: CooperationForest, path) -> None:
    lines = [f"{s} {forest.parent.get(s, -1)}" for s in forest.nodes]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
