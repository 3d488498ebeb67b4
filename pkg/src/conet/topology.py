"""Random edge-server graph generation and user placement."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import MobileUser, ServerState, SimConfig

STREAMS = ("topology", "placement", "arrivals", "order")


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators per concern so that changing one knob (say the
    server count) leaves the other draws untouched."""
    children = np.random.SeedSequence(int(seed)).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


@dataclass
class Topology:
    servers: List[ServerState]
    adjacency: Dict[int, List[int]]
    users: List[MobileUser]
    f_fwd: List[float]

    @property
    def user(self) -> MobileUser:
        return self.users[0]

    @property
    def n(self) -> int:
        return len(self.servers)

    def degree(self, s: int) -> int:
        return len(self.adjacency[s])

    def components(self) -> List[List[int]]:
        seen = set()
        comps = []
        for s in range(self.n):
            if s in seen:
                continue
            comp = []
            stack = [s]
            seen.add(s)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self.adjacency[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            comps.append(sorted(comp))
        return comps


def _wire(degrees: np.ndarray, degree_max: int, rng: np.random.Generator) -> List[set]:
    n = len(degrees)
    adj = [set() for _ in range(n)]
    stubs = np.repeat(np.arange(n), degrees)
    rng.shuffle(stubs)
    for a, b in zip(stubs[0::2], stubs[1::2]):
        a, b = int(a), int(b)
        # self-loops, duplicates and the odd leftover stub are dropped
        if a != b and b not in adj[a]:
            adj[a].add(b)
            adj[b].add(a)
    # dropped stubs may leave a node isolated; give it one legal partner
    for s in range(n):
        if adj[s]:
            continue
        options = [t for t in range(n) if t != s and len(adj[t]) < degree_max]
        if not options:
            raise ValueError("degree constraints unsatisfiable: isolated server with no free partner")
        t = options[int(rng.integers(len(options)))]
        adj[s].add(t)
        adj[t].add(s)
    return adj


def generate(cfg: SimConfig, seed: Optional[int] = None) -> Topology:
    if cfg.n_servers < 2:
        raise ValueError("need at least 2 servers to satisfy degree >= 1")
    seed = cfg.seed if seed is None else seed
    streams = rng_streams(seed)
    rng = streams["topology"]
    n = cfg.n_servers
    degrees = rng.integers(1, cfg.degree_max + 1, size=n)
    adj = _wire(degrees, cfg.degree_max, rng)
    f_s = rng.uniform(cfg.cpu_range[0], cfg.cpu_range[1], size=n)
    f_fwd = rng.uniform(cfg.fwd_cpu_range[0], cfg.fwd_cpu_range[1], size=n)
    servers = [
        ServerState(
            id=s,
            f_s=float(f_s[s]),
            c_f=cfg.fwd_cycles_per_bit / float(f_fwd[s]),
            neighbors=tuple(sorted(adj[s])),
        )
        for s in range(n)
    ]
    homes = streams["placement"].integers(0, n, size=cfg.n_users)
    users = [
        MobileUser(id=u, f_m=cfg.user_cpu, c_m_f=cfg.fwd_cycles_per_bit / cfg.user_fwd_freq, home_server=int(h))
        for u, h in enumerate(homes)
    ]
    adjacency = {s: sorted(adj[s]) for s in range(n)}
    return Topology(servers=servers, adjacency=adjacency, users=users, f_fwd=[float(x) for x in f_fwd])


def hop_distance(topo: Topology, a: int, b: int) -> Optional[int]:
    """Shortest-path hop count, or None when a and b are in different components."""
    for x in (a, b):
        if x not in topo.adjacency:
            raise KeyError(f"unknown server id {x}")
    if a == b:
        return 0
    dist = {a: 0}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for v in topo.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                if v == b:
                    return dist[v]
                queue.append(v)
    return None


def dump_topology(topo: Topology, path) -> None:
    lines = []
    for s in topo.servers:
        nb = ",".join(str(v) for v in topo.adjacency[s.id])
        lines.append(f"{s.id} {s.f_s!r} {topo.f_fwd[s.id]!r} {nb}")
    for u in topo.users:
        lines.append(f"user {u.id} {u.f_m!r} {u.c_m_f!r} {u.home_server}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_topology(path, fwd_cycles_per_bit: float) -> Topology:
    servers, f_fwd, users = [], [], []
    adjacency: Dict[int, List[int]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "user":
            users.append(MobileUser(int(parts[1]), float(parts[2]), float(parts[3]), int(parts[4])))
            continue
        sid = int(parts[0])
        nb = [int(v) for v in parts[3].split(",")] if len(parts) > 3 else []
        adjacency[sid] = nb
        f_fwd.append(float(parts[2]))
        servers.append(ServerState(sid, float(parts[1]), fwd_cycles_per_bit / float(parts[2]), neighbors=tuple(nb)))
    return Topology(servers=servers, adjacency=adjacency, users=users, f_fwd=f_fwd)


def from_edges(
    n: int,
    edges: Sequence[tuple],
    f_s: Sequence[float],
    c_f: Sequence[float],
    user: Optional[MobileUser] = None,
) -> Topology:
    """Build a hand-made topology (used for fixtures)."""
    adj = {s: set() for s in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    servers = [ServerState(s, float(f_s[s]), float(c_f[s]), neighbors=tuple(sorted(adj[s]))) for s in range(n)]
    users = [user] if user is not None else [MobileUser(0, 1.0, 0.0, 0)]
    f_fwd = [1.0 / c if c > 0 else float("inf") for c in c_f]
    return Topology(servers=servers, adjacency={s: sorted(v) for s, v in adj.items()}, users=users, f_fwd=f_fwd)
