"""Core domain types for the cooperation-network simulator.

Units used throughout the package:

* frequencies in cycles/second, task sizes and queue backlogs in bits;
* processing time of ``l`` bits on a server is ``l * cycles_per_bit / f``;
* forwarding cost ``c_f`` is seconds/bit (``fwd_cycles_per_bit / f_fwd``);
* capabilities (announced ``c`` and unit-delay ``Cd``) are bits per unit delay.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

GBIT = 1e9
MBIT = 1e6
GHZ = 1e9

# Symbol -> attribute map. Kept next to the types so the doc test can check that
# every symbol resolves to a real field.
SYMBOLS: Dict[str, str] = {
    "T": "Task.size",
    "T_u": "DivisionPlan.alpha",  # alpha * T
    "T_s": "DivisionPlan.server_bits",
    "f_m": "MobileUser.f_m",
    "c_m^f": "MobileUser.c_m_f",
    "Ca_m": "MobileUser.f_m",
    "f_s": "ServerState.f_s",
    "Ca_s": "ServerState.f_s",
    "q_s": "ServerState.q_s",
    "q^tf": "ServerState.q_tf",
    "q^rf": "ServerState.q_rf",
    "c^tf": "ServerState.c_f",
    "c^rf": "ServerState.c_f",
    "gamma": "SimConfig.result_ratio",
    "kappa": "SimConfig.cycles_per_bit",
    "D_u": "SimConfig.unit_delay",
    "q^max": "SimConfig.q_max",
    "q_f^max": "SimConfig.qf_max",
    "epsilon": "WeightVector.ca",
    "delta": "WeightVector.q",
    "rho": "WeightVector.qf",
    "U_i": "selection.utility",
    "c^i": "CapabilityTable.announced",
    "c^0": "CapabilityTable.raw",
    "Cd": "CapabilityTable.unit_delay",
    "k": "CapabilityTable.k",
    "alpha": "DivisionPlan.alpha",
    "beta": "DivisionPlan.beta",
    "T'": "DivisionPlan.server_bits",
    "D_m": "DivisionPlan.predicted_delay",
    "D^tf": "DelayBreakdown.task_fwd",
    "D^rf": "DelayBreakdown.result_fwd",
    "mu": "BranchTermination.mu",
    "n": "DivisionPlan.levels_used",
    "theta": "division.divide_bcu",
    "sigma": "division.divide_bcu",
    "g(T)": "division.divide_bcu",
}


@dataclass
class SimConfig:
    n_servers: int = 200
    degree_max: int = 5
    cpu_range: Tuple[float, float] = (1 * GHZ, 20 * GHZ)
    fwd_cpu_range: Tuple[float, float] = (5 * GHZ, 15 * GHZ)
    task_size_range: Tuple[float, float] = (1 * MBIT, 8 * MBIT)
    result_ratio: float = 0.2
    cycles_per_bit: float = 500.0
    fwd_cycles_per_bit: float = 1.0
    gen_rate: float = 0.5
    unit_delay: float = 1.0
    announce_period: float = 1.0
    q_max: float = 8 * GBIT
    qf_max: float = 2 * GBIT
    sim_horizon: float = 30.0
    seed: int = 0
    n_users: int = 1
    user_cpu: float = 2 * GHZ
    user_fwd_freq: float = 10 * GHZ
    order_policy: str = "id"

    @property
    def gamma(self) -> float:
        return self.result_ratio

    @property
    def kappa(self) -> float:
        return self.cycles_per_bit

    def replace(self, **changes) -> "SimConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SimConfig(**values)


_RANGE_FIELDS = ("cpu_range", "fwd_cpu_range", "task_size_range")


def validate_config(cfg: SimConfig) -> List[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    problems = []
    if not (0.0 < cfg.result_ratio < 1.0):
        problems.append(f"result_ratio must satisfy 0 < gamma < 1, got {cfg.result_ratio}")
    for name in _RANGE_FIELDS:
        lo, hi = getattr(cfg, name)
        if not lo > 0:
            problems.append(f"{name} low end must be > 0, got {lo}")
        if lo > hi:
            problems.append(f"{name} must have lo <= hi, got ({lo}, {hi})")
    if not cfg.unit_delay > 0:
        problems.append(f"unit_delay must be > 0, got {cfg.unit_delay}")
    if cfg.cycles_per_bit < 1:
        problems.append(f"cycles_per_bit must be >= 1, got {cfg.cycles_per_bit}")
    if cfg.fwd_cycles_per_bit < 0:
        problems.append(f"fwd_cycles_per_bit must be >= 0, got {cfg.fwd_cycles_per_bit}")
    if cfg.n_servers < 1:
        problems.append(f"n_servers must be >= 1, got {cfg.n_servers}")
    if cfg.degree_max < 1:
        problems.append(f"degree_max must be >= 1, got {cfg.degree_max}")
    if cfg.gen_rate < 0:
        problems.append(f"gen_rate must be >= 0, got {cfg.gen_rate}")
    if not cfg.announce_period > 0:
        problems.append(f"announce_period must be > 0, got {cfg.announce_period}")
    if not (cfg.q_max > 0 and cfg.qf_max > 0):
        problems.append("queue caps q_max and qf_max must be > 0")
    if cfg.sim_horizon < 0:
        problems.append(f"sim_horizon must be >= 0, got {cfg.sim_horizon}")
    if cfg.n_users < 1:
        problems.append(f"n_users must be >= 1, got {cfg.n_users}")
    if not cfg.user_cpu > 0:
        problems.append(f"user_cpu must be > 0, got {cfg.user_cpu}")
    if not cfg.user_fwd_freq > 0:
        problems.append(f"user_fwd_freq must be > 0, got {cfg.user_fwd_freq}")
    if cfg.order_policy not in ("id", "random"):
        problems.append(f"order_policy must be 'id' or 'random', got {cfg.order_policy!r}")
    return problems


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration files."""


def dump_config(cfg: SimConfig, path) -> None:
    lines = ["[sim]"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ", ".join(repr(float(v)) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _line_of(text: str, key: str) -> int:
    for no, line in enumerate(text.splitlines(), start=1):
        if line.split("=", 1)[0].strip() == key:
            return no
    return 0


def load_config(path) -> SimConfig:
    """Read a ``[sim]`` key/value file. Unknown keys and bad values raise ConfigError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not parser.has_section("sim"):
        raise ConfigError(f"{path}: missing [sim] section")

    known = {f.name: f for f in fields(SimConfig)}
    defaults = SimConfig()
    values = {}
    for key, raw in parser.items("sim"):
        if key not in known:
            raise ConfigError(f"{path}:{_line_of(text, key)}: unknown key {key!r}")
        template = getattr(defaults, key)
        try:
            if isinstance(template, tuple):
                parts = [float(p) for p in raw.split(",")]
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated numbers")
                values[key] = (parts[0], parts[1])
            elif isinstance(template, bool):
                values[key] = parser.getboolean("sim", key)
            elif isinstance(template, int):
                values[key] = int(raw)
            elif isinstance(template, float):
                values[key] = float(raw)
            else:
                values[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"{path}:{_line_of(text, key)}: bad value for {key!r}: {exc}") from exc
    cfg = SimConfig(**values)
    problems = validate_config(cfg)
    if problems:
        raise ConfigError(f"{path}: invalid config: " + "; ".join(problems))
    return cfg


@dataclass
class ServerState:
    id: int
    f_s: float
    c_f: float
    q_s: float = 0.0
    q_tf: float = 0.0
    q_rf: float = 0.0
    neighbors: Tuple[int, ...] = ()

    @property
    def q_f(self) -> float:
        return self.q_tf + self.q_rf

    def rate(self, kappa: float) -> float:
        """Processing rate in bits/second."""
        return self.f_s / kappa

    def mu(self, kappa: float) -> float:
        """Queueing delay of the processing backlog, q_s * kappa / f_s."""
        return self.q_s * kappa / self.f_s


@dataclass
class MobileUser:
    id: int
    f_m: float
    c_m_f: float
    home_server: int

    def rate(self, kappa: float) -> float:
        return self.f_m / kappa


@dataclass
class Task:
    id: int
    size: float
    created_at: float
    owner: int

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError(f"task size must be > 0, got {self.size}")


@dataclass
class CapabilityTable:
    """Per-server capabilities for one announcement round, in bits per unit delay.

    ``raw`` is c^0 (f_s/kappa * D_u), ``unit_delay`` the server's own clamped Cd,
    ``announced`` the BCU-level c^i and ``k`` the forwarding-degree parameter.
    """

    round: int
    raw: Dict[int, float]
    unit_delay: Dict[int, float]
    announced: Dict[int, float]
    k: Dict[int, float] = field(default_factory=dict)


@dataclass
class DivisionPlan:
    alpha: float
    task_size: float
    predicted_delay: float
    beta: Dict[int, float] = field(default_factory=dict)
    server_bits: Dict[int, float] = field(default_factory=dict)
    levels_used: Dict[int, int] = field(default_factory=dict)
    depth: Dict[int, int] = field(default_factory=dict)
    offload_allowed: bool = True

    @property
    def local_bits(self) -> float:
        return self.alpha * self.task_size

    def conservation_error(self) -> float:
        total = self.local_bits + math.fsum(self.server_bits.values())
        return abs(total - self.task_size) / self.task_size


@dataclass
class MetricsRecord:
    throughput: float = 0.0
    mean_delay: float = 0.0
    p95_delay: float = 0.0
    avg_coop_distance: float = 0.0
    tasks_completed: int = 0
    rejected_bits: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def optional_float(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))
