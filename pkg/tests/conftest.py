import sys

import pytest

from conet.model import MobileUser, ServerState
from conet.topology import from_edges


def chain_topology(f_s, c_f, user=None):
    """Path graph 0 - 1 - ... - n-1."""
    n = len(f_s)
    return from_edges(n, [(i, i + 1) for i in range(n - 1)], f_s, c_f, user)


def states_of(topo, queues=None):
    queues = queues or {}
    out = {}
    for s in topo.servers:
        q = queues.get(s.id, (0.0, 0.0, 0.0))
        out[s.id] = ServerState(s.id, s.f_s, s.c_f, q[0], q[1], q[2], s.neighbors)
    return out


@pytest.fixture
def zero_user():
    # free forwarding for the user, 1 bit/s processing with kappa=1
    return MobileUser(0, 1.0, 0.0, 0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
