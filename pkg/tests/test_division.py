import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conet import cli, division
from conet.bcu import build_forest
from conet.capacity import announce_round
from conet.division import (alpha_of, branch_bounds, divide_bcu, host_raw_share, level_bounds, offload_gate,
                            plan_division, split_user_server, spread, terminal_check)
from conet.model import MobileUser, ServerState, SimConfig
from conet.topology import from_edges

from conftest import chain_topology, states_of

KAPPA, GAMMA = 500.0, 0.2


def test_gate_examples():
    assert offload_gate(1.0, 0.1, 3.0)
    assert not offload_gate(1.0, 0.1, 12.0)
    assert offload_gate(1.0, 0.0, 1e12)


def test_split_example():
    d = split_user_server(37.0, 1.0, 0.1, 3.0)
    assert d.alpha == pytest.approx(7 / 37)
    assert d.predicted_delay == pytest.approx(10.0)
    user_line = d.alpha * 37 / 1.0 + (1 - d.alpha) * 37 * 0.1
    assert user_line == pytest.approx(10.0)
    assert (1 - d.alpha) * 37 / 3.0 == pytest.approx(10.0)


def test_second_gate_branch_has_no_valid_split():
    # f_m*c_m_f > 1 and c above the second threshold: the gate admits, but the
    # split's denominator is negative, so no alpha in [0, 1] exists
    f_m, c_m_f, c = 1.0, 2.0, 5.0
    assert offload_gate(f_m, c_m_f, c)
    assert alpha_of(f_m, c_m_f, c) > 1
    with pytest.raises(ArithmeticError):
        split_user_server(10.0, f_m, c_m_f, c)


def test_split_limits():
    assert split_user_server(10.0, 1.0, 0.1, 1e-12).alpha == pytest.approx(1.0)
    assert split_user_server(10.0, 2.0, 0.0, 2.0).alpha == pytest.approx(0.5)
    refused = split_user_server(10.0, 1.0, 0.1, 12.0)
    assert refused.alpha == 1.0 and not refused.offload_allowed


def test_free_forwarding_shares_proportional():
    host = ServerState(0, 2.0, 0.0)
    div = divide_bcu(10.0, host, 2.0, [(1, 3.0), (2, 5.0)], D=4.0, gamma=GAMMA)
    assert [div.beta[k] for k in (0, 1, 2)] == pytest.approx([0.2, 0.3, 0.5])
    assert [div.shares[k] for k in (0, 1, 2)] == pytest.approx([2.0, 3.0, 5.0])


def test_single_server_bcu():
    div = divide_bcu(10.0, ServerState(0, 2.0, 0.1, q_s=1.0), 2.0, [], D=4.0, gamma=GAMMA)
    assert div.beta == {0: 1.0} and div.shares[0] == 10.0


def test_all_clamped_keeps_everything_at_host():
    host = ServerState(0, 2.0, 1.0, q_s=100.0, q_rf=50.0)
    div = divide_bcu(10.0, host, 2.0, [(1, 3.0)], D=1.0, gamma=GAMMA)
    assert div.terminated and div.shares == {0: 10.0, 1: 0.0}


def test_terminal_check_examples():
    assert not terminal_check(0.0, 1.0)
    assert terminal_check(1.0, 1.0)
    assert terminal_check(1.5, 1.0)


def test_level_bounds_examples():
    lo, hi = level_bounds(0.1, 0.1, 0.2, 0.2, 0.3, 0.3, D_m=1.2)
    assert lo == pytest.approx(hi) == pytest.approx(1 + 0.9 / 0.3)
    lo, _ = level_bounds(0.1, 0.2, 0.1, 0.2, 0.0, 1.0, D_m=1.0)
    assert lo == 1.0


def test_gate_refusal_plan():
    topo = from_edges(2, [(0, 1)], [8e9, 8e9], [1e-9, 1e-9])
    forest = build_forest(topo)
    states = states_of(topo)
    caps = announce_round(forest, states, KAPPA, 1.0)
    # user forwarding so slow that offloading never pays: c >= 1/c_m_f and f_m*c_m_f <= 1
    assert caps.announced[0] >= 1e7 and 2e9 / KAPPA * 1e-7 <= 1
    user = MobileUser(0, 2e9, 1e-7, forest.roots()[0])
    d = plan_division(forest, caps, states, user, 4e6, KAPPA, GAMMA, 1.0)
    assert d.plan.alpha == 1.0 and not d.plan.server_bits and not d.plan.offload_allowed


def test_single_root_plan_matches_split():
    topo = from_edges(2, [(0, 1)], [8e9, 8e9], [1e-9, 1e-9])
    forest = build_forest(topo)
    forest.parent.clear()
    forest.children = {0: [], 1: []}
    states = states_of(topo)
    caps = announce_round(forest, states, KAPPA, 1.0)
    user = MobileUser(0, 2e9, 1e-10, 0)
    d = plan_division(forest, caps, states, user, 4e6, KAPPA, GAMMA, 1.0)
    ref = split_user_server(4e6, 2e9 / KAPPA, 1e-10, caps.announced[0])
    assert d.plan.alpha == ref.alpha and d.plan.predicted_delay == ref.predicted_delay
    assert d.plan.server_bits == {0: pytest.approx((1 - ref.alpha) * 4e6)}


def tree7():
    """Binary tree rooted at 0; the two deepest queued servers end their branches."""
    edges = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]
    topo = from_edges(7, edges, [8e9] * 7, [1e-9] * 7)
    forest = build_forest(topo, order=[3, 4, 5, 6, 1, 2, 0])
    q = {0: (1e5, 0, 0), 1: (0, 2e5, 0), 2: (5e4, 0, 1e5), 3: (6e5, 0, 0), 5: (5e5, 0, 0), 6: (2e4, 0, 0)}
    states = states_of(topo, q)
    caps = announce_round(forest, states, KAPPA, 1.0)
    user = MobileUser(0, 2e9, 1e-10, 0)
    return forest, states, caps, user


def test_tree7_levels_within_bounds():
    forest, states, caps, user = tree7()
    assert forest.parent == {3: 1, 4: 1, 5: 2, 6: 2, 1: 0, 2: 0}
    d = plan_division(forest, caps, states, user, 4e6, KAPPA, GAMMA, 1.0)
    assert sorted(b.path for b in d.branches) == [[0, 1, 3], [0, 2, 5]]
    assert set(d.plan.server_bits) == {0, 1, 2, 4, 6}
    D_m = d.plan.predicted_delay
    for b in d.branches:
        assert b.levels == 3
        # bounds evaluated by hand from the branch's own extremes
        lo = 1 + (D_m - max(b.mu)) / (max(b.rf) + max(b.tf))
        hi = 1 + (D_m - min(b.mu)) / (min(b.rf) + min(b.tf))
        assert branch_bounds(b, D_m) == pytest.approx((lo, hi))
        assert lo < b.levels < hi
    assert d.plan.conservation_error() < 1e-12


def test_chain_terminates_exactly_at_level_three():
    topo = chain_topology([8e9] * 4, [1e-9] * 4)
    forest = build_forest(topo, order=[3, 2, 1, 0])
    states = states_of(topo, {2: (1.6e6, 0, 0)})  # 0.1 s of backlog at level 3
    caps = announce_round(forest, states, KAPPA, 1.0)
    d = plan_division(forest, caps, states, MobileUser(0, 2e9, 1e-10, 0), 4e6, KAPPA, GAMMA, 1.0)
    assert [b.path for b in d.branches] == [[0, 1, 2]]
    b = d.branches[0]
    # accumulated overhead by hand: tf and rf of the two hops plus the level-3 queue
    sh0, sh1 = d.shares[0], d.shares[1]
    acc = sh0.tf + sh1.rf_edge + (states[1].q_tf + sh1.bits_in) * 1e-9 + 0.0 + 1.6e6 * KAPPA / 8e9
    assert b.accumulated == pytest.approx(acc)
    assert acc >= d.plan.predicted_delay
    assert 2 not in d.plan.server_bits and 3 not in d.shares


def test_zero_cost_plan_equalizes_exactly():
    cfg = SimConfig(fwd_cycles_per_bit=0.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        T = float(rng.uniform(1e6, 8e6))
        topo, states, forest, caps, user = cli.random_snapshot(rng, cfg, int(rng.integers(2, 9)), 0.0, T)
        d = plan_division(forest, caps, states, user, T, cfg.kappa, cfg.gamma, cfg.unit_delay)
        delays = [d.user_delay] + [d.model_delay(s, cfg.kappa, states) for s, sh in d.shares.items()
                                   if sh.own_bits > 0]
        assert spread(delays) < 1e-12


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([0.0, 0.01, 0.1, 1.0]))
def test_conservation(seed, qf):
    cfg = SimConfig()
    rng = np.random.default_rng(seed)
    T = float(rng.uniform(*cfg.task_size_range))
    topo, states, forest, caps, user = cli.random_snapshot(rng, cfg, int(rng.integers(2, 9)), qf, T)
    d = plan_division(forest, caps, states, user, T, cfg.kappa, cfg.gamma, cfg.unit_delay)
    assert d.plan.conservation_error() <= 1e-9
    assert all(b >= 0 for b in d.plan.server_bits.values())
    assert 0 <= d.plan.alpha <= 1


def _branch_levels(forest, plan):
    """Deepest participating level along every root-to-leaf path of the forest."""
    out = {}
    for leaf in forest.nodes:
        if forest.children[leaf]:
            continue
        path = forest.path_to_root(leaf)
        out[leaf] = max((len(path) - i for i, s in enumerate(path) if s in plan.server_bits), default=0)
    return out


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(1.0, 100.0), st.sampled_from([0.0, 0.05, 0.2]))
def test_monotone_pruning(seed, k, qf):
    cfg = SimConfig()
    rng = np.random.default_rng(seed)
    T = float(rng.uniform(*cfg.task_size_range))
    topo, states, forest, caps, user = cli.random_snapshot(rng, cfg, int(rng.integers(2, 9)), qf, T)
    base = plan_division(forest, caps, states, user, T, cfg.kappa, cfg.gamma, cfg.unit_delay)
    slow = {i: ServerState(s.id, s.f_s, s.c_f * k, s.q_s, s.q_tf, s.q_rf, s.neighbors) for i, s in states.items()}
    slow_user = MobileUser(user.id, user.f_m, user.c_m_f * k, user.home_server)
    slow_caps = announce_round(forest, slow, cfg.kappa, cfg.unit_delay)
    after = plan_division(forest, slow_caps, slow, slow_user, T, cfg.kappa, cfg.gamma, cfg.unit_delay)
    a, b = _branch_levels(forest, base.plan), _branch_levels(forest, after.plan)
    assert all(b[leaf] <= a[leaf] for leaf in a)


def _host_raw(T, f_m, c_m_f, c, c_f):
    dec = split_user_server(T, f_m, c_m_f, c)
    return host_raw_share(8e6, dec.predicted_delay, (1 - dec.alpha) * T, 0.0, 0.0, 0.0, c_f, GAMMA), dec.alpha


@pytest.mark.parametrize("c_f", [1e-8, 2e-7, 5e-7, 1e-6])
def test_host_share_threshold(c_f):
    f_m, c_m_f, c = 4e6, 1e-10, 3e6
    x = f_m * (c_f - c_m_f)
    threshold = x / (1 + x)
    lo, alpha = _host_raw(1e6, f_m, c_m_f, c, c_f)
    hi, _ = _host_raw(2e6, f_m, c_m_f, c, c_f)
    if alpha > threshold:
        assert hi > lo
    else:
        assert hi < lo


def test_threshold_fixture_covers_both_sides():
    f_m, c_m_f, c = 4e6, 1e-10, 3e6
    sides = set()
    for c_f in (1e-8, 2e-7, 5e-7, 1e-6):
        x = f_m * (c_f - c_m_f)
        sides.add(alpha_of(f_m, c_m_f, c) > x / (1 + x))
    assert sides == {True, False}


def test_spread():
    assert spread([1.0, 1.0]) == 0
    assert spread([0.5, 1.0]) == 0.5
