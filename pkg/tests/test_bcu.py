import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conet import bcu
from conet.bcu import bcu_of, build_forest, check_forest, conflict_check, has_cycle, processing_order
from conet.model import ServerState, SimConfig
from conet.topology import from_edges, generate

# Loop scenario from the cooperation-loop figure, with ids
# 0=s_2^1 1=s_2^2 2=s_3^5 3=s_3^2 4=s_3^4 5=s_3^3 6=s_3^1
LOOP_EDGES = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (5, 1), (6, 2)]
# s_2^2 is faster than s_3^4, so s_2^1 picks s_2^2 first
LOOP_F = [4e9, 9e9, 8e9, 8e9, 5e9, 6e9, 6e9]
LOOP_ORDER = [5, 6, 0, 1, 2, 3, 4]


def loop_fixture():
    return from_edges(7, LOOP_EDGES, LOOP_F, [1e-10] * 7)


def test_loop_scenario_golden():
    topo = loop_fixture()
    forest = build_forest(topo, order=LOOP_ORDER)
    assert forest.parent == {5: 1, 6: 2, 0: 1, 1: 2, 2: 3, 3: 4}
    # the last server's only candidates are its own descendants
    assert forest.csm[4] == {0, 1, 2, 3, 5, 6}
    assert conflict_check(topo.adjacency[4], forest.csm[4]) == []
    assert 4 not in forest.parent
    assert forest.csm[2] == {1, 0, 5, 6}
    assert check_forest(forest, topo) == []


def test_loop_closing_attachment_is_a_cycle():
    topo = loop_fixture()
    forest = build_forest(topo, order=LOOP_ORDER)
    closed = dict(forest.parent)
    closed[4] = 0
    assert has_cycle(closed)


def test_two_server_line():
    topo = from_edges(2, [(0, 1)], [1e9, 1e9], [0.0, 0.0])
    forest = build_forest(topo)
    assert len(forest.parent) == 1
    assert len(forest.roots()) == 1


def test_conflict_check_examples():
    assert conflict_check([1, 2, 3], set()) == [1, 2, 3]
    assert conflict_check([1, 2, 3], {2, 9}) == [1, 3]
    assert conflict_check([1, 2], {1, 2, 3}) == []


def test_bcu_of():
    topo = from_edges(5, [(0, 1), (0, 2), (0, 3), (3, 4)], [9e9, 1e9, 1e9, 2e9, 1e9], [0.0] * 5)
    forest = build_forest(topo, order=[4, 1, 2, 3, 0])
    # 4 can only join 3; 3 cannot join its descendant 4 so it joins 0
    assert bcu_of(forest, 0) == (0, [1, 2, 3])
    assert bcu_of(forest, 1) == (1, [])
    host, kids = bcu_of(forest, 3)
    assert kids == [4] and forest.parent[3] == 0  # host and cooperation server at once
    with pytest.raises(KeyError):
        bcu_of(forest, 42)


def test_has_cycle_oracle():
    assert not has_cycle({1: 0, 2: 1})
    assert has_cycle({1: 2, 2: 1})
    assert has_cycle({0: 0})


def test_processing_order():
    assert processing_order([3, 1, 2]) == [1, 2, 3]
    rng = np.random.default_rng(0)
    assert sorted(processing_order(range(10), "random", rng)) == list(range(10))
    with pytest.raises(ValueError):
        processing_order([1], "random")
    with pytest.raises(ValueError):
        processing_order([1], "zigzag")


def _random_states(topo, rng):
    return [ServerState(s.id, s.f_s, s.c_f, *rng.uniform(0, 1e6, 3) * (rng.random(3) < 0.5), s.neighbors)
            for s in topo.servers]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_forest_properties(seed):
    rng = np.random.default_rng(seed)
    topo = generate(SimConfig(n_servers=int(rng.integers(2, 60))), seed)
    states = _random_states(topo, rng)
    order = processing_order([s.id for s in states], "random", rng)
    forest = build_forest(topo, states, order)
    assert check_forest(forest, topo) == []
    # maximality: a root has every neighbour among its descendants
    for r in forest.roots():
        assert set(topo.adjacency[r]) <= forest.csm[r]
    # idempotent rebuild
    again = build_forest(topo, states, order)
    assert again.parent == forest.parent and again.children == forest.children
    assert len(forest.bottom_up_order()) == topo.n


def test_thousand_forests_loop_free():
    cfg = SimConfig(n_servers=50)
    for seed in range(1000):
        topo = generate(cfg, seed)
        order = processing_order(range(50), "random", np.random.default_rng(seed))
        assert not has_cycle(build_forest(topo, order=order).parent)


def test_dump_forest(tmp_path):
    forest = build_forest(loop_fixture(), order=LOOP_ORDER)
    p = tmp_path / "f.txt"
    bcu.dump_forest(forest, p)
    lines = p.read_text().splitlines()
    assert lines[4] == "4 -1" and lines[0] == "0 1"
