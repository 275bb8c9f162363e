import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hosevpn.topology import (
    ConnectivityUnattainable, Link, Node, PathSpec, Topology, TopologyError, generate_random_topology,
    link_key, neighbors, set_link_state, validate_path,
)

from support import line


def test_fifty_node_topology_is_connected():
    topo = generate_random_topology(50, (1000, 1000), 250, seed=42)
    assert len(topo.nodes) == 50
    assert topo.is_connected()


def test_single_node_has_no_links():
    topo = generate_random_topology(1, (100, 100), 10, seed=0)
    assert len(topo.nodes) == 1 and not topo.links


def test_range_beyond_diagonal_gives_complete_graph():
    topo = generate_random_topology(5, (100, 100), 150, seed=7)
    assert len(topo.links) == 10


def test_unreachable_connectivity_raises():
    with pytest.raises(ConnectivityUnattainable):
        generate_random_topology(30, (10_000, 10_000), 1, seed=0, max_retries=3)


@pytest.mark.parametrize("args", [(0, (10, 10), 5), (3, (0, 10), 5), (3, (10, 10), 0), (3, (10, -1), 5)])
def test_invalid_generation_parameters(args):
    with pytest.raises(TopologyError):
        generate_random_topology(*args)


def test_generation_is_deterministic():
    a = generate_random_topology(30, (800, 800), 250, seed=3)
    b = generate_random_topology(30, (800, 800), 250, seed=3)
    assert [(n.x, n.y) for n in a.nodes.values()] == [(n.x, n.y) for n in b.nodes.values()]
    assert sorted(a.links) == sorted(b.links)
    assert generate_random_topology(30, (800, 800), 250, seed=4).nodes != a.nodes


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 10_000), rng=st.floats(200, 500))
def test_links_match_geometry(n, seed, rng):
    topo = generate_random_topology(n, (600, 600), rng, seed=seed)
    ids = sorted(topo.nodes)
    for i, u in enumerate(ids):
        for v in ids[i + 1:]:
            a, b = topo.nodes[u], topo.nodes[v]
            close = math.hypot(a.x - b.x, a.y - b.y) <= rng
            assert topo.has_link(u, v) == close
        node = topo.nodes[u]
        assert 0 <= node.x <= 600 and 0 <= node.y <= 600
    for u in ids:
        for v in topo.neighbors(u):
            assert u in topo.neighbors(v)


def test_neighbors_complete_graph():
    topo = generate_random_topology(5, (10, 10), 100, seed=1)
    assert neighbors(topo, 0) == {1, 2, 3, 4}


def test_neighbors_isolated_and_line():
    topo = line(1, 2, 3)
    topo.add_node(Node(9, 500, 500, 1))
    assert neighbors(topo, 9) == set()
    assert neighbors(topo, 2) == {1, 3}


def test_neighbors_unknown_node():
    with pytest.raises(TopologyError):
        neighbors(line(1, 2), 7)


def test_validate_path():
    topo = line(1, 2, 3)
    assert validate_path(topo, PathSpec((1, 2, 3)))
    assert not validate_path(topo, PathSpec((1, 3)))
    assert not validate_path(topo, PathSpec((1, 2, 1)))
    assert not validate_path(topo, PathSpec((1,)))
    assert not validate_path(topo, PathSpec((1, 2, 8)))


def test_fail_and_restore_link():
    topo = line(1, 2, 3)
    before = {n: topo.neighbors(n) for n in topo.nodes}
    set_link_state(topo, (2, 3), False)
    assert neighbors(topo, 2) == {1}
    assert not validate_path(topo, PathSpec((1, 2, 3)))
    set_link_state(topo, (3, 2), True)
    assert {n: topo.neighbors(n) for n in topo.nodes} == before


def test_set_link_state_is_idempotent():
    topo = line(1, 2, 3)
    set_link_state(topo, (1, 2), False)
    set_link_state(topo, (1, 2), False)
    assert neighbors(topo, 1) == set() and neighbors(topo, 2) == {3}


def test_fail_unknown_link():
    with pytest.raises(TopologyError):
        set_link_state(line(1, 2, 3), (1, 99), False)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 5000), data=st.data())
def test_failing_a_used_link_invalidates_the_path(seed, data):
    topo = generate_random_topology(12, (400, 400), 200, seed=seed)
    # walk a simple path by BFS from node 0 to the farthest node
    parent = {0: None}
    order = [0]
    for u in order:
        for v in topo.sorted_neighbors(u):
            if v not in parent:
                parent[v] = u
                order.append(v)
    hops = [order[-1]]
    while parent[hops[-1]] is not None:
        hops.append(parent[hops[-1]])
    if len(hops) < 2:
        return
    path = PathSpec(tuple(reversed(hops)))
    assert validate_path(topo, path)
    key = data.draw(st.sampled_from(path.links()))
    set_link_state(topo, key, False)
    assert not validate_path(topo, path)


def test_link_invariants():
    with pytest.raises(TopologyError):
        Link(1, 1)
    with pytest.raises(TopologyError):
        Link(1, 2, bandwidth=0)
    with pytest.raises(TopologyError):
        Link(1, 2, prop_delay=-1)
    topo = line(1, 2)
    with pytest.raises(TopologyError):
        topo.add_link(Link(2, 1))
    with pytest.raises(TopologyError):
        topo.add_link(Link(2, 5))
    with pytest.raises(TopologyError):
        Node(1, 0, 0, 0)


def test_link_key_is_unordered():
    assert link_key(5, 2) == link_key(2, 5) == (2, 5)


def test_copy_is_independent():
    topo = line(1, 2, 3)
    clone = topo.copy()
    clone.set_link_state(1, 2, False)
    assert topo.is_up(1, 2) and not clone.is_up(1, 2)
