"""Wireless network graph: nodes, unit-disk links, random generation, link state."""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

NodeId = int
LinkKey = tuple  # (low NodeId, high NodeId)

DEFAULT_BANDWIDTH = 2.0e6
DEFAULT_QUEUE_CAPACITY = 50
DEFAULT_MAX_RETRIES = 100
SPEED_OF_LIGHT = 3.0e8


class TopologyError(ValueError):
    pass


class ConnectivityUnattainable(TopologyError):
    pass


def link_key(a: NodeId, b: NodeId) -> LinkKey:
    if a == b:
        raise TopologyError(f"link endpoints must differ, got {a!r} twice")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Node:
    id: NodeId
    x: float = 0.0
    y: float = 0.0
    tx_range: float = 250.0

    def __post_init__(self):
        if not self.tx_range > 0:
            raise TopologyError(f"node {self.id}: tx_range must be positive")

    def distance(self, other: "Node") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class Link:
    a: NodeId
    b: NodeId
    bandwidth: float = DEFAULT_BANDWIDTH  # bits/s
    prop_delay: float = 0.0  # seconds
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY
    up: bool = True

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"link endpoints must differ, got {self.a} twice")
        self.a, self.b = link_key(self.a, self.b)
        if not self.bandwidth > 0:
            raise TopologyError(f"link {self.key}: bandwidth must be positive")
        if self.prop_delay < 0:
            raise TopologyError(f"link {self.key}: prop_delay must be >= 0")
        if self.queue_capacity < 1:
            raise TopologyError(f"link {self.key}: queue_capacity must be >= 1")

    @property
    def key(self) -> LinkKey:
        return (self.a, self.b)

    def other(self, node: NodeId) -> NodeId:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise TopologyError(f"node {node} is not an endpoint of link {self.key}")


@dataclass(frozen=True)
class PathSpec:
    hops: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "hops", tuple(self.hops))

    @property
    def src(self) -> NodeId:
        return self.hops[0]

    @property
    def dst(self) -> NodeId:
        return self.hops[-1]

    def links(self) -> list:
        return [link_key(u, v) for u, v in zip(self.hops, self.hops[1:])]

    def uses(self, key: LinkKey) -> bool:
        return tuple(key) in self.links()


class Topology:
    """Nodes plus undirected links; adjacency only follows links that are up."""

    def __init__(self, nodes: Iterable[Node] = (), links: Iterable[Link] = ()):
        self.nodes: dict = {}
        self.links: dict = {}
        self._adj: dict = {}
        for node in nodes:
            self.add_node(node)
        for link in links:
            self.add_link(link)

    def add_node(self, node: Node) -> None:
        if node.id in self.nodes:
            raise TopologyError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self._adj[node.id] = set()

    def add_link(self, link: Link) -> None:
        for end in link.key:
            if end not in self.nodes:
                raise TopologyError(f"link {link.key} references unknown node {end}")
        if link.key in self.links:
            raise TopologyError(f"duplicate link {link.key}")
        self.links[link.key] = link
        if link.up:
            self._adj[link.a].add(link.b)
            self._adj[link.b].add(link.a)

    def link(self, a: NodeId, b: NodeId) -> Link:
        try:
            return self.links[link_key(a, b)]
        except KeyError:
            raise TopologyError(f"unknown link ({a}, {b})") from None

    def has_link(self, a: NodeId, b: NodeId) -> bool:
        return a != b and link_key(a, b) in self.links

    def neighbors(self, node: NodeId) -> set:
        try:
            return set(self._adj[node])
        except KeyError:
            raise TopologyError(f"unknown node {node}") from None

    def sorted_neighbors(self, node: NodeId) -> list:
        return sorted(self.neighbors(node))

    def is_up(self, a: NodeId, b: NodeId) -> bool:
        return self.has_link(a, b) and self.links[link_key(a, b)].up

    def set_link_state(self, a: NodeId, b: NodeId, up: bool) -> "Topology":
        link = self.link(a, b)
        if link.up == up:
            return self
        link.up = up
        if up:
            self._adj[link.a].add(link.b)
            self._adj[link.b].add(link.a)
        else:
            self._adj[link.a].discard(link.b)
            self._adj[link.b].discard(link.a)
        return self

    def validate_path(self, path) -> bool:
        hops = path.hops if isinstance(path, PathSpec) else tuple(path)
        if len(hops) < 2 or len(set(hops)) != len(hops):
            return False
        if any(h not in self.nodes for h in hops):
            return False
        return all(self.is_up(u, v) for u, v in zip(hops, hops[1:]))

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        start = min(self.nodes)
        return len(self.reachable(start)) == len(self.nodes)

    def reachable(self, start: NodeId) -> set:
        seen = {start}
        todo = deque([start])
        while todo:
            u = todo.popleft()
            for v in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return seen

    def copy(self) -> "Topology":
        return Topology(
            self.nodes.values(),
            (Link(l.a, l.b, l.bandwidth, l.prop_delay, l.queue_capacity, l.up) for l in self.links.values()),
        )

    def __repr__(self):
        up = sum(1 for l in self.links.values() if l.up)
        return f"<Topology nodes={len(self.nodes)} links={len(self.links)} up={up}>"


def neighbors(topo: Topology, node: NodeId) -> set:
    return topo.neighbors(node)


def validate_path(topo: Topology, path) -> bool:
    return topo.validate_path(path)


def set_link_state(topo: Topology, link, up: bool) -> Topology:
    a, b = link
    return topo.set_link_state(a, b, up)


def generate_random_topology(
    n: int,
    area: tuple = (1000.0, 1000.0),
    tx_range: float = 250.0,
    seed: int = 0,
    *,
    bandwidth: float = DEFAULT_BANDWIDTH,
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> Topology:
    """Place ``n`` nodes uniformly at random and link every pair within range.

    Placement is retried with a perturbed seed until the graph is connected.
    Propagation delay of each link is its length over the speed of light.
    """
    width, height = area
    if n < 1:
        raise TopologyError("n must be >= 1")
    if not (width > 0 and height > 0 and tx_range > 0):
        raise TopologyError("area and range must be positive")
    for attempt in range(max_retries + 1):
        rng = random.Random(seed + attempt * 1_000_003)
        nodes = [Node(i, rng.uniform(0, width), rng.uniform(0, height), tx_range) for i in range(n)]
        topo = Topology(nodes)
        for i, u in enumerate(nodes):
            for v in nodes[i + 1:]:
                d = u.distance(v)
                if d <= tx_range:
                    topo.add_link(Link(u.id, v.id, bandwidth, d / SPEED_OF_LIGHT, queue_capacity))
        if topo.is_connected():
            return topo
    raise ConnectivityUnattainable(
        f"no connected {n}-node topology after {max_retries} retries (area={area}, range={tx_range})"
    )
