"""Hose-model bandwidth reservations.

A hose specification bounds, for each VPN endpoint, the total traffic it may
send (``b_plus``) and receive (``b_minus``).  Given a multipath routing, the
load a traffic matrix places on a physical link is the fraction-weighted sum
of its demands.  The reservation a link needs is the largest such load over
every matrix the hose admits, which is a small transportation problem.  It
is solved exactly here over rationals so that witnesses and maxima compare
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .topology import LinkKey, PathSpec, link_key

TOL = 1e-9


class HoseError(ValueError):
    pass


@dataclass
class HoseSpec:
    b_plus: dict
    b_minus: dict

    def __post_init__(self):
        if set(self.b_plus) != set(self.b_minus):
            missing = set(self.b_plus) ^ set(self.b_minus)
            raise HoseError(f"endpoints missing a bound: {sorted(missing, key=repr)}")
        for name, bounds in (("b_plus", self.b_plus), ("b_minus", self.b_minus)):
            for ep, value in bounds.items():
                if value < 0:
                    raise HoseError(f"{name}[{ep!r}] is negative ({value})")

    @property
    def endpoints(self) -> list:
        return sorted(self.b_plus, key=repr)


@dataclass
class TrafficMatrix:
    demands: dict = field(default_factory=dict)

    def __post_init__(self):
        for (u, v), d in self.demands.items():
            if u == v:
                raise HoseError(f"self-pair ({u!r}, {v!r}) in traffic matrix")
            if d < 0:
                raise HoseError(f"negative demand {d} for ({u!r}, {v!r})")

    def get(self, u, v):
        return self.demands.get((u, v), 0)


@dataclass
class RoutingFractions:
    """Per ordered endpoint pair, a list of ``(PathSpec, fraction)``."""

    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        for pair, routes in self.paths.items():
            u, v = pair
            total = 0.0
            for path, frac in routes:
                if frac < 0:
                    raise HoseError(f"negative fraction {frac} on {pair}")
                if path.src != u or path.dst != v:
                    raise HoseError(f"path {path.hops} does not join {u!r} to {v!r}")
                total += frac
            if abs(total - 1.0) > TOL:
                raise HoseError(f"fractions for {pair} sum to {total}, not 1")

    def weight(self, u, v, link) -> float:
        key = link_key(*link)
        return sum(frac for path, frac in self.paths.get((u, v), ()) if path.uses(key))

    def weights(self, link) -> dict:
        key = link_key(*link)
        out = {}
        for pair in self.paths:
            w = self.weight(*pair, key)
            if w < -TOL or w > 1 + TOL:
                raise HoseError(f"weight {w} for {pair} on {key} outside [0, 1]")
            out[pair] = w
        return out

    def links(self) -> set:
        return {key for routes in self.paths.values() for path, _ in routes for key in path.links()}


Reservation = dict  # LinkKey -> bits/s


def validate_traffic_matrix(D: TrafficMatrix, hose: HoseSpec, tol: float = TOL) -> bool:
    """True iff every row sum fits ``b_plus`` and every column sum fits ``b_minus``."""
    out_tot: dict = {}
    in_tot: dict = {}
    for (u, v), d in D.demands.items():
        for ep in (u, v):
            if ep not in hose.b_plus:
                raise HoseError(f"endpoint {ep!r} not in hose specification")
        if d < 0:
            return False
        out_tot[u] = out_tot.get(u, 0) + d
        in_tot[v] = in_tot.get(v, 0) + d
    return all(out_tot[u] <= hose.b_plus[u] + tol for u in out_tot) and all(
        in_tot[v] <= hose.b_minus[v] + tol for v in in_tot
    )


def link_load(D: TrafficMatrix, f: RoutingFractions, link) -> float:
    total = 0.0
    for (u, v), d in sorted(D.demands.items(), key=repr):
        if d == 0:
            continue
        if (u, v) not in f.paths:
            raise HoseError(f"no routing fractions for demanded pair ({u!r}, {v!r})")
        total += d * f.weight(u, v, link)
    return total


def max_weight_transport(weights: Mapping, supply: Mapping, demand: Mapping):
    """Maximise ``sum w[u,v] * d[u,v]`` over ``d >= 0`` with row sums at most
    ``supply[u]`` and column sums at most ``demand[v]``; ``u != v``.

    Successive shortest augmenting paths on the bipartite flow network, with
    Bellman-Ford because arc costs are negated weights.  Stops once the
    cheapest augmenting path no longer has negative cost.  All arithmetic is
    on ``Fraction`` so the optimum and the returned matrix are exact.

    Returns ``(value, flows)`` with ``flows`` mapping ``(u, v)`` to a Fraction.
    """
    sup = {u: Fraction(b) for u, b in supply.items()}
    dem = {v: Fraction(b) for v, b in demand.items()}
    w = {}
    for (u, v), wt in weights.items():
        wt = Fraction(wt)
        if u == v or wt <= 0 or sup.get(u, 0) == 0 or dem.get(v, 0) == 0:
            continue
        w[(u, v)] = wt
    if not w:
        return Fraction(0), {}

    senders = sorted({u for u, _ in w}, key=repr)
    receivers = sorted({v for _, v in w}, key=repr)
    S, T = ("s",), ("t",)
    # residual arcs: node -> list of [head, cap, cost, rev_index]; cap None = unbounded
    graph: dict = {S: [], T: []}
    for u in senders:
        graph[("u", u)] = []
    for v in receivers:
        graph[("v", v)] = []

    def add_arc(a, b, cap, cost):
        graph[a].append([b, cap, cost, len(graph[b])])
        graph[b].append([a, Fraction(0), -cost, len(graph[a]) - 1])

    for u in senders:
        add_arc(S, ("u", u), sup[u], Fraction(0))
    for (u, v) in sorted(w, key=repr):
        add_arc(("u", u), ("v", v), None, -w[(u, v)])
    for v in receivers:
        add_arc(("v", v), T, dem[v], Fraction(0))

    order = list(graph)
    total = Fraction(0)
    while True:
        dist = {S: Fraction(0)}
        prev: dict = {}
        for _ in range(len(order) - 1):
            changed = False
            for a in order:
                if a not in dist:
                    continue
                for i, (b, cap, cost, _) in enumerate(graph[a]):
                    if cap is not None and cap <= 0:
                        continue
                    nd = dist[a] + cost
                    if b not in dist or nd < dist[b]:
                        dist[b] = nd
                        prev[b] = (a, i)
                        changed = True
            if not changed:
                break
        if T not in dist or dist[T] >= 0:
            break
        # bottleneck along the path; the s- and t-arcs are always finite
        node, push = T, None
        while node != S:
            a, i = prev[node]
            cap = graph[a][i][1]
            if cap is not None:
                push = cap if push is None else min(push, cap)
            node = a
        node = T
        while node != S:
            a, i = prev[node]
            arc = graph[a][i]
            if arc[1] is not None:
                arc[1] -= push
            back = graph[node][arc[3]]
            if back[1] is not None:
                back[1] += push
            node = a
        total -= dist[T] * push

    flows = {}
    for u in senders:
        for head, cap, cost, rev in graph[("u", u)]:
            if head[0] == "v":
                sent = graph[head][rev][1]
                if sent > 0:
                    flows[(u, head[1])] = sent
    return total, flows


def _check_weights(weights: Mapping) -> None:
    for pair, wt in weights.items():
        if wt < -TOL or wt > 1 + TOL:
            raise HoseError(f"weight {wt} for {pair} outside [0, 1]")


def worst_case_matrix(f: RoutingFractions, hose: HoseSpec, link):
    """The maximal link load over valid matrices, with a matrix that attains it."""
    weights = f.weights(link)
    _check_weights(weights)
    value, flows = max_weight_transport(weights, hose.b_plus, hose.b_minus)
    witness = TrafficMatrix({pair: float(d) for pair, d in flows.items()})
    return float(value), witness


def worst_case_link_load(f: RoutingFractions, hose: HoseSpec, link) -> float:
    return worst_case_matrix(f, hose, link)[0]


def minimal_reservation(f: RoutingFractions, hose: HoseSpec, links: Iterable) -> Reservation:
    return {link_key(*e): worst_case_link_load(f, hose, e) for e in links}


def reservation_cost(x: Mapping) -> float:
    return float(sum(x.values()))


def is_valid_reservation(x: Mapping, f: RoutingFractions, hose: HoseSpec, tol: float = TOL) -> bool:
    """True iff ``x`` covers the worst-case load on every link the routing uses."""
    for e in f.links():
        if x.get(e, 0.0) + tol < worst_case_link_load(f, hose, e):
            return False
    return True


def single_path_routing(paths: Iterable[PathSpec]) -> RoutingFractions:
    return RoutingFractions({(p.src, p.dst): [(p, 1.0)] for p in paths})
