"""Shared builders for the tests (plumbing only, no expected values)."""

from __future__ import annotations

from hosevpn.hose import HoseSpec, RoutingFractions
from hosevpn.topology import Link, Node, PathSpec, Topology

# the link whose load the hose tests measure; endpoint ids stay below 100
MEASURED = (100, 101)


def routing_from_weights(weights, link=MEASURED):
    """Fractions whose per-pair weight on ``link`` equals ``weights[(u, v)]``.

    Each pair gets a path through ``link`` carrying ``w`` and a direct path
    carrying the rest.
    """
    a, b = link
    routes = {}
    for (u, v), w in weights.items():
        shares = []
        if w > 0:
            shares.append((PathSpec((u, a, b, v)), w))
        if w < 1:
            shares.append((PathSpec((u, v)), 1.0 - w))
        routes[(u, v)] = shares
    return RoutingFractions(routes)


def hose(b_plus, b_minus):
    return HoseSpec(dict(b_plus), dict(b_minus))


def line(*ids, bandwidth=2.0e6, prop_delay=0.0, queue_capacity=50):
    topo = Topology([Node(i, 10.0 * k, 0.0, 15.0) for k, i in enumerate(ids)])
    for a, b in zip(ids, ids[1:]):
        topo.add_link(Link(a, b, bandwidth, prop_delay, queue_capacity))
    return topo


def uniform(topo, bandwidth=2.0e6):
    """Same bandwidth and zero propagation on every link, so each hop costs the same."""
    for link in topo.links.values():
        link.bandwidth = bandwidth
        link.prop_delay = 0.0
    return topo


# -- AODV invariant checks over a running simulator

def forwarding_chain(nodes, src, dest, now):
    """Next hops from ``src`` toward ``dest`` while entries are usable; stops at ``dest`` or a gap."""
    chain = [src]
    cur = src
    while cur != dest:
        entry = nodes[cur].active_entry(dest, now)
        if entry is None:
            break
        cur = entry.next_hop
        chain.append(cur)
        if len(chain) > len(nodes) + 1:
            break
    return chain


def assert_loop_free(nodes, now):
    """Every usable entry's chain is simple and (dest_seq, -hop_count) never decreases along it."""
    for nid, node in nodes.items():
        for dest in node.table:
            entry = node.active_entry(dest, now)
            if entry is None:
                continue
            seen = {nid}
            cur, cur_entry = nid, entry
            while True:
                nxt = cur_entry.next_hop
                if nxt == dest:
                    break
                assert nxt not in seen, f"loop toward {dest} through {sorted(seen)} at t={now}"
                seen.add(nxt)
                nxt_entry = nodes[nxt].active_entry(dest, now)
                if nxt_entry is None:
                    break
                assert (nxt_entry.dest_seq, -nxt_entry.hop_count) >= (cur_entry.dest_seq, -cur_entry.hop_count), (
                    f"{cur}->{nxt} toward {dest}: ({cur_entry.dest_seq}, {cur_entry.hop_count}) then "
                    f"({nxt_entry.dest_seq}, {nxt_entry.hop_count}) at t={now}"
                )
                cur, cur_entry = nxt, nxt_entry


def sequence_snapshot(nodes):
    return {nid: (n.own_seq, {d: e.dest_seq for d, e in n.table.items()}) for nid, n in nodes.items()}


def assert_sequences_monotone(before, after):
    for nid, (own, table) in before.items():
        own2, table2 = after[nid]
        assert own2 >= own
        for d, seq in table.items():
            assert table2[d] >= seq


class RebroadcastLog:
    """Wraps every node's ``process_rreq`` and records which requests it re-flooded."""

    def __init__(self, nodes):
        self.events = []
        for node in nodes.values():
            original = node.process_rreq

            def wrapped(rreq, sender, now, _node=node, _orig=original):
                actions = _orig(rreq, sender, now)
                if any(type(a).__name__ == "Broadcast" for a in actions):
                    self.events.append((_node.id, rreq.origin, rreq.rreq_id))
                return actions

            node.process_rreq = wrapped

    def duplicates(self):
        seen, dup = set(), []
        for key in self.events:
            if key in seen:
                dup.append(key)
            seen.add(key)
        return dup


def discovery_trial(seed, max_nodes=12):
    """One fresh discovery on a random connected graph with equal per-hop cost.

    Steps the kernel event by event, checking loop freedom after each event,
    and captures the source's forwarding chain the moment its route appears.
    Returns a dict of what a test needs to compare against an oracle.
    """
    import random

    from hosevpn.engine import NS_PER_S, Simulator, TrafficFlow
    from hosevpn.topology import generate_random_topology

    rng = random.Random(seed)
    n = rng.randint(2, max_nodes)
    topo = uniform(generate_random_topology(n, (400.0, 400.0), 160.0, seed=seed))
    src, dst = rng.sample(sorted(topo.nodes), 2)
    sim = Simulator(topo, seed=seed)
    log = RebroadcastLog(sim.nodes)
    sim.add_flow(TrafficFlow("probe", src, dst, interval=NS_PER_S, start=0, stop=NS_PER_S, count=1))
    sim.end = 2 * NS_PER_S
    sim.schedule(sim.end, "sim-end")
    chain = None
    snap = sequence_snapshot(sim.nodes)
    while sim.step() is not None and not sim.ended:
        assert_loop_free(sim.nodes, sim.now)
        now_snap = sequence_snapshot(sim.nodes)
        assert_sequences_monotone(snap, now_snap)
        snap = now_snap
        if chain is None and sim.nodes[src].active_entry(dst, sim.now) is not None:
            chain = forwarding_chain(sim.nodes, src, dst, sim.now)
            hop_count = sim.nodes[src].active_entry(dst, sim.now).hop_count
    return {
        "topology": topo,
        "src": src,
        "dst": dst,
        "chain": chain,
        "hop_count": None if chain is None else hop_count,
        "delivered": sim.collector.counters["flow/probe"].received,
        "duplicate_rebroadcasts": log.duplicates(),
    }
