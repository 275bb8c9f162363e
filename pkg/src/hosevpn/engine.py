"""Single-threaded discrete-event kernel.

Time is integer nanoseconds.  Events run in ``(time, seq)`` order where
``seq`` is the insertion counter, so equal-time events keep the order they
were scheduled in.  Each directed link direction is a FIFO transmitter with
a finite backlog; a packet occupies it for ``ceil(bits * 1e9 / bandwidth)``
ns and reaches the far end ``prop_delay`` later.  Loss only comes from a
full backlog, a down link, or AODV giving up (no route, pending overflow).
"""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional

from . import aodv
from .aodv import AodvNode, Broadcast, Drop, Flush, RouteEntry, Rerr, Rrep, Rreq, Send
from .metrics import Collector, MetricsReport
from .policy import CandidatePath, PathTable, handle_path_failure, select_path
from .topology import Topology, TopologyError, link_key

NS_PER_S = 1_000_000_000
DEFAULT_PACKET_SIZE = 512
DEFAULT_SAMPLE_INTERVAL = NS_PER_S // 2

EVENT_KINDS = (
    "packet-arrival", "transmit-complete", "traffic-tick",
    "link-failure", "link-restore", "metrics-sample", "sim-end",
)


class SimulationError(RuntimeError):
    pass


def seconds_to_ns(t: float) -> int:
    return round(t * NS_PER_S)


def serialization_ns(size_bytes: int, bandwidth: float) -> int:
    """Transmission time of ``size_bytes`` at ``bandwidth`` bit/s, rounded up to a whole ns."""
    return math.ceil(Fraction(size_bytes * 8 * NS_PER_S) / Fraction(bandwidth))


@dataclass(frozen=True)
class EnergyModel:
    e_tx: float = 50e-9  # J/byte
    e_rx: float = 50e-9  # J/byte
    e_overhead: float = 20e-6  # J/packet

    def __post_init__(self):
        if min(self.e_tx, self.e_rx, self.e_overhead) < 0:
            raise ValueError("energy parameters must be >= 0")

    @property
    def tx_pj(self) -> int:
        return round(self.e_tx * 1e12)

    @property
    def rx_pj(self) -> int:
        return round(self.e_rx * 1e12)

    @property
    def overhead_pj(self) -> int:
        return round(self.e_overhead * 1e12)


@dataclass
class TrafficFlow:
    name: str
    src: int
    dst: int
    interval: int  # ns
    start: int = 0  # ns
    stop: int = 10 * NS_PER_S  # ns
    packet_size: int = DEFAULT_PACKET_SIZE
    count: Optional[int] = None
    demand: Optional[float] = None  # bits/s used for path selection; defaults to the CBR rate

    def __post_init__(self):
        if self.interval <= 0:
            raise SimulationError(f"flow {self.name}: interval must be positive")
        if not self.start < self.stop:
            raise SimulationError(f"flow {self.name}: start must precede stop")
        if self.packet_size <= 0:
            raise SimulationError(f"flow {self.name}: packet_size must be positive")
        if self.count is not None and self.count < 0:
            raise SimulationError(f"flow {self.name}: count must be >= 0")
        if self.src == self.dst:
            raise SimulationError(f"flow {self.name}: src and dst must differ")
        if self.demand is None:
            self.demand = self.packet_size * 8 * NS_PER_S / self.interval

    def send_times(self, offset: int = 0) -> list:
        out = []
        k = 0
        while self.count is None or k < self.count:
            t = self.start + offset + k * self.interval
            if t >= self.stop:
                break
            out.append(t)
            k += 1
        return out


@dataclass(eq=False, slots=True)
class Packet:
    id: int
    kind: str  # data | rreq | rrep | rerr
    src: int
    dst: int
    size: int
    created_at: int
    delivered_at: Optional[int]
    path_label: Optional[str]
    flow: Optional[str]
    route: Optional[tuple]
    hop: int
    msg: object


class Event(NamedTuple):
    time: int
    seq: int
    kind: str
    payload: object


class _Transmitter:
    __slots__ = ("busy_until", "backlog")

    def __init__(self):
        self.busy_until = 0
        self.backlog = 0


class Simulator:
    """One run: topology, per-node AODV state, flows, failures and a metrics collector."""

    def __init__(
        self,
        topology: Topology,
        *,
        energy: Optional[EnergyModel] = None,
        sample_interval: int = DEFAULT_SAMPLE_INTERVAL,
        candidates: Optional[list] = None,
        seed: int = 0,
        trace: bool = False,
        route_lifetime: int = aodv.ACTIVE_ROUTE_TIMEOUT,
    ):
        self.topo = topology
        self.energy = energy or EnergyModel()
        self.sample_interval = sample_interval
        self.rng = random.Random(seed)
        self.seed = seed
        self.now = 0
        self.end: Optional[int] = None
        self.ended = False
        self.processed = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._pid = itertools.count(1)
        self.nodes = {nid: AodvNode(nid, route_lifetime=route_lifetime) for nid in sorted(topology.nodes)}
        self._tx: dict = {}
        self.epoch = {key: 0 for key in topology.links}
        self.candidates = list(candidates or [])
        self.collector = Collector(
            paths={c.label: c.path.links() for c in self.candidates},
            path_bandwidth={c.label: c.allocated_bw for c in self.candidates},
        )
        self.flows: dict = {}
        self.tables: dict = {}
        self.control_sent = 0
        self.control_dropped = 0
        self.trace_lines: Optional[list] = [] if trace else None
        self._ser_cache: dict = {}
        self._handlers = {
            "packet-arrival": self._on_arrival,
            "transmit-complete": self._on_transmit_complete,
            "traffic-tick": self._on_traffic_tick,
            "link-failure": self._on_link_failure,
            "link-restore": self._on_link_restore,
            "metrics-sample": self._on_sample,
            "sim-end": self._on_end,
        }

    # -- event queue

    def schedule(self, time: int, kind: str, payload=None) -> Event:
        if time < self.now:
            raise SimulationError(f"cannot schedule {kind} at {time} ns; now is {self.now} ns")
        if kind not in self._handlers:
            raise SimulationError(f"unknown event kind {kind!r}")
        ev = Event(time, next(self._seq), kind, payload)
        heapq.heappush(self._queue, ev)
        return ev

    def step(self) -> Optional[Event]:
        if not self._queue:
            return None
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        self.processed += 1
        self._handlers[ev.kind](ev)
        return ev

    def run_until(self, t: int) -> int:
        done = 0
        while self._queue and self._queue[0].time <= t and not self.ended:
            self.step()
            done += 1
        if not self.ended:
            self.now = max(self.now, t)
        return done

    def run(self, duration: int) -> MetricsReport:
        self.end = duration
        if self.sample_interval > 0 and self.sample_interval <= duration:
            self.schedule(self.sample_interval, "metrics-sample")
        self.schedule(duration, "sim-end")
        self.run_until(duration)
        return self.collector.finalize_report(self.seed)

    # -- tracing

    def _trace(self, kind: str, node, pid, detail: str = "") -> None:
        if self.trace_lines is not None:
            self.trace_lines.append(f"{self.now}\t{kind}\t{node}\t{pid}\t{detail}")

    @staticmethod
    def _describe(pkt: Packet) -> str:
        if pkt.kind == "data":
            return f"type=data size={pkt.size} flow={pkt.flow} label={pkt.path_label}"
        return f"type={pkt.kind} size={pkt.size}"

    # -- packets and links

    def _new_packet(self, kind, src, dst, size, msg=None, flow=None) -> Packet:
        return Packet(next(self._pid), kind, src, dst, size, self.now, None, None, flow, None, 0, msg)

    def _ser(self, size: int, bandwidth: float) -> int:
        key = (size, bandwidth)
        v = self._ser_cache.get(key)
        if v is None:
            v = self._ser_cache[key] = serialization_ns(size, bandwidth)
        return v

    def transmit_packet(self, pkt: Packet, sender: int, receiver: int) -> Optional[int]:
        """Queue ``pkt`` on the ``sender -> receiver`` direction; returns the arrival time or None if dropped."""
        key = link_key(sender, receiver)
        link = self.topo.links.get(key)
        if link is None:
            raise SimulationError(f"no link between {sender} and {receiver}")
        if not link.up:
            self._drop(pkt, sender, "link-down")
            self._execute(sender, self.nodes[sender].handle_link_break(receiver, self.now))
            return None
        tx = self._tx.get((sender, receiver))
        if tx is None:
            tx = self._tx[(sender, receiver)] = _Transmitter()
        if tx.backlog >= link.queue_capacity:
            self._drop(pkt, sender, "queue-overflow")
            return None
        start = max(self.now, tx.busy_until)
        done = start + self._ser(pkt.size, link.bandwidth)
        tx.busy_until = done
        tx.backlog += 1
        ep = self.epoch[key]
        self.schedule(done, "transmit-complete", (pkt, sender, receiver, ep))
        arrival = done + round(link.prop_delay * NS_PER_S)
        self.schedule(arrival, "packet-arrival", (pkt, sender, receiver, ep))
        if pkt.kind != "data":
            self.control_sent += 1
        return arrival

    def _drop(self, pkt: Packet, node: int, reason: str) -> None:
        self._trace("drop", node, pkt.id, f"reason={reason} {self._describe(pkt)}")
        if pkt.kind == "data":
            self.collector.record("drop", pkt, self.now)
        else:
            self.control_dropped += 1

    def _debit(self, pkt: Packet, per_byte_pj: int) -> None:
        self.collector.record("energy", pkt, self.now, picojoules=self.energy.overhead_pj + pkt.size * per_byte_pj)

    def _on_transmit_complete(self, ev: Event) -> None:
        pkt, sender, receiver, ep = ev.payload
        key = link_key(sender, receiver)
        if ep != self.epoch[key]:
            self._trace(ev.kind, sender, pkt.id, f"outcome=aborted {self._describe(pkt)}")
            return
        self._tx[(sender, receiver)].backlog -= 1
        self._debit(pkt, self.energy.tx_pj)
        self.collector.record_bits(key, pkt.size * 8, pkt, first_hop=sender == pkt.src)
        self._trace(ev.kind, sender, pkt.id, f"outcome=ok to={receiver} {self._describe(pkt)}")

    def _on_arrival(self, ev: Event) -> None:
        pkt, sender, receiver, ep = ev.payload
        key = link_key(sender, receiver)
        if ep != self.epoch[key] or not self.topo.links[key].up:
            self._trace(ev.kind, receiver, pkt.id, f"outcome=aborted from={sender} {self._describe(pkt)}")
            self._drop(pkt, receiver, "link-down")
            return
        self._debit(pkt, self.energy.rx_pj)
        self._trace(ev.kind, receiver, pkt.id, f"outcome=ok from={sender} {self._describe(pkt)}")
        node = self.nodes[receiver]
        if pkt.kind == "data":
            self._forward_data(receiver, pkt)
        elif pkt.kind == "rreq":
            self._execute(receiver, node.process_rreq(pkt.msg, sender, self.now))
        elif pkt.kind == "rrep":
            self._execute(receiver, node.process_rrep(pkt.msg, sender, self.now))
        elif pkt.kind == "rerr":
            self._execute(receiver, node.process_rerr(pkt.msg, sender, self.now))

    def _send_control(self, node: int, to: int, msg) -> None:
        kind = type(msg).__name__.lower()
        pkt = self._new_packet(kind, node, to, msg.size, msg)
        if not self.topo.has_link(node, to):
            self._drop(pkt, node, "no-link")
            return
        self.transmit_packet(pkt, node, to)

    def _execute(self, node: int, actions) -> None:
        for act in actions:
            if isinstance(act, Broadcast):
                for nb in self.topo.sorted_neighbors(node):
                    self._send_control(node, nb, act.msg)
            elif isinstance(act, Send):
                self._send_control(node, act.to, act.msg)
            elif isinstance(act, Flush):
                for pkt in act.packets:
                    self._dispatch(node, pkt)
            elif isinstance(act, Drop):
                for pkt in act.packets:
                    self._drop(pkt, node, act.reason)

    # -- data path

    def _source_send(self, pkt: Packet) -> None:
        node = self.nodes[pkt.src]
        result = node.originate_rreq(pkt.dst, self.now, packet=pkt)
        if isinstance(result, RouteEntry):
            self._dispatch(pkt.src, pkt)
        else:
            self._execute(pkt.src, result)

    def _dispatch(self, src: int, pkt: Packet) -> None:
        """Put a data packet on the wire at its source, on the flow's selected path if it has one."""
        node = self.nodes[src]
        node.touch(pkt.dst, self.now)
        table = self.tables.get(pkt.flow)
        cand = table.current if table is not None else None
        if cand is not None:
            pkt.route = cand.path.hops
            pkt.path_label = cand.label
            pkt.hop = 0
            self.collector.record("dispatch", pkt, self.now)
            self._trace("dispatch", src, pkt.id, f"label={cand.label}")
            self.transmit_packet(pkt, src, pkt.route[1])
            return
        nh = node.lookup_route(pkt.dst, self.now)
        if nh is None:
            self._drop(pkt, src, "no-route")
            return
        self.transmit_packet(pkt, src, nh)

    def _forward_data(self, at: int, pkt: Packet) -> None:
        if at == pkt.dst:
            pkt.delivered_at = self.now
            self.collector.record("receive", pkt, self.now)
            self._trace("deliver", at, pkt.id, f"delay_ns={self.now - pkt.created_at}")
            return
        if pkt.route is not None:
            pkt.hop += 1
            self.transmit_packet(pkt, at, pkt.route[pkt.hop + 1])
            return
        node = self.nodes[at]
        nh = node.lookup_route(pkt.dst, self.now)
        if nh is None:
            self._drop(pkt, at, "no-route")
            return
        node.touch(pkt.dst, self.now)
        self.transmit_packet(pkt, at, nh)

    # -- traffic

    def add_flow(self, flow: TrafficFlow, jitter: int = 0) -> list:
        """Register a CBR flow and schedule its first send; returns the planned send times.

        ``jitter`` > 0 delays the whole flow by a seeded uniform offset in ``[0, jitter]`` ns.
        """
        if flow.name in self.flows:
            raise SimulationError(f"duplicate flow {flow.name!r}")
        for end in (flow.src, flow.dst):
            if end not in self.topo.nodes:
                raise SimulationError(f"flow {flow.name}: unknown node {end}")
        offset = self.rng.randint(0, jitter) if jitter > 0 else 0
        self.flows[flow.name] = (flow, offset)
        self.collector.add_flow(flow.name)
        mine = [CandidatePath(c.path, c.allocated_bw) for c in self.candidates
                if c.path.src == flow.src and c.path.dst == flow.dst]
        if mine:
            table = PathTable(mine)
            select_path(table, flow.demand)
            self.tables[flow.name] = table
        times = flow.send_times(offset)
        if times:
            self.schedule(times[0], "traffic-tick", (flow.name, 0))
        return times

    generate_cbr_traffic = add_flow

    def _on_traffic_tick(self, ev: Event) -> None:
        name, k = ev.payload
        flow, offset = self.flows[name]
        pkt = self._new_packet("data", flow.src, flow.dst, flow.packet_size, flow=name)
        self.collector.record("send", pkt, self.now)
        self._trace(ev.kind, flow.src, pkt.id, f"flow={name} k={k}")
        self._trace("send", flow.src, pkt.id, f"flow={name} size={pkt.size}")
        nxt = flow.start + offset + (k + 1) * flow.interval
        if nxt < flow.stop and (flow.count is None or k + 1 < flow.count):
            self.schedule(nxt, "traffic-tick", (name, k + 1))
        self._source_send(pkt)

    # -- failures

    def _check_link(self, link) -> tuple:
        a, b = link
        if not self.topo.has_link(a, b):
            raise TopologyError(f"unknown link ({a}, {b})")
        return link_key(a, b)

    def inject_failure(self, link, at: int) -> Event:
        return self.schedule(at, "link-failure", self._check_link(link))

    def inject_restore(self, link, at: int) -> Event:
        return self.schedule(at, "link-restore", self._check_link(link))

    def _on_link_failure(self, ev: Event) -> None:
        key = ev.payload
        a, b = key
        self._trace(ev.kind, a, "-", f"link={a}-{b}")
        if not self.topo.links[key].up:
            return
        self.topo.set_link_state(a, b, False)
        self.epoch[key] += 1
        for d in ((a, b), (b, a)):
            tx = self._tx.get(d)
            if tx is not None:
                tx.backlog = 0
                tx.busy_until = self.now
        self._execute(a, self.nodes[a].handle_link_break(b, self.now))
        self._execute(b, self.nodes[b].handle_link_break(a, self.now))
        for name, table in self.tables.items():
            flow = self.flows[name][0]
            for cand in table.candidates:
                if cand.alive and cand.path.uses(key):
                    handle_path_failure(table, cand, flow.demand)
            cur = table.current
            self._trace("reselect", flow.src, "-", f"flow={name} label={cur.label if cur else None}")

    def _on_link_restore(self, ev: Event) -> None:
        key = ev.payload
        a, b = key
        self._trace(ev.kind, a, "-", f"link={a}-{b}")
        self.topo.set_link_state(a, b, True)
        for table in self.tables.values():
            for cand in table.candidates:
                if not cand.alive and self.topo.validate_path(cand.path):
                    cand.alive = True

    # -- sampling

    def _on_sample(self, ev: Event) -> None:
        self._trace(ev.kind, "-", "-", "")
        self.collector.sample(self.now)
        nxt = self.now + self.sample_interval
        if self.end is not None and nxt <= self.end:
            self.schedule(nxt, "metrics-sample")

    def _on_end(self, ev: Event) -> None:
        self._trace(ev.kind, "-", "-", "")
        if self.collector.last_sample < self.now:
            self.collector.sample(self.now)
        self.ended = True
