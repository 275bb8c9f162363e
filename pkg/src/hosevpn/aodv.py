"""On-demand route discovery: RREQ flooding, RREP along reverse routes, RERR on breaks.

Each node owns an :class:`AodvNode`.  Its methods are deterministic state
transitions ``(state, message, now) -> actions``; the simulation kernel
carries the actions out.  Times are integer nanoseconds.

One rule differs from RFC 3561 on purpose.  An intermediate node answers a
request only when its own destination sequence number is *strictly greater*
than the one the request carries; on equality it keeps flooding.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Optional

NS_PER_S = 1_000_000_000

ACTIVE_ROUTE_TIMEOUT = 10 * NS_PER_S
DISCOVERY_TIMEOUT = 1 * NS_PER_S
PENDING_CAPACITY = 64
SEEN_RREQ_CAPACITY = 1024

RREQ_SIZE = 24
RREP_SIZE = 20
RERR_BASE_SIZE = 12
RERR_PER_DEST_SIZE = 8


class AodvError(ValueError):
    pass


@dataclass
class RouteEntry:
    dest: int
    next_hop: int
    hop_count: int
    dest_seq: int
    expiry: int
    active: bool = True
    precursors: set = field(default_factory=set)

    def usable(self, now: int) -> bool:
        return self.active and now < self.expiry


@dataclass(frozen=True)
class Rreq:
    origin: int
    origin_seq: int
    rreq_id: int
    dest: int
    dest_seq_known: int
    hop_count: int = 1

    size = RREQ_SIZE


@dataclass(frozen=True)
class Rrep:
    origin: int
    dest: int
    dest_seq: int
    hop_count: int = 1
    lifetime: int = ACTIVE_ROUTE_TIMEOUT

    size = RREP_SIZE


@dataclass(frozen=True)
class Rerr:
    unreachable: tuple  # of (dest, dest_seq)

    @property
    def size(self) -> int:
        return RERR_BASE_SIZE + RERR_PER_DEST_SIZE * len(self.unreachable)


# actions handed back to the kernel

@dataclass(frozen=True)
class Broadcast:
    msg: object


@dataclass(frozen=True)
class Send:
    to: int
    msg: object


@dataclass(frozen=True)
class Flush:
    dest: int
    next_hop: int
    packets: tuple


@dataclass(frozen=True)
class Drop:
    packets: tuple
    reason: str


class AodvNode:
    """Routing table and protocol counters of one node."""

    def __init__(
        self,
        node_id: int,
        *,
        route_lifetime: int = ACTIVE_ROUTE_TIMEOUT,
        discovery_timeout: int = DISCOVERY_TIMEOUT,
        pending_capacity: int = PENDING_CAPACITY,
        seen_capacity: int = SEEN_RREQ_CAPACITY,
    ):
        self.id = node_id
        self.table: dict = {}
        self.own_seq = 0
        self.next_rreq_id = 0
        self.seen_rreqs: OrderedDict = OrderedDict()
        self.pending: deque = deque()
        self.outstanding: dict = {}  # dest -> time the last RREQ for it went out
        self.route_lifetime = route_lifetime
        self.discovery_timeout = discovery_timeout
        self.pending_capacity = pending_capacity
        self.seen_capacity = seen_capacity
        self.malformed = 0
        self.rrep_dropped = 0
        self.rebroadcasts = 0

    def __repr__(self):
        return f"<AodvNode {self.id} seq={self.own_seq} routes={len(self.table)}>"

    # -- table helpers

    def lookup_route(self, dest: int, now: int) -> Optional[int]:
        entry = self.table.get(dest)
        if entry is not None and entry.usable(now):
            return entry.next_hop
        return None

    def active_entry(self, dest: int, now: int) -> Optional[RouteEntry]:
        entry = self.table.get(dest)
        return entry if entry is not None and entry.usable(now) else None

    def touch(self, dest: int, now: int) -> None:
        entry = self.table.get(dest)
        if entry is not None and entry.usable(now):
            entry.expiry = max(entry.expiry, now + self.route_lifetime)

    def _update(self, dest, next_hop, hop_count, seq, now, lifetime=None) -> bool:
        """Install or refresh a route if the offer is fresher or shorter."""
        lifetime = self.route_lifetime if lifetime is None else lifetime
        entry = self.table.get(dest)
        if entry is None:
            self.table[dest] = RouteEntry(dest, next_hop, hop_count, seq, now + lifetime)
            return True
        # an invalidated entry already carries a bumped sequence number, so an
        # equal one is news; a merely expired entry needs a strictly better offer
        if (
            seq > entry.dest_seq
            or (seq == entry.dest_seq and hop_count < entry.hop_count)
            or (not entry.active and seq >= entry.dest_seq)
        ):
            entry.next_hop = next_hop
            entry.hop_count = hop_count
            entry.dest_seq = seq
            entry.expiry = now + lifetime
            entry.active = True
            return True
        if seq == entry.dest_seq and next_hop == entry.next_hop and entry.active:
            entry.expiry = max(entry.expiry, now + lifetime)
        return False

    def _remember(self, origin: int, rreq_id: int) -> bool:
        key = (origin, rreq_id)
        if key in self.seen_rreqs:
            return False
        self.seen_rreqs[key] = True
        while len(self.seen_rreqs) > self.seen_capacity:
            self.seen_rreqs.popitem(last=False)
        return True

    def buffer(self, packet) -> Optional[object]:
        """Queue data awaiting a route; returns the evicted packet on overflow."""
        self.pending.append(packet)
        if len(self.pending) > self.pending_capacity:
            return self.pending.popleft()
        return None

    def take_pending(self, dest: int) -> tuple:
        keep, out = deque(), []
        for p in self.pending:
            (out if p.dst == dest else keep).append(p)
        self.pending = keep
        return tuple(out)

    # -- protocol operations

    def originate_rreq(self, dest: int, now: int, packet=None):
        """Return the usable entry for ``dest``, or the actions that start a discovery.

        A data ``packet`` is buffered only when no route exists.  No second
        request goes out while one for the same destination is younger than
        the discovery timeout.
        """
        if dest == self.id:
            raise AodvError(f"node {self.id} cannot discover a route to itself")
        entry = self.active_entry(dest, now)
        if entry is not None:
            return entry
        actions = []
        if packet is not None:
            evicted = self.buffer(packet)
            if evicted is not None:
                actions.append(Drop((evicted,), "pending-overflow"))
        sent_at = self.outstanding.get(dest)
        if sent_at is not None and now - sent_at < self.discovery_timeout:
            return actions
        self.next_rreq_id += 1
        self.own_seq += 1
        known = self.table[dest].dest_seq if dest in self.table else 0
        rreq = Rreq(self.id, self.own_seq, self.next_rreq_id, dest, known, 1)
        self._remember(self.id, rreq.rreq_id)
        self.outstanding[dest] = now
        actions.append(Broadcast(rreq))
        return actions

    def process_rreq(self, rreq: Rreq, sender: int, now: int) -> list:
        if rreq.origin == rreq.dest or rreq.hop_count < 1:
            self.malformed += 1
            return []
        if not self._remember(rreq.origin, rreq.rreq_id):
            return []
        self._update(rreq.origin, sender, rreq.hop_count, rreq.origin_seq, now)

        if rreq.dest == self.id:
            self.own_seq = max(self.own_seq, rreq.dest_seq_known) + 1
            return [Send(sender, Rrep(rreq.origin, self.id, self.own_seq, 1, self.route_lifetime))]

        entry = self.active_entry(rreq.dest, now)
        if entry is not None and entry.dest_seq > rreq.dest_seq_known:
            entry.precursors.add(sender)
            reverse = self.table[rreq.origin]
            reverse.precursors.add(entry.next_hop)
            lifetime = max(entry.expiry - now, 0)
            return [Send(sender, Rrep(rreq.origin, rreq.dest, entry.dest_seq, entry.hop_count + 1, lifetime))]

        self.rebroadcasts += 1
        return [Broadcast(Rreq(rreq.origin, rreq.origin_seq, rreq.rreq_id, rreq.dest,
                               rreq.dest_seq_known, rreq.hop_count + 1))]

    def process_rrep(self, rrep: Rrep, sender: int, now: int) -> list:
        installed = self._update(rrep.dest, sender, rrep.hop_count, rrep.dest_seq, now, rrep.lifetime)
        if rrep.origin == self.id:
            entry = self.active_entry(rrep.dest, now)
            if entry is None:
                return []
            self.outstanding.pop(rrep.dest, None)
            packets = self.take_pending(rrep.dest)
            return [Flush(rrep.dest, entry.next_hop, packets)] if packets else []
        if not installed:
            return []
        back = self.active_entry(rrep.origin, now)
        if back is None:
            self.rrep_dropped += 1
            return []
        self.table[rrep.dest].precursors.add(back.next_hop)
        back.precursors.add(sender)
        back.expiry = max(back.expiry, now + self.route_lifetime)
        return [Send(back.next_hop, Rrep(rrep.origin, rrep.dest, rrep.dest_seq, rrep.hop_count + 1, rrep.lifetime))]

    def _invalidate(self, entries, now) -> list:
        """Mark entries broken and tell each precursor which of its routes died."""
        per_precursor: dict = {}
        for entry in entries:
            entry.active = False
            for p in sorted(entry.precursors):
                per_precursor.setdefault(p, []).append((entry.dest, entry.dest_seq))
        return [Send(p, Rerr(tuple(dests))) for p, dests in sorted(per_precursor.items())]

    def handle_link_break(self, neighbor: int, now: int) -> list:
        broken = []
        for dest in sorted(self.table):
            entry = self.table[dest]
            if entry.active and entry.next_hop == neighbor:
                entry.dest_seq += 1
                broken.append(entry)
        return self._invalidate(broken, now)

    def process_rerr(self, rerr: Rerr, sender: int, now: int) -> list:
        if not rerr.unreachable:
            self.malformed += 1
            return []
        broken = []
        for dest, seq in rerr.unreachable:
            entry = self.table.get(dest)
            if entry is None or not entry.active or entry.next_hop != sender:
                continue
            if seq >= entry.dest_seq:
                entry.dest_seq = seq
                broken.append(entry)
        return self._invalidate(broken, now)
