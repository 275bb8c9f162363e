"""Counters, time series and summaries for simulated runs.

Counters are kept per *series*: ``all`` (every data packet), ``control``
(RREQ/RREP/RERR, energy only), ``flow/<name>`` and ``path/<label>``.  A data
packet joins its flow series when created and its path series when the
source dispatches it onto a path.

Energy is accumulated in integer picojoules so that the incremental ledger
and a ledger rebuilt from the trace agree exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

NS_PER_S = 1_000_000_000
PJ_PER_J = 1e12

TIMESERIES_METRICS = ("bandwidth", "packets_received", "pdr", "energy", "routing_delay", "packet_loss")
SAMPLE_FIELDS = ("time_s", "sent", "received", "dropped", "in_flight", "pdr", "energy", "routing_delay", "bandwidth")
_METRIC_FIELD = {
    "bandwidth": "bandwidth",
    "packets_received": "received",
    "pdr": "pdr",
    "energy": "energy",
    "routing_delay": "routing_delay",
    "packet_loss": "dropped",
}
SUMMARY_HEADER = ("path", "bandwidth", "packets_received", "pdr", "routing_delay", "energy", "packet_loss")


class MetricsError(RuntimeError):
    pass


class InvariantViolation(MetricsError):
    pass


def pdr_percent(sent: int, received: int) -> float:
    return 100.0 * received / sent if sent else 0.0


@dataclass
class _Counter:
    sent: int = 0
    received: int = 0
    dropped: int = 0
    delay_ns: int = 0
    energy_pj: int = 0
    window_bits: int = 0
    live: set = field(default_factory=set)


@dataclass
class SeriesReport:
    packets_sent: float
    packets_received: float
    packets_dropped: float
    in_flight: float
    pdr: float
    mean_delay: float  # seconds
    energy: float  # joules
    samples: list = field(default_factory=list)  # tuples ordered as SAMPLE_FIELDS

    @property
    def packet_loss(self) -> float:
        return self.packets_dropped

    def scalars(self) -> dict:
        return {
            "packets_sent": self.packets_sent,
            "packets_received": self.packets_received,
            "packets_dropped": self.packets_dropped,
            "in_flight": self.in_flight,
            "pdr": self.pdr,
            "mean_delay": self.mean_delay,
            "energy": self.energy,
        }


@dataclass
class MetricsReport:
    series: dict = field(default_factory=dict)  # name -> SeriesReport
    link_usage: dict = field(default_factory=dict)  # "a-b" -> [bits/s per sample]
    path_bandwidth: dict = field(default_factory=dict)  # label -> allocated bits/s
    seed: Optional[int] = None

    def path_labels(self) -> list:
        return [name[len("path/"):] for name in self.series if name.startswith("path/")]

    def path(self, label: str) -> SeriesReport:
        return self.series[f"path/{label}"]

    def flow(self, name: str) -> SeriesReport:
        return self.series[f"flow/{name}"]


class Collector:
    """Incremental metrics for one run; owned by that run's kernel."""

    def __init__(self, paths: Optional[dict] = None, path_bandwidth: Optional[dict] = None):
        # label -> list of link keys, for the per-path bandwidth series
        self.paths = dict(paths or {})
        self.path_bandwidth = dict(path_bandwidth or {})
        self.counters: dict = {"all": _Counter(), "control": _Counter()}
        for label in self.paths:
            self.counters[f"path/{label}"] = _Counter()
        self.created: dict = {}  # packet id -> created_at ns, for data packets
        self.samples: dict = {}
        self.link_bits: dict = {}
        self.link_usage: dict = {}
        self.last_sample = 0

    def _series(self, name: str) -> _Counter:
        c = self.counters.get(name)
        if c is None:
            c = self.counters[name] = _Counter()
        return c

    def _member_series(self, packet) -> list:
        names = ["all", f"flow/{packet.flow}"]
        if packet.path_label is not None:
            names.append(f"path/{packet.path_label}")
        return names

    def add_flow(self, name: str) -> None:
        self._series(f"flow/{name}")

    def record(self, kind: str, packet=None, now: int = 0, *, picojoules: int = 0, joules: Optional[float] = None):
        """Update counters for a ``send``, ``dispatch``, ``receive``, ``drop`` or ``energy`` record."""
        if kind == "send":
            self.created[packet.id] = packet.created_at
            for name in ("all", f"flow/{packet.flow}"):
                c = self._series(name)
                c.sent += 1
                c.live.add(packet.id)
        elif kind == "dispatch":
            c = self._series(f"path/{packet.path_label}")
            c.sent += 1
            c.live.add(packet.id)
        elif kind == "receive":
            if packet.id not in self.created:
                raise MetricsError(f"receive for unknown packet {packet.id}")
            delay = now - self.created.pop(packet.id)
            for name in self._member_series(packet):
                c = self._series(name)
                c.received += 1
                c.delay_ns += delay
                c.live.discard(packet.id)
        elif kind == "drop":
            if packet.id not in self.created:
                raise MetricsError(f"drop for unknown packet {packet.id}")
            del self.created[packet.id]
            for name in self._member_series(packet):
                c = self._series(name)
                c.dropped += 1
                c.live.discard(packet.id)
        elif kind == "energy":
            if joules is not None:
                picojoules = round(joules * PJ_PER_J)
            if packet is None or packet.kind != "data":
                names = ["control"] if packet is not None else []
                names.append("all")
            else:
                names = self._member_series(packet)
            for name in names:
                self._series(name).energy_pj += picojoules
        else:
            raise MetricsError(f"unknown record kind {kind!r}")

    def record_bits(self, link_key, bits: int, packet=None, first_hop: bool = False) -> None:
        self.link_bits[link_key] = self.link_bits.get(link_key, 0) + bits
        if packet is not None and packet.kind == "data" and first_hop:
            self._series(f"flow/{packet.flow}").window_bits += bits

    def check_conservation(self) -> None:
        for name, c in self.counters.items():
            if name == "control":
                continue
            if c.sent != c.received + c.dropped + len(c.live):
                raise InvariantViolation(
                    f"{name}: sent {c.sent} != received {c.received} + dropped {c.dropped} + in flight {len(c.live)}"
                )

    def sample(self, now: int) -> None:
        """Snapshot every series; raises if packets were created or lost from thin air."""
        self.check_conservation()
        window = now - self.last_sample
        usage = {}
        for key in sorted(set(self.link_bits) | set(self.link_usage)):
            rate = self.link_bits.get(key, 0) * NS_PER_S / window if window > 0 else 0.0
            usage[key] = rate
            self.link_usage.setdefault(key, []).append(rate)
        self.link_bits = {}
        for name, c in self.counters.items():
            if name.startswith("path/"):
                keys = self.paths.get(name[len("path/"):], [])
                bw = sum(usage.get(k, 0.0) for k in keys) / len(keys) if keys else 0.0
            else:
                bw = c.window_bits * NS_PER_S / window if window > 0 else 0.0
            c.window_bits = 0
            row = (
                now / NS_PER_S,
                c.sent,
                c.received,
                c.dropped,
                len(c.live),
                pdr_percent(c.sent, c.received),
                c.energy_pj / PJ_PER_J,
                c.delay_ns / c.received / NS_PER_S if c.received else 0.0,
                bw,
            )
            self.samples.setdefault(name, []).append(row)
        self.last_sample = now

    def finalize_report(self, seed: Optional[int] = None) -> MetricsReport:
        self.check_conservation()
        series = {}
        for name in _ordered(self.counters):
            c = self.counters[name]
            series[name] = SeriesReport(
                packets_sent=c.sent,
                packets_received=c.received,
                packets_dropped=c.dropped,
                in_flight=len(c.live),
                pdr=pdr_percent(c.sent, c.received),
                mean_delay=c.delay_ns / c.received / NS_PER_S if c.received else 0.0,
                energy=c.energy_pj / PJ_PER_J,
                samples=list(self.samples.get(name, [])),
            )
        usage = {f"{a}-{b}": list(v) for (a, b), v in sorted(self.link_usage.items())}
        return MetricsReport(series, usage, dict(self.path_bandwidth), seed)


def _ordered(names: Iterable[str]) -> list:
    rank = {"all": 0, "control": 1}
    return sorted(names, key=lambda n: (rank.get(n, 2 if n.startswith("flow/") else 3), n))


def aggregate_runs(reports: list, minimum: int = 5) -> MetricsReport:
    """Element-wise mean of scalar metrics; time series averaged per sample index."""
    if len(reports) < minimum:
        raise MetricsError(f"need at least {minimum} runs to aggregate, got {len(reports)}")
    if not reports:
        return MetricsReport()
    k = len(reports)
    names = list(reports[0].series)
    for r in reports[1:]:
        if list(r.series) != names:
            raise MetricsError("runs report different series; were they from the same scenario?")
    series = {}
    for name in names:
        runs = [r.series[name] for r in reports]
        means = {key: sum(s.scalars()[key] for s in runs) / k for key in runs[0].scalars()}
        n = min(len(s.samples) for s in runs)
        samples = [tuple(sum(s.samples[i][j] for s in runs) / k for j in range(len(SAMPLE_FIELDS))) for i in range(n)]
        series[name] = SeriesReport(samples=samples, **means)
    usage = {}
    for key in reports[0].link_usage:
        rows = [r.link_usage.get(key, []) for r in reports]
        n = min(len(x) for x in rows)
        usage[key] = [sum(x[i] for x in rows) / k for i in range(n)]
    return MetricsReport(series, usage, dict(reports[0].path_bandwidth), None)


def emit_timeseries(report: MetricsReport, metric: str, series: str = "all") -> list:
    """Rows of ``(time_s, value)`` for one metric of one series."""
    if metric not in _METRIC_FIELD:
        raise MetricsError(f"unknown metric {metric!r}; expected one of {', '.join(TIMESERIES_METRICS)}")
    if series not in report.series:
        raise MetricsError(f"unknown series {series!r}")
    col = SAMPLE_FIELDS.index(_METRIC_FIELD[metric])
    return [(row[0], row[col]) for row in report.series[series].samples]


def summary_rows(report: MetricsReport) -> list:
    """One row per path, columns in the order of ``SUMMARY_HEADER``."""
    rows = []
    for label in report.path_labels():
        s = report.path(label)
        rows.append((label, report.path_bandwidth.get(label, 0.0), s.packets_received, s.pdr, s.mean_delay,
                     s.energy, s.packets_dropped))
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(header: Iterable[str], rows: Iterable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def timeseries_by_series_csv(report: MetricsReport, metric: str, names: list) -> str:
    columns = [emit_timeseries(report, metric, n) for n in names]
    n = min((len(c) for c in columns), default=0)
    rows = []
    for i in range(n):
        rows.append((columns[0][i][0], *(c[i][1] for c in columns)))
    return to_csv(("time_s", *names), rows)


# -- rebuilding a report from the trace --------------------------------------

def parse_detail(detail: str) -> dict:
    out = {}
    for tok in detail.split():
        key, _, value = tok.partition("=")
        out[key] = value
    return out


def report_from_trace(lines: Iterable[str], energy_model) -> dict:
    """Recompute per-series scalar counters from trace lines alone.

    ``energy_model`` supplies per-byte and per-packet costs in picojoules
    (``tx_pj``, ``rx_pj``, ``overhead_pj``); energy is re-derived from the
    logged packet sizes rather than read back from the ledger.
    """
    acc: dict = {}
    meta: dict = {}

    def bump(name, key, amount=1):
        d = acc.setdefault(name, {"sent": 0, "received": 0, "dropped": 0, "delay_ns": 0, "energy_pj": 0})
        d[key] += amount

    for line in lines:
        time_ns, kind, node, pid, detail = line.rstrip("\n").split("\t")
        time_ns = int(time_ns)
        info = parse_detail(detail)
        if kind == "send":
            meta[pid] = {"flow": info["flow"], "label": None, "created": time_ns}
            bump("all", "sent")
            bump(f"flow/{info['flow']}", "sent")
        elif kind == "dispatch":
            meta[pid]["label"] = info["label"]
            bump(f"path/{info['label']}", "sent")
        elif kind in ("deliver", "drop"):
            if kind == "drop" and info.get("type") != "data":
                continue
            m = meta[pid]
            names = ["all", f"flow/{m['flow']}"] + ([f"path/{m['label']}"] if m["label"] else [])
            for name in names:
                if kind == "deliver":
                    bump(name, "received")
                    bump(name, "delay_ns", time_ns - m["created"])
                else:
                    bump(name, "dropped")
        elif kind in ("transmit-complete", "packet-arrival"):
            if info.get("outcome") == "aborted":
                continue
            size = int(info["size"])
            if kind == "transmit-complete":
                pj = energy_model.overhead_pj + size * energy_model.tx_pj
            else:
                pj = energy_model.overhead_pj + size * energy_model.rx_pj
            if info["type"] == "data":
                m = meta[pid]
                names = ["all", f"flow/{m['flow']}"] + ([f"path/{m['label']}"] if m["label"] else [])
            else:
                names = ["control", "all"]
            for name in names:
                bump(name, "energy_pj", pj)
    return acc
