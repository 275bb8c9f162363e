"""Scenario files: schema, validation, and construction of runnable simulators.

Scenarios are YAML documents (schema ``version: 1``).  Times are seconds,
bandwidths bit/s, sizes bytes.  Unknown keys are errors, never ignored.
"""

from __future__ import annotations

import copy
from dataclasses import MISSING, dataclass, field, fields, replace
from typing import Optional

import yaml

from .engine import EnergyModel, Simulator, TrafficFlow, seconds_to_ns
from .hose import HoseSpec, RoutingFractions
from .policy import CandidatePath
from .topology import Link, Node, PathSpec, Topology, TopologyError, generate_random_topology

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


@dataclass
class GenerateConfig:
    nodes: int
    area: tuple = (1000.0, 1000.0)
    range: float = 250.0
    seed: int = 0
    bandwidth: float = 2.0e6
    queue_capacity: int = 50


@dataclass
class LinkConfig:
    a: int
    b: int
    bandwidth: Optional[float] = None
    prop_delay: Optional[float] = None
    queue_capacity: Optional[int] = None


@dataclass
class NodeConfig:
    id: int
    x: float = 0.0
    y: float = 0.0
    range: float = 250.0


@dataclass
class TopologyConfig:
    generate: Optional[GenerateConfig] = None
    nodes: list = field(default_factory=list)
    links: list = field(default_factory=list)
    overrides: list = field(default_factory=list)


@dataclass
class PathConfig:
    label: str
    bandwidth: float
    hops: list


@dataclass
class FlowConfig:
    name: str
    src: int
    dst: int
    interval: float
    start: float = 0.0
    stop: Optional[float] = None
    packet_size: int = 512
    count: Optional[int] = None
    demand: Optional[float] = None
    jitter: float = 0.0


@dataclass
class FailureConfig:
    link: list
    at: float
    restore: Optional[float] = None


@dataclass
class EnergyConfig:
    e_tx: float = 50e-9
    e_rx: float = 50e-9
    e_overhead: float = 20e-6


@dataclass
class EndpointConfig:
    id: int
    b_plus: float
    b_minus: float


@dataclass
class RouteShare:
    fraction: float
    label: Optional[str] = None
    hops: Optional[list] = None


@dataclass
class RoutingConfig:
    src: int
    dst: int
    paths: list


@dataclass
class HoseConfig:
    endpoints: list
    routing: list = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    duration: float
    topology: TopologyConfig
    flows: list
    paths: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    hose: Optional[HoseConfig] = None
    sample_interval: float = 0.5
    runs: int = 5
    min_runs: int = 5
    seed: int = 0
    measured_flow: Optional[str] = None
    version: int = SCHEMA_VERSION


# -- parsing ----------------------------------------------------------------

_NESTED = {
    (Scenario, "topology"): TopologyConfig,
    (Scenario, "energy"): EnergyConfig,
    (Scenario, "hose"): HoseConfig,
    (TopologyConfig, "generate"): GenerateConfig,
}
_LISTS = {
    (Scenario, "flows"): FlowConfig,
    (Scenario, "paths"): PathConfig,
    (Scenario, "failures"): FailureConfig,
    (TopologyConfig, "nodes"): NodeConfig,
    (TopologyConfig, "links"): LinkConfig,
    (TopologyConfig, "overrides"): LinkConfig,
    (HoseConfig, "endpoints"): EndpointConfig,
    (HoseConfig, "routing"): RoutingConfig,
    (RoutingConfig, "paths"): RouteShare,
}
_FLOAT = {"duration", "sample_interval", "interval", "start", "stop", "jitter", "at", "restore", "bandwidth",
          "prop_delay", "range", "x", "y", "e_tx", "e_rx", "e_overhead", "b_plus", "b_minus", "fraction", "demand"}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            if f.default is MISSING and f.default_factory is MISSING:
                raise ScenarioError(f"{where}: missing required key {name!r}")
            continue
        value = data[name]
        sub = f"{where}.{name}"
        if (cls, name) in _NESTED and value is not None:
            value = _build(_NESTED[(cls, name)], value, sub)
        elif (cls, name) in _LISTS:
            if not isinstance(value, list):
                raise ScenarioError(f"{sub}: expected a list")
            value = [_build(_LISTS[(cls, name)], item, f"{sub}[{i}]") for i, item in enumerate(value)]
        elif name in _FLOAT and value is not None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScenarioError(f"{sub}: expected a number, got {value!r}")
            value = float(value)
        elif name == "area":
            if not (isinstance(value, (list, tuple)) and len(value) == 2):
                raise ScenarioError(f"{sub}: expected [width, height]")
            value = (float(value[0]), float(value[1]))
        kwargs[name] = value
    return cls(**kwargs)


def parse_scenario_dict(data) -> Scenario:
    s = _build(Scenario, data, "scenario")
    if s.version != SCHEMA_VERSION:
        raise ScenarioError(f"scenario: unsupported schema version {s.version}")
    validate(s)
    return s


def parse_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: not valid YAML: {exc}") from None
    return parse_scenario_dict(data)


def parse_scenario_text(text: str) -> Scenario:
    return parse_scenario_dict(yaml.safe_load(text))


def to_dict(s: Scenario) -> dict:
    def conv(obj):
        if hasattr(obj, "__dataclass_fields__"):
            return {f.name: conv(getattr(obj, f.name)) for f in fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [conv(x) for x in obj]
        return obj

    return conv(s)


def serialize_scenario(s: Scenario) -> str:
    return yaml.safe_dump(to_dict(s), sort_keys=False)


# -- validation and construction ------------------------------------------------

def validate(s: Scenario) -> None:
    if s.duration <= 0:
        raise ScenarioError("duration must be positive")
    if s.sample_interval <= 0:
        raise ScenarioError("sample_interval must be positive")
    if s.runs < 1:
        raise ScenarioError("runs must be >= 1")
    if not s.flows:
        raise ScenarioError("flows: at least one flow is required")
    try:
        topo = build_topology(s)
    except TopologyError as exc:
        raise ScenarioError(f"topology: {exc}") from None
    names = [f.name for f in s.flows]
    if len(set(names)) != len(names):
        raise ScenarioError(f"flows: duplicate names in {names}")
    for f in s.flows:
        for end in (f.src, f.dst):
            if end not in topo.nodes:
                raise ScenarioError(f"flow {f.name!r}: unknown node {end}")
        if f.interval <= 0:
            raise ScenarioError(f"flow {f.name!r}: interval must be positive")
        stop = s.duration if f.stop is None else f.stop
        if not f.start < stop:
            raise ScenarioError(f"flow {f.name!r}: start must precede stop")
    if s.measured_flow is not None and s.measured_flow not in names:
        raise ScenarioError(f"measured_flow {s.measured_flow!r} is not a flow")
    labels = [p.label for p in s.paths]
    if len(set(labels)) != len(labels):
        raise ScenarioError(f"paths: duplicate labels in {labels}")
    for p in s.paths:
        if p.bandwidth <= 0:
            raise ScenarioError(f"path {p.label!r}: bandwidth must be positive")
        if not topo.validate_path(PathSpec(p.hops, p.label)):
            raise ScenarioError(f"path {p.label!r}: hops {p.hops} are not a simple path in the topology")
    for i, fail in enumerate(s.failures):
        if len(fail.link) != 2 or not topo.has_link(*fail.link):
            raise ScenarioError(f"failures[{i}]: unknown link {fail.link}")
        if fail.at < 0:
            raise ScenarioError(f"failures[{i}]: at must be >= 0")
        if fail.restore is not None and fail.restore <= fail.at:
            raise ScenarioError(f"failures[{i}]: restore must come after at")
    if s.hose is not None:
        try:
            build_hose(s)
        except ValueError as exc:
            raise ScenarioError(f"hose: {exc}") from None


def build_topology(s: Scenario) -> Topology:
    tc = s.topology
    if tc.generate is not None:
        if tc.nodes or tc.links:
            raise ScenarioError("topology: give either generate or explicit nodes/links, not both")
        g = tc.generate
        topo = generate_random_topology(g.nodes, g.area, g.range, g.seed,
                                        bandwidth=g.bandwidth, queue_capacity=g.queue_capacity)
    else:
        if not tc.nodes:
            raise ScenarioError("topology: missing required key 'generate' or 'nodes'")
        topo = Topology([Node(n.id, n.x, n.y, n.range) for n in tc.nodes])
        for l in tc.links:
            topo.add_link(Link(l.a, l.b,
                               2.0e6 if l.bandwidth is None else l.bandwidth,
                               0.0 if l.prop_delay is None else l.prop_delay,
                               50 if l.queue_capacity is None else l.queue_capacity))
    for o in tc.overrides:
        link = topo.link(o.a, o.b)
        if o.bandwidth is not None:
            if o.bandwidth <= 0:
                raise TopologyError(f"override ({o.a}, {o.b}): bandwidth must be positive")
            link.bandwidth = o.bandwidth
        if o.prop_delay is not None:
            link.prop_delay = o.prop_delay
        if o.queue_capacity is not None:
            link.queue_capacity = o.queue_capacity
    return topo


def build_candidates(s: Scenario) -> list:
    return [CandidatePath(PathSpec(p.hops, p.label), p.bandwidth) for p in s.paths]


def build_hose(s: Scenario):
    """The scenario's hose specification and routing fractions."""
    h = s.hose
    hose = HoseSpec({e.id: e.b_plus for e in h.endpoints}, {e.id: e.b_minus for e in h.endpoints})
    by_label = {p.label: PathSpec(p.hops, p.label) for p in s.paths}
    routes = {}
    for r in h.routing:
        shares = []
        for share in r.paths:
            if share.label is not None:
                if share.label not in by_label:
                    raise ScenarioError(f"routing {r.src}->{r.dst}: unknown path label {share.label!r}")
                path = by_label[share.label]
            elif share.hops is not None:
                path = PathSpec(share.hops, f"{r.src}-{r.dst}")
            else:
                raise ScenarioError(f"routing {r.src}->{r.dst}: each share needs a label or hops")
            shares.append((path, share.fraction))
        for ep in (r.src, r.dst):
            if ep not in hose.b_plus:
                raise ScenarioError(f"routing {r.src}->{r.dst}: endpoint {ep} has no hose bounds")
        routes[(r.src, r.dst)] = shares
    return hose, RoutingFractions(routes)


def flow_of(s: Scenario, f: FlowConfig) -> TrafficFlow:
    stop = s.duration if f.stop is None else f.stop
    return TrafficFlow(
        name=f.name, src=f.src, dst=f.dst,
        interval=seconds_to_ns(f.interval), start=seconds_to_ns(f.start), stop=seconds_to_ns(stop),
        packet_size=f.packet_size, count=f.count, demand=f.demand,
    )


def build_simulator(s: Scenario, seed: int, trace: bool = False) -> Simulator:
    """A ready-to-run simulator for one repetition of ``s``."""
    sim = Simulator(
        build_topology(s),
        energy=EnergyModel(s.energy.e_tx, s.energy.e_rx, s.energy.e_overhead),
        sample_interval=seconds_to_ns(s.sample_interval),
        candidates=build_candidates(s),
        seed=seed,
        trace=trace,
    )
    for f in s.flows:
        sim.add_flow(flow_of(s, f), jitter=seconds_to_ns(f.jitter))
    for fail in s.failures:
        sim.inject_failure(tuple(fail.link), seconds_to_ns(fail.at))
        if fail.restore is not None:
            sim.inject_restore(tuple(fail.link), seconds_to_ns(fail.restore))
    return sim


SWEEPABLE = ("packet_size", "flow_interval", "failure_time")


def with_parameter(s: Scenario, parameter: str, value) -> Scenario:
    """A copy of ``s`` with ``parameter`` set on every flow (or failure)."""
    if parameter not in SWEEPABLE:
        raise ScenarioError(f"cannot sweep {parameter!r}; sweepable: {', '.join(SWEEPABLE)}")
    out = copy.deepcopy(s)
    if parameter == "packet_size":
        out.flows = [replace(f, packet_size=int(value)) for f in out.flows]
    elif parameter == "flow_interval":
        out.flows = [replace(f, interval=float(value)) for f in out.flows]
    else:
        if not out.failures:
            raise ScenarioError("cannot sweep failure_time: scenario has no failures")
        out.failures = [replace(f, at=float(value)) for f in out.failures]
    validate(out)
    return out
