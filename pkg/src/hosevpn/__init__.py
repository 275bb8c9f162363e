"""Hose-model VPN provisioning over an AODV ad hoc network simulator."""

from .hose import HoseSpec, RoutingFractions, TrafficMatrix, minimal_reservation, worst_case_link_load
from .policy import CandidatePath, PathTable, handle_path_failure, select_path
from .topology import Link, Node, PathSpec, Topology, generate_random_topology

__all__ = [
    "CandidatePath", "HoseSpec", "Link", "Node", "PathSpec", "PathTable", "RoutingFractions",
    "Topology", "TrafficMatrix", "generate_random_topology", "handle_path_failure",
    "minimal_reservation", "select_path", "worst_case_link_load",
]

__version__ = "0.1.0"
