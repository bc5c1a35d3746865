"""Slotted wireless MAC simulator and multi-agent learning lab for BSSs with hidden terminals."""

__version__ = "0.1.0"

from .topology import TopologyGraph, NeighborPartition, parse_topology
from .medium import SimConfig, Medium, TransmissionLedger, FeedbackEvent, PacketRecord

__all__ = [
    "__version__",
    "TopologyGraph",
    "NeighborPartition",
    "parse_topology",
    "SimConfig",
    "Medium",
    "TransmissionLedger",
    "FeedbackEvent",
    "PacketRecord",
]
