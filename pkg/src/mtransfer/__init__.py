"""Consensus-free money transfer over reliable broadcast.

Core state machine, crash and Byzantine reliable broadcasts, a seeded
network simulator with fault injection, and a trace checker.
"""

from .broadcast import DeliveryEvent, Message, Model, broadcast_instance
from .compliance import Verdict, build_serialization, check_trace
from .core import BroadcastRequest, FifoNode, Node, ProtocolViolation, TransferPayload, new_node
from .scenario import Scenario, load_scenario
from .simnet import explore, run
from .trace import Trace, TraceEvent

__all__ = [
    "BroadcastRequest",
    "DeliveryEvent",
    "FifoNode",
    "Message",
    "Model",
    "Node",
    "ProtocolViolation",
    "Scenario",
    "Trace",
    "TraceEvent",
    "TransferPayload",
    "Verdict",
    "broadcast_instance",
    "build_serialization",
    "check_trace",
    "explore",
    "load_scenario",
    "new_node",
    "run",
]
