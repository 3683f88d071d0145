"""Reliable-broadcast abstraction shared by the crash and Byzantine layers.

An endpoint exposes ``broadcast(sn, payload)`` and ``receive(sender, msg)``.
Both return the point-to-point sends to perform as ``(dest, Message)``
pairs; ``receive`` additionally returns a :class:`DeliveryEvent` when a
message is r-delivered.  Sequence numbers are explicit end to end; the
layer does not order deliveries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import TransferPayload

MESSAGE_FIELDS = ("kind", "origin", "sn", "payload")


class Model(str, enum.Enum):
    CRASH = "crash"
    BYZANTINE = "byzantine"


KINDS = {
    Model.CRASH: ("FWD",),
    Model.BYZANTINE: ("INIT", "ECHO", "READY"),
}


@dataclass(frozen=True, order=True)
class Message:
    kind: str
    origin: int
    sn: int
    payload: TransferPayload


@dataclass(frozen=True)
class DeliveryEvent:
    origin: int
    sn: int
    payload: TransferPayload


def encode_message(msg):
    return {"kind": msg.kind, "origin": msg.origin, "sn": msg.sn, "payload": msg.payload.to_dict()}


def decode_message(d):
    if set(d) != set(MESSAGE_FIELDS):
        raise ValueError(f"message must have exactly {MESSAGE_FIELDS}, got {sorted(d)}")
    kind = d["kind"]
    if kind not in KINDS[Model.CRASH] + KINDS[Model.BYZANTINE]:
        raise ValueError(f"unknown message kind {kind!r}")
    return Message(kind, int(d["origin"]), int(d["sn"]), TransferPayload.from_dict(d["payload"]))


def well_formed(msg, n):
    """Whether a received message could have been produced by a correct node."""
    p = msg.payload
    return 1 <= msg.origin <= n and msg.sn >= 1 and 1 <= p.dest <= n and p.amount > 0


def check_bounds(model, n, t):
    model = Model(model)
    if n < 1 or t < 0:
        raise ValueError(f"invalid system size n={n}, t={t}")
    if model is Model.CRASH and not t < n:
        raise ValueError(f"crash model requires t < n (n={n}, t={t})")
    if model is Model.BYZANTINE and not 3 * t < n:
        raise ValueError(f"Byzantine model requires 3t < n (n={n}, t={t})")
    return model


class Endpoint:
    """Common plumbing for one node's broadcast endpoint."""

    def __init__(self, node, n, t):
        if not 1 <= node <= n:
            raise ValueError(f"node {node} out of range 1..{n}")
        self.node = node
        self.n = n
        self.t = t
        self.last_sn = 0

    def _next_sn(self, sn):
        if sn != self.last_sn + 1:
            raise ValueError(f"broadcast sn must be {self.last_sn + 1}, got {sn}")
        self.last_sn = sn

    def _to_all(self, msg):
        return [(dest, msg) for dest in range(1, self.n + 1)]

    def broadcast(self, sn, payload):
        raise NotImplementedError

    def receive(self, sender, msg):
        raise NotImplementedError


def broadcast_instance(model, node, n, t):
    """Build the reliable-broadcast endpoint for ``node`` under ``model``."""
    model = check_bounds(model, n, t)
    if model is Model.CRASH:
        from .crb import CrbEndpoint

        return CrbEndpoint(node, n, t)
    from .brb import BrbEndpoint

    return BrbEndpoint(node, n, t)
