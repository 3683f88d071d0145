"""Byzantine reliable broadcast: INIT / ECHO / READY with quorum thresholds.

Requires 3t < n.  A node echoes the first INIT it receives for a slot
(origin, sn) directly from the origin, sends READY once it has strictly more
than (n+t)/2 ECHOs or t+1 READYs for the same payload, and delivers after
2t+1 READYs.  Votes are counted per distinct sender and keyed by payload.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .broadcast import DeliveryEvent, Endpoint, Message, check_bounds, well_formed


@dataclass
class BrbSlotState:
    echoed: bool = False
    readied: bool = False
    delivered: bool = False
    echo_senders: dict = field(default_factory=dict)  # payload -> set of senders
    ready_senders: dict = field(default_factory=dict)
    delivered_payload: object = None

    def clone(self):
        return BrbSlotState(
            self.echoed,
            self.readied,
            self.delivered,
            {m: set(s) for m, s in self.echo_senders.items()},
            {m: set(s) for m, s in self.ready_senders.items()},
            self.delivered_payload,
        )

    def key(self):
        # vote sets that can no longer trigger anything are left out
        echoes = () if self.readied else frozenset((m, frozenset(s)) for m, s in self.echo_senders.items())
        readies = () if self.readied and self.delivered else frozenset(
            (m, frozenset(s)) for m, s in self.ready_senders.items()
        )
        return self.echoed, self.readied, self.delivered, self.delivered_payload, echoes, readies


class BrbEndpoint(Endpoint):
    def __init__(self, node, n, t):
        check_bounds("byzantine", n, t)
        super().__init__(node, n, t)
        self.slots = {}

    def echo_quorum_reached(self, count):
        return 2 * count > self.n + self.t

    def ready_relay_reached(self, count):
        return count >= self.t + 1

    def delivery_reached(self, count):
        return count >= 2 * self.t + 1

    def _slot(self, msg):
        key = (msg.origin, msg.sn)
        slot = self.slots.get(key)
        if slot is None:
            slot = self.slots[key] = BrbSlotState()
        return slot

    def broadcast(self, sn, payload):
        self._next_sn(sn)
        return self._to_all(Message("INIT", self.node, sn, payload))

    def receive(self, sender, msg):
        if not well_formed(msg, self.n) or not 1 <= sender <= self.n:
            return [], None
        slot = self._slot(msg)
        sends = []
        delivery = None

        if msg.kind == "INIT":
            if sender == msg.origin and not slot.echoed:
                slot.echoed = True
                sends = self._to_all(Message("ECHO", msg.origin, msg.sn, msg.payload))
        elif msg.kind == "ECHO":
            voters = slot.echo_senders.setdefault(msg.payload, set())
            voters.add(sender)
            if not slot.readied and self.echo_quorum_reached(len(voters)):
                slot.readied = True
                sends = self._to_all(Message("READY", msg.origin, msg.sn, msg.payload))
        elif msg.kind == "READY":
            voters = slot.ready_senders.setdefault(msg.payload, set())
            voters.add(sender)
            if not slot.readied and self.ready_relay_reached(len(voters)):
                slot.readied = True
                sends = self._to_all(Message("READY", msg.origin, msg.sn, msg.payload))
            if not slot.delivered and self.delivery_reached(len(voters)):
                slot.delivered = True
                slot.delivered_payload = msg.payload
                delivery = DeliveryEvent(msg.origin, msg.sn, msg.payload)
        return sends, delivery

    collapse_senders = False

    def absorbs(self, sender, msg):
        """True when receiving ``msg`` here can never produce any output."""
        slot = self.slots.get((msg.origin, msg.sn))
        if msg.kind == "INIT":
            return sender != msg.origin or (slot is not None and slot.echoed)
        if slot is None:
            return False
        if msg.kind == "ECHO":
            return slot.readied
        return slot.readied and slot.delivered

    def clone(self):
        other = BrbEndpoint.__new__(BrbEndpoint)
        other.node, other.n, other.t = self.node, self.n, self.t
        other.last_sn = self.last_sn
        other.slots = {k: s.clone() for k, s in self.slots.items()}
        return other

    def state_key(self):
        return self.last_sn, frozenset((k, s.key()) for k, s in self.slots.items())
