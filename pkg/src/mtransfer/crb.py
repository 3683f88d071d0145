"""Crash-tolerant reliable broadcast by echo-forwarding.

The origin sends FWD to every node (itself included).  Any other node
forwards a FWD to everyone the first time it sees it, then delivers it.
The origin's own initial send already counts as its forward, which bounds
the cost at n**2 point-to-point messages per broadcast.  Forwarding before
delivering is what keeps agreement when the origin crashes mid-send.
"""

from __future__ import annotations

from .broadcast import DeliveryEvent, Endpoint, Message, well_formed


class CrbEndpoint(Endpoint):
    def __init__(self, node, n, t):
        super().__init__(node, n, t)
        self.seen = set()  # (origin, sn) delivered here
        self.forwarded = set()

    def broadcast(self, sn, payload):
        self._next_sn(sn)
        self.forwarded.add((self.node, sn))
        return self._to_all(Message("FWD", self.node, sn, payload))

    def receive(self, sender, msg):
        if msg.kind != "FWD" or not well_formed(msg, self.n):
            return [], None
        key = (msg.origin, msg.sn)
        if key in self.seen:
            return [], None
        self.seen.add(key)
        sends = []
        if key not in self.forwarded:
            self.forwarded.add(key)
            sends = self._to_all(msg)
        return sends, DeliveryEvent(msg.origin, msg.sn, msg.payload)

    # receive() ignores the transport sender, so identical copies are interchangeable
    collapse_senders = True

    def absorbs(self, sender, msg):
        """True when receiving ``msg`` here can never produce any output."""
        return msg.kind != "FWD" or (msg.origin, msg.sn) in self.seen

    def clone(self):
        other = CrbEndpoint(self.node, self.n, self.t)
        other.last_sn = self.last_sn
        other.seen = set(self.seen)
        other.forwarded = set(self.forwarded)
        return other

    def state_key(self):
        return self.last_sn, frozenset(self.seen), frozenset(self.forwarded)
