"""Per-process money-transfer state machine.

Each correct process keeps a local copy of every account, the number of
transfers it has processed from each sender and its own sequence counter.
Transfers are disseminated through a reliable broadcast carrying a single
sequence number; a delivered transfer is processed once it is next in line
for its sender and the sender's local balance covers it.

The original formulation blocks inside the delivery handler.  Here a
delivery is buffered in ``pending`` and the buffer is drained to a fixpoint
after every state change, so handlers never block.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ProtocolViolation(Exception):
    """Raised when a lower layer breaks its contract (e.g. duplicate delivery)."""


@dataclass(frozen=True, order=True)
class TransferPayload:
    dest: int
    amount: int

    def to_dict(self):
        return {"dest": self.dest, "amount": self.amount}

    @classmethod
    def from_dict(cls, d):
        if set(d) != {"dest", "amount"}:
            raise ValueError(f"payload must have exactly dest and amount, got {sorted(d)}")
        return cls(int(d["dest"]), int(d["amount"]))


@dataclass(frozen=True)
class BroadcastRequest:
    # sn is the only control field that travels with a transfer
    sn: int
    payload: TransferPayload


@dataclass(frozen=True)
class Initiated:
    sn: int
    payload: TransferPayload


@dataclass(frozen=True)
class Aborted:
    payload: TransferPayload


@dataclass(frozen=True)
class Committed:
    sn: int


@dataclass(frozen=True)
class Processed:
    origin: int
    sn: int
    payload: TransferPayload


@dataclass(frozen=True)
class BalanceRead:
    j: int
    value: int


@dataclass
class Node:
    """Replica of the account array held by one correct process.

    Process ids are 1-based.  Vectors are stored 0-based internally; use
    :meth:`balance` and :meth:`snapshot` rather than indexing ``account``.
    ``events`` is the node's local log of everything it emitted.
    """

    id: int
    n: int
    account: list
    window_k: int = 1
    sn: int = 0
    delivered: list = field(default_factory=list)  # del_i: contiguous processed prefix per sender
    pending: dict = field(default_factory=dict)  # (sender, sn) -> TransferPayload
    processed_set: list = field(default_factory=list)
    in_flight: int | None = None
    events: list = field(default_factory=list)

    def __post_init__(self):
        if self.window_k < 1:
            raise ValueError("window_k must be >= 1")
        if not 1 <= self.id <= self.n:
            raise ValueError(f"process id {self.id} out of range 1..{self.n}")
        if len(self.account) != self.n:
            raise ValueError("account vector length must equal n")
        if not self.delivered:
            self.delivered = [0] * self.n
        if not self.processed_set:
            self.processed_set = [set() for _ in range(self.n)]

    def _check_id(self, j):
        if not 1 <= j <= self.n:
            raise ValueError(f"process id {j} out of range 1..{self.n}")

    # -- operations -------------------------------------------------------

    def balance(self, j):
        self._check_id(j)
        value = self.account[j - 1]
        self.events.append(BalanceRead(j, value))
        return value

    def initiate_transfer(self, dest, amount):
        """Start ``transfer(dest, amount)``.

        Returns ``(Initiated, BroadcastRequest)`` when funds suffice and
        ``(Aborted, None)`` otherwise.  The debit is applied only when the
        node later processes its own transfer.
        """
        self._check_id(dest)
        if dest == self.id:
            raise ValueError("a process does not transfer money to itself")
        if amount <= 0:
            raise ValueError("transfer amount must be positive")
        if self.in_flight is not None:
            raise RuntimeError(f"transfer sn={self.in_flight} still awaiting commit")
        payload = TransferPayload(dest, amount)
        if amount > self.account[self.id - 1]:
            outcome = Aborted(payload)
            self.events.append(outcome)
            return outcome, None
        self.sn += 1
        self.in_flight = self.sn
        outcome = Initiated(self.sn, payload)
        self.events.append(outcome)
        return outcome, BroadcastRequest(self.sn, payload)

    def processing_enabled(self, sender, sn, payload):
        done = self.processed_set[sender - 1]
        prefix = self.delivered[sender - 1]
        return (
            sn not in done
            and prefix + 1 <= sn <= prefix + self.window_k
            and self.account[sender - 1] >= payload.amount
        )

    def handle_delivery(self, sender, sn, payload):
        """Buffer a delivered transfer and process whatever becomes enabled.

        Returns the list of emitted events (``Processed``, plus ``Committed``
        when the node's own in-flight transfer gets processed).
        """
        self._check_id(sender)
        key = (sender, sn)
        if sn < 1:
            raise ProtocolViolation(f"invalid sequence number {sn} from {sender}")
        if key in self.pending or sn in self.processed_set[sender - 1]:
            raise ProtocolViolation(f"duplicate delivery of (sender={sender}, sn={sn})")
        self.pending[key] = payload
        return self.drain_pending()

    def drain_pending(self):
        out = []
        while True:
            chosen = None
            for key in sorted(self.pending):
                if self.processing_enabled(key[0], key[1], self.pending[key]):
                    chosen = key
                    break
            if chosen is None:
                return out
            payload = self.pending.pop(chosen)
            out.extend(self._process(chosen[0], chosen[1], payload))

    def _process(self, sender, sn, payload):
        self.account[sender - 1] -= payload.amount
        self.account[payload.dest - 1] += payload.amount
        done = self.processed_set[sender - 1]
        done.add(sn)
        prefix = self.delivered[sender - 1]
        while prefix + 1 in done:
            prefix += 1
        self.delivered[sender - 1] = prefix
        emitted = [Processed(sender, sn, payload)]
        if sender == self.id and sn == self.in_flight:
            self.in_flight = None
            emitted.append(Committed(sn))
        self.events.extend(emitted)
        return emitted

    def snapshot(self):
        return tuple(self.account), tuple(self.delivered), len(self.pending)

    # -- exploration support ---------------------------------------------

    def clone(self):
        return type(self)(
            id=self.id,
            n=self.n,
            account=list(self.account),
            window_k=self.window_k,
            sn=self.sn,
            delivered=list(self.delivered),
            pending=dict(self.pending),
            processed_set=[set(s) for s in self.processed_set],
            in_flight=self.in_flight,
            events=list(self.events),
        )

    def state_key(self):
        return (
            tuple(self.account),
            tuple(self.delivered),
            tuple(frozenset(s) for s in self.processed_set) if self.window_k > 1 else (),
            frozenset(self.pending.items()),
            self.sn,
            self.in_flight,
        )


class FifoNode(Node):
    """Node whose gate is the literal FIFO-and-funds predicate.

    Equivalent to ``Node(window_k=1)``; kept as an independent rendering of
    the base algorithm so the window generalisation can be compared to it.
    """

    def processing_enabled(self, sender, sn, payload):
        return sn == self.delivered[sender - 1] + 1 and self.account[sender - 1] >= payload.amount


def new_node(id, init, window_k=1, cls=Node):
    init = list(init)
    if any(v < 0 for v in init):
        raise ValueError("initial balances must be non-negative")
    return cls(id=id, n=len(init), account=init, window_k=window_k)
