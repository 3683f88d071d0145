"""Trace events and the JSON-lines trace file.

A trace file starts with a ``Header`` record holding the scenario, continues
with one record per event in global order, and ends with an ``End`` record
carrying the quiescence flag.  Field order inside every record is fixed so
that traces can be compared byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .broadcast import decode_message, encode_message
from .core import TransferPayload

EVENT_KINDS = {
    # kind -> ordered extra fields
    "Send": ("to", "msg"),
    "Initiated": ("sn", "payload"),
    "Aborted": ("payload",),
    "Delivery": ("origin", "sn", "payload"),
    "Processed": ("origin", "sn", "payload"),
    "Committed": ("sn",),
    "BalanceRead": ("j", "value"),
    "Crashed": (),
}


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    node: int
    kind: str
    origin: int | None = None
    sn: int | None = None
    payload: TransferPayload | None = None
    to: int | None = None
    msg: object = None
    j: int | None = None
    value: int | None = None

    def to_dict(self):
        d = {"tick": self.tick, "node": self.node, "kind": self.kind}
        for name in EVENT_KINDS[self.kind]:
            v = getattr(self, name)
            if name == "payload":
                v = v.to_dict()
            elif name == "msg":
                v = encode_message(v)
            d[name] = v
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kind = d["kind"]
            extra = EVENT_KINDS[kind]
        except (KeyError, TypeError):
            raise TraceFormatError(f"bad trace record: {d!r}") from None
        if list(d) != ["tick", "node", "kind", *extra]:
            raise TraceFormatError(f"bad fields for {kind} record: {list(d)}")
        kw = {}
        for name in extra:
            v = d[name]
            if name == "payload":
                v = TransferPayload.from_dict(v)
            elif name == "msg":
                v = decode_message(v)
            kw[name] = v
        return cls(d["tick"], d["node"], kind, **kw)


@dataclass
class Trace:
    scenario: dict
    events: list = field(default_factory=list)
    quiescent: bool = True
    steps: int = 0

    @property
    def n(self):
        return self.scenario["n"]

    @property
    def model(self):
        return self.scenario["model"]

    @property
    def init(self):
        return self.scenario["init"]

    @property
    def window_k(self):
        return self.scenario.get("window_k", 1)

    @property
    def byzantine(self):
        return sorted({f["node"] for f in self.scenario.get("faults", []) if "crash" not in f})

    @property
    def crashed(self):
        return sorted({e.node for e in self.events if e.kind == "Crashed"})

    @property
    def correct(self):
        """Non-Byzantine processes, crashed ones included."""
        byz = set(self.byzantine)
        return [i for i in range(1, self.n + 1) if i not in byz]

    @property
    def never_crashed(self):
        dead = set(self.crashed)
        return [i for i in self.correct if i not in dead]

    def local(self, i, kinds=None):
        return [e for e in self.events if e.node == i and (kinds is None or e.kind in kinds)]

    def without_sends(self):
        return replace(self, events=[e for e in self.events if e.kind != "Send"])

    def to_jsonl(self):
        lines = [json.dumps({"kind": "Header", "scenario": self.scenario})]
        lines.extend(json.dumps(e.to_dict()) for e in self.events)
        lines.append(json.dumps({"kind": "End", "quiescent": self.quiescent, "steps": self.steps}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text):
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: {exc}") from None
        if not records:
            raise TraceFormatError("empty trace")
        head, tail = records[0], records[-1]
        if head.get("kind") != "Header" or not isinstance(head.get("scenario"), dict):
            raise TraceFormatError("trace must start with a Header record")
        if len(records) < 2 or tail.get("kind") != "End":
            raise TraceFormatError("trace must end with an End record")
        try:
            events = [TraceEvent.from_dict(r) for r in records[1:-1]]
        except (ValueError, KeyError, TypeError) as exc:
            raise TraceFormatError(str(exc)) from None
        for key in ("n", "model", "init"):
            if key not in head["scenario"]:
                raise TraceFormatError(f"header scenario lacks {key!r}")
        return cls(head["scenario"], events, bool(tail.get("quiescent")), int(tail.get("steps", 0)))

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            return cls.from_jsonl(fh.read())
