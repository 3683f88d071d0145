"""Declarative experiment descriptions and their JSON file format.

A scenario file is a JSON object with the keys ``n``, ``t``, ``model``,
``init`` and optionally ``window_k``, ``seed``, ``max_delay``, ``workload``
and ``faults``.  Unknown keys are rejected at every level.

Workload entries::

    {"at": 3, "node": 1, "transfer": {"dest": 2, "amount": 4}}
    {"at": 5, "node": 2, "balance": {"j": 1}}

Fault entries (one behaviour per entry)::

    {"node": 2, "crash": {"tick": 7, "sends_completed": 1}}
    {"node": 4, "equivocate": {"sn": 1, "payload_a": {...}, "payload_b": {...},
                               "partition": [2, 3], "at": 0, "amplify": false}}
    {"node": 4, "overspend": {"sn": 1, "dest": 2, "amount": 1000000, "at": 0}}
    {"node": 4, "skip_seq": {"from_sn": 2, "gap": 1, "dest": 1, "amount": 1, "at": 0}}
    {"node": 4, "silent": {}}
"""

from __future__ import annotations

import json
import random
from dataclasses import MISSING, dataclass, field, fields

from .broadcast import Model, check_bounds
from .core import TransferPayload


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TransferRequest:
    dest: int
    amount: int


@dataclass(frozen=True)
class BalanceRequest:
    j: int


@dataclass(frozen=True)
class WorkloadItem:
    at: int
    node: int
    request: TransferRequest | BalanceRequest


@dataclass(frozen=True)
class CrashAtTick:
    tick: int
    # None: halt before doing anything at `tick`; s: act during `tick`, but
    # only the first s point-to-point sends of that tick leave the node
    sends_completed: int | None = None


@dataclass(frozen=True)
class Equivocate:
    sn: int
    payload_a: TransferPayload
    payload_b: TransferPayload
    partition: tuple
    at: int = 0
    amplify: bool = False


@dataclass(frozen=True)
class Overspend:
    sn: int
    dest: int
    amount: int
    at: int = 0


@dataclass(frozen=True)
class SkipSeq:
    from_sn: int
    gap: int
    dest: int
    amount: int = 1
    at: int = 0


@dataclass(frozen=True)
class Silent:
    pass


BEHAVIOURS = {
    "crash": CrashAtTick,
    "equivocate": Equivocate,
    "overspend": Overspend,
    "skip_seq": SkipSeq,
    "silent": Silent,
}
BEHAVIOUR_NAMES = {cls: name for name, cls in BEHAVIOURS.items()}


@dataclass(frozen=True)
class FaultSpec:
    node: int
    behavior: CrashAtTick | Equivocate | Overspend | SkipSeq | Silent

    @property
    def is_crash(self):
        return isinstance(self.behavior, CrashAtTick)


@dataclass
class Scenario:
    n: int
    t: int
    model: Model
    init: list
    window_k: int = 1
    seed: int = 0
    max_delay: int = 10
    workload: list = field(default_factory=list)
    faults: list = field(default_factory=list)

    def __post_init__(self):
        try:
            self.model = Model(self.model)
        except ValueError:
            raise ScenarioError(f"unknown model {self.model!r}") from None
        self.validate()

    @property
    def byzantine(self):
        return sorted({f.node for f in self.faults if not f.is_crash})

    @property
    def crash_plans(self):
        return {f.node: f.behavior for f in self.faults if f.is_crash}

    def validate(self):
        try:
            check_bounds(self.model, self.n, self.t)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if len(self.init) != self.n:
            raise ScenarioError(f"init has {len(self.init)} entries, expected n={self.n}")
        if any(not isinstance(v, int) or v < 0 for v in self.init):
            raise ScenarioError("initial balances must be non-negative integers")
        if self.window_k < 1:
            raise ScenarioError("window_k must be >= 1")
        if self.max_delay < 1:
            raise ScenarioError("max_delay must be >= 1")

        def in_range(i, what):
            if not isinstance(i, int) or not 1 <= i <= self.n:
                raise ScenarioError(f"{what} {i!r} out of range 1..{self.n}")

        crashed = set()
        for f in self.faults:
            in_range(f.node, "fault node")
            b = f.behavior
            if f.is_crash:
                if self.model is not Model.CRASH:
                    raise ScenarioError("crash faults are only allowed in the crash model")
                if f.node in crashed:
                    raise ScenarioError(f"node {f.node} crashes twice")
                crashed.add(f.node)
                if b.tick < 0 or (b.sends_completed is not None and b.sends_completed < 0):
                    raise ScenarioError("crash tick and sends_completed must be non-negative")
                continue
            if self.model is not Model.BYZANTINE:
                raise ScenarioError("Byzantine behaviours require the Byzantine model")
            if getattr(b, "at", 0) < 0:
                raise ScenarioError("behaviour tick must be non-negative")
            if isinstance(b, Equivocate):
                for p in b.partition:
                    in_range(p, "partition member")
            if isinstance(b, SkipSeq) and (b.from_sn < 1 or b.gap < 1):
                raise ScenarioError("skip_seq needs from_sn >= 1 and gap >= 1")
        if len(crashed) > self.t:
            raise ScenarioError(f"{len(crashed)} crashes exceed t={self.t}")
        byz = set(self.byzantine)
        if len(byz) > self.t:
            raise ScenarioError(f"{len(byz)} Byzantine nodes exceed t={self.t}")

        for w in self.workload:
            in_range(w.node, "workload node")
            if w.at < 0:
                raise ScenarioError("workload tick must be non-negative")
            if w.node in byz:
                raise ScenarioError(f"node {w.node} is Byzantine; its behaviour comes from faults")
            r = w.request
            if isinstance(r, TransferRequest):
                in_range(r.dest, "transfer dest")
                if r.dest == w.node:
                    raise ScenarioError("self-transfer in workload")
                if r.amount <= 0:
                    raise ScenarioError("transfer amount must be positive")
            else:
                in_range(r.j, "balance account")

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        return {
            "n": self.n,
            "t": self.t,
            "model": self.model.value,
            "init": list(self.init),
            "window_k": self.window_k,
            "seed": self.seed,
            "max_delay": self.max_delay,
            "workload": [_workload_to_dict(w) for w in self.workload],
            "faults": [_fault_to_dict(f) for f in self.faults],
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        _exact_keys(d, required={"n", "t", "model", "init"}, allowed=allowed, where="scenario")
        for key in ("n", "t", "window_k", "seed", "max_delay"):
            if key in d and (not isinstance(d[key], int) or isinstance(d[key], bool)):
                raise ScenarioError(f"{key} must be an integer, got {d[key]!r}")
        try:
            kw = dict(d)
            kw["workload"] = [_workload_from_dict(w) for w in d.get("workload", [])]
            kw["faults"] = [_fault_from_dict(f) for f in d.get("faults", [])]
            kw["init"] = list(d["init"])
            return cls(**kw)
        except ScenarioError:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from None

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    def with_seed(self, seed):
        d = self.to_dict()
        d["seed"] = seed
        return Scenario.from_dict(d)


def load_scenario(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    return Scenario.from_dict(data)


def _exact_keys(d, required, allowed, where):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where} must be an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ScenarioError(f"unknown field(s) in {where}: {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ScenarioError(f"missing field(s) in {where}: {sorted(missing)}")


def _workload_to_dict(w):
    r = w.request
    if isinstance(r, TransferRequest):
        return {"at": w.at, "node": w.node, "transfer": {"dest": r.dest, "amount": r.amount}}
    return {"at": w.at, "node": w.node, "balance": {"j": r.j}}


def _workload_from_dict(d):
    _exact_keys(d, {"at", "node"}, {"at", "node", "transfer", "balance"}, "workload entry")
    if ("transfer" in d) == ("balance" in d):
        raise ScenarioError("workload entry needs exactly one of transfer / balance")
    if "transfer" in d:
        body = d["transfer"]
        _exact_keys(body, {"dest", "amount"}, {"dest", "amount"}, "transfer")
        req = TransferRequest(body["dest"], body["amount"])
    else:
        body = d["balance"]
        _exact_keys(body, {"j"}, {"j"}, "balance")
        req = BalanceRequest(body["j"])
    return WorkloadItem(d["at"], d["node"], req)


def _fault_to_dict(f):
    b = f.behavior
    body = {}
    for fld in fields(b):
        v = getattr(b, fld.name)
        if isinstance(v, TransferPayload):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = list(v)
        body[fld.name] = v
    return {"node": f.node, BEHAVIOUR_NAMES[type(b)]: body}


def _fault_from_dict(d):
    if not isinstance(d, dict):
        raise ScenarioError("fault entry must be an object")
    kinds = [k for k in d if k != "node"]
    if "node" not in d or len(kinds) != 1 or kinds[0] not in BEHAVIOURS:
        raise ScenarioError(f"fault entry needs node and exactly one of {sorted(BEHAVIOURS)}: {d}")
    cls = BEHAVIOURS[kinds[0]]
    body = d[kinds[0]]
    names = [f.name for f in fields(cls)]
    required = {f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING}
    _exact_keys(body, required, names, kinds[0])
    kw = dict(body)
    for key in ("payload_a", "payload_b"):
        if key in kw:
            try:
                kw[key] = TransferPayload.from_dict(kw[key])
            except (ValueError, TypeError, AttributeError) as exc:
                raise ScenarioError(f"{key}: {exc}") from None
    if "partition" in kw:
        kw["partition"] = tuple(kw["partition"])
    return FaultSpec(d["node"], cls(**kw))


# -- workload generators --------------------------------------------------


def random_workload(rng, n, nodes, transfers, horizon, init, balance_reads=0):
    items = []
    for _ in range(transfers):
        src = rng.choice(nodes)
        dest = rng.choice([j for j in range(1, n + 1) if j != src])
        cap = max(1, init[src - 1] // 3)
        items.append(WorkloadItem(rng.randrange(horizon), src, TransferRequest(dest, rng.randint(1, cap))))
    for _ in range(balance_reads):
        items.append(WorkloadItem(rng.randrange(horizon), rng.choice(nodes), BalanceRequest(rng.randint(1, n))))
    items.sort(key=lambda w: w.at)
    return items


def random_crash_scenario(n, t, seed, transfers=50, window_k=1, max_delay=10, horizon=100, balance_reads=10):
    """A crash-model scenario with between 1 and t scripted crashes."""
    rng = random.Random(seed)
    init = [rng.randint(5, 40) for _ in range(n)]
    workload = random_workload(rng, n, list(range(1, n + 1)), transfers, horizon, init, balance_reads)
    crashing = rng.sample(range(1, n + 1), rng.randint(1, t))
    faults = []
    for node in sorted(crashing):
        sends = rng.choice([None, 0, rng.randint(1, n), n])
        faults.append(FaultSpec(node, CrashAtTick(rng.randrange(horizon + 20), sends)))
    return Scenario(n, t, Model.CRASH, init, window_k, seed, max_delay, workload, faults)


def random_byzantine_behaviour(rng, node, n, init):
    others = [j for j in range(1, n + 1) if j != node]
    kind = rng.choice(["equivocate", "overspend", "skip_seq", "silent"])
    at = rng.randrange(50)
    funds = max(1, init[node - 1])
    if kind == "equivocate":
        part = tuple(sorted(rng.sample(others, rng.randint(1, len(others) - 1))))
        a = TransferPayload(rng.choice(others), rng.randint(1, funds))
        b = TransferPayload(rng.choice(others), rng.randint(1, funds))
        return Equivocate(1, a, b, part, at, rng.random() < 0.5)
    if kind == "overspend":
        return Overspend(1, rng.choice(others), funds + rng.randint(1, 10**6), at)
    if kind == "skip_seq":
        return SkipSeq(rng.randint(1, 4), rng.randint(1, 3), rng.choice(others), rng.randint(1, max(1, funds // 4)), at)
    return Silent()


def random_byzantine_scenario(n, t, seed, transfers=50, max_delay=10, horizon=100, balance_reads=10):
    """A Byzantine-model scenario with between 1 and t scripted Byzantine nodes."""
    rng = random.Random(seed)
    init = [rng.randint(5, 40) for _ in range(n)]
    byz = sorted(rng.sample(range(1, n + 1), rng.randint(1, t)))
    correct = [i for i in range(1, n + 1) if i not in byz]
    workload = random_workload(rng, n, correct, transfers, horizon, init, balance_reads)
    faults = [FaultSpec(b, random_byzantine_behaviour(rng, b, n, init)) for b in byz]
    return Scenario(n, t, Model.BYZANTINE, init, 1, seed, max_delay, workload, faults)
