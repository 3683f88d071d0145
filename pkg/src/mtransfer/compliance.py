"""Trace checker for money-transfer executions.

For every correct process ``i`` the serialization ``S_i`` is rebuilt from
the trace: ``i``'s balance reads plus every transfer ``i`` processed, in
``i``'s local order.  The checks below then verify that each ``S_i`` is a
valid, money-transfer-compliant serialization, that crashed processes saw
prefixes of what survivors saw, that all correct processes agree on what
each Byzantine process did, and that the broadcast layer kept its contract.
Liveness rules only apply to quiescent traces.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field

RULES = (
    "mt-compliance",
    "process-order",
    "crash-prefix",
    "byzantine-agreement",
    "broadcast-contract",
    "liveness",
)


@dataclass(frozen=True)
class Trf:
    j: int  # sender
    sn: int
    k: int  # receiver
    v: int
    ref: int | None = None  # index of the source event in the trace


@dataclass(frozen=True)
class Blc:
    j: int
    v: int
    ref: int | None = None


@dataclass
class Serialization:
    owner: int
    events: list = field(default_factory=list)


@dataclass(frozen=True)
class MockHistory:
    sender: int
    transfers: tuple  # ((sn, dest, amount), ...)


@dataclass(frozen=True)
class Violation:
    rule: str
    node: int | None
    index: int | None
    detail: str


@dataclass
class Verdict:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, rule, node, index, detail):
        self.violations.append(Violation(rule, node, index, detail))

    def extend(self, other):
        self.violations.extend(other.violations)
        return self

    def rules(self):
        return {v.rule for v in self.violations}

    def to_dict(self):
        return {"ok": self.ok, "violations": [asdict(v) for v in self.violations]}


def _by_node(trace):
    groups = defaultdict(list)
    for idx, e in enumerate(trace.events):
        if e.kind != "Send":
            groups[e.node].append((idx, e))
    return groups


def _processed_from(local, j):
    return [(e.sn, e.payload.dest, e.payload.amount) for _, e in local if e.kind == "Processed" and e.origin == j]


def build_serialization(trace, i, _groups=None):
    if not 1 <= i <= trace.n:
        raise ValueError(f"unknown process {i}")
    groups = _by_node(trace) if _groups is None else _groups
    s = Serialization(i)
    for idx, e in groups.get(i, []):
        if e.kind == "BalanceRead":
            s.events.append(Blc(e.j, e.value, idx))
        elif e.kind == "Processed":
            s.events.append(Trf(e.origin, e.sn, e.payload.dest, e.payload.amount, idx))
    return s


def acc(j, prefix, init):
    plus = sum(op.v for op in prefix if isinstance(op, Trf) and op.k == j)
    minus = sum(op.v for op in prefix if isinstance(op, Trf) and op.j == j)
    return init[j - 1] + plus - minus


def check_mt_compliance(s, init):
    verdict = Verdict()
    # running plus/minus per account; equal to acc() over the prefix
    plus = defaultdict(int)
    minus = defaultdict(int)
    for pos, op in enumerate(s.events):
        if isinstance(op, Trf):
            have = init[op.j - 1] + plus[op.j] - minus[op.j]
            if op.v > have:
                verdict.add("mt-compliance", s.owner, op.ref, f"position {pos}: trf_{op.j}^{op.sn}({op.k},{op.v}) exceeds acc={have}")
            minus[op.j] += op.v
            plus[op.k] += op.v
        else:
            have = init[op.j - 1] + plus[op.j] - minus[op.j]
            if op.v != have:
                verdict.add("mt-compliance", s.owner, op.ref, f"position {pos}: blc({op.j})/{op.v} but acc={have}")
    return verdict


def check_process_order(s, trace, weakened=False, _groups=None):
    """Per-sender order in ``S_i``, plus the owner's own invocation order.

    In weakened mode transfers of other senders may appear in any order,
    but each at most once.
    """
    verdict = Verdict()
    last = {}
    seen = defaultdict(set)
    for op in s.events:
        if not isinstance(op, Trf):
            continue
        if op.sn in seen[op.j]:
            verdict.add("process-order", s.owner, op.ref, f"sender {op.j} sn={op.sn} appears twice")
        seen[op.j].add(op.sn)
        strict = not weakened or op.j == s.owner
        if strict and op.j in last and op.sn <= last[op.j]:
            verdict.add("process-order", s.owner, op.ref, f"sender {op.j}: sn {op.sn} after sn {last[op.j]}")
        last[op.j] = max(op.sn, last.get(op.j, 0))

    groups = _by_node(trace) if _groups is None else _groups
    local = groups.get(s.owner, [])
    invoked = []
    for idx, e in local:
        if e.kind == "Initiated":
            invoked.append(("T", e.sn))
        elif e.kind == "BalanceRead":
            invoked.append(("B", idx))
    observed = []
    for op in s.events:
        if isinstance(op, Blc):
            observed.append(("B", op.ref))
        elif op.j == s.owner:
            observed.append(("T", op.sn))
    present = set(observed)
    expected = [x for x in invoked if x in present]
    if observed != expected:
        verdict.add("process-order", s.owner, None, f"own operations out of invocation order: {observed} vs {expected}")
    return verdict


def _is_prefix(a, b):
    return len(a) <= len(b) and b[: len(a)] == a


def check_crash_prefix(trace, weakened=None, _groups=None):
    verdict = Verdict()
    weakened = trace.window_k > 1 if weakened is None else weakened
    groups = _by_node(trace) if _groups is None else _groups
    survivors = trace.never_crashed
    correct = set(trace.correct)
    for i in trace.crashed:
        local = groups.get(i, [])
        for j in range(1, trace.n + 1):
            if j == i:
                continue
            mine = _processed_from(local, j)
            issued = [(e.sn, e.payload.dest, e.payload.amount) for _, e in groups.get(j, []) if e.kind == "Initiated"]
            refs = [(j, "issued", issued)] if j in correct else []
            refs += [(c, "processed", _processed_from(groups.get(c, []), j)) for c in survivors]
            for who, what, other in refs:
                if weakened:
                    bad = not set(mine) <= set(other) if (trace.quiescent or what == "issued") else False
                elif what == "issued" or trace.quiescent:
                    bad = not _is_prefix(mine, other)
                else:
                    bad = not (_is_prefix(mine, other) or _is_prefix(other, mine))
                if bad:
                    verdict.add(
                        "crash-prefix", i, None,
                        f"transfers of {j} processed by crashed {i} {[x[0] for x in mine]} "
                        f"not a prefix of those {what} by {who} {[x[0] for x in other]}",
                    )
    return verdict


def check_byzantine_agreement(trace, weakened=None, _groups=None, recheck=True):
    """Same per-sender processed sequence from each Byzantine node everywhere.

    Returns the verdict and the common sequences, which serve as the
    Byzantine nodes' mock local histories.
    """
    verdict = Verdict()
    weakened = trace.window_k > 1 if weakened is None else weakened
    groups = _by_node(trace) if _groups is None else _groups
    correct = trace.never_crashed
    mocks = []
    for j in trace.byzantine:
        seqs = {i: _processed_from(groups.get(i, []), j) for i in correct}
        ref = max(seqs.values(), key=len) if seqs else []
        for i, seq in seqs.items():
            if weakened:
                bad = set(seq) != set(ref) if trace.quiescent else not set(seq) <= set(ref)
            elif trace.quiescent:
                bad = seq != ref
            else:
                bad = not _is_prefix(seq, ref)
            if bad:
                verdict.add("byzantine-agreement", i, None, f"transfers from Byzantine {j}: {seq} differ from {ref}")
        mocks.append(MockHistory(j, tuple(ref)))
    if recheck and verdict.ok:
        for i in correct:
            verdict.extend(check_mt_compliance(build_serialization(trace, i, groups), trace.init))
    return verdict, mocks


def check_broadcast_contract(trace):
    verdict = Verdict()
    byz = set(trace.byzantine)
    survivors = set(trace.never_crashed)
    issued = {(e.node, e.sn): e.payload for e in trace.events if e.kind == "Initiated" and e.node not in byz}
    delivered = defaultdict(dict)  # node -> (origin, sn) -> payload
    for idx, e in enumerate(trace.events):
        if e.node in byz:
            continue
        if e.kind == "Delivery":
            key = (e.origin, e.sn)
            if key in delivered[e.node]:
                verdict.add("broadcast-contract", e.node, idx, f"integrity: second delivery of {key}")
                continue
            delivered[e.node][key] = e.payload
            if e.origin not in byz and issued.get(key) != e.payload:
                verdict.add("broadcast-contract", e.node, idx, f"validity: {key} {e.payload} was never broadcast")
    if not trace.quiescent:
        return verdict
    for (origin, sn), payload in issued.items():
        if origin in survivors and delivered[origin].get((origin, sn)) != payload:
            verdict.add("broadcast-contract", origin, None, f"termination-1: own broadcast sn={sn} not delivered")
    union = {}
    for node, got in sorted(delivered.items()):
        for key, payload in got.items():
            if key in union and union[key][1] != payload:
                verdict.add("broadcast-contract", node, None, f"agreement: {key} delivered as {payload} and {union[key][1]}")
            union.setdefault(key, (node, payload))
    for key, (first, payload) in union.items():
        for c in sorted(survivors):
            if delivered[c].get(key) != payload:
                verdict.add("broadcast-contract", c, None, f"termination-2: {key} delivered by {first} but not by {c}")
    return verdict


def check_liveness(trace, _groups=None):
    """Finite rendering of termination: at quiescence nothing a correct node did is left unprocessed."""
    verdict = Verdict()
    if not trace.quiescent:
        return verdict
    groups = _by_node(trace) if _groups is None else _groups
    survivors = trace.never_crashed
    processed = {i: {(e.origin, e.sn) for _, e in groups.get(i, []) if e.kind == "Processed"} for i in survivors}
    workload = defaultdict(int)
    for w in trace.scenario.get("workload", []):
        workload[w["node"]] += 1
    everywhere = set()
    for i in trace.correct:
        for _, e in groups.get(i, []):
            if e.kind == "Processed" or (e.kind == "Committed" and i in survivors):
                everywhere.add((e.origin if e.kind == "Processed" else i, e.sn))
    for i in survivors:
        local = groups.get(i, [])
        initiated = {e.sn for _, e in local if e.kind == "Initiated"}
        committed = {e.sn for _, e in local if e.kind == "Committed"}
        for sn in sorted(initiated - committed):
            verdict.add("liveness", i, None, f"own transfer sn={sn} never committed")
        outcomes = sum(1 for _, e in local if e.kind in ("Initiated", "Aborted", "BalanceRead"))
        if outcomes != workload[i]:
            verdict.add("liveness", i, None, f"{outcomes} of {workload[i]} requested operations completed")
        for key in sorted(everywhere - processed[i]):
            verdict.add("liveness", i, None, f"transfer {key} processed elsewhere but not here")
    return verdict


def check_trace(trace, weakened=None):
    """Run every applicable rule over ``trace`` and merge the verdicts."""
    weakened = trace.window_k > 1 if weakened is None else weakened
    groups = _by_node(trace)
    verdict = Verdict()
    for i in trace.correct:
        s = build_serialization(trace, i, groups)
        verdict.extend(check_mt_compliance(s, trace.init))
        verdict.extend(check_process_order(s, trace, weakened, groups))
    if trace.model == "crash":
        verdict.extend(check_crash_prefix(trace, weakened, groups))
    else:
        verdict.extend(check_byzantine_agreement(trace, weakened, groups, recheck=False)[0])
    verdict.extend(check_broadcast_contract(trace))
    verdict.extend(check_liveness(trace, groups))
    return verdict


def replay_accounts(s, init):
    account = list(init)
    for op in s.events:
        if isinstance(op, Trf):
            account[op.j - 1] -= op.v
            account[op.k - 1] += op.v
    return account


def summarize(trace, verdict=None):
    """Summary statistics recomputable from the trace alone."""
    verdict = check_trace(trace) if verdict is None else verdict
    kinds = defaultdict(int)
    for e in trace.events:
        if e.node not in trace.byzantine:
            kinds[e.kind] += 1
    balances = {
        str(i): replay_accounts(build_serialization(trace, i), trace.init) for i in trace.never_crashed
    }
    return {
        "committed": kinds["Committed"],
        "aborted": kinds["Aborted"],
        "initiated": kinds["Initiated"],
        "messages": kinds["Send"],
        "final_balances": balances,
        "quiescent": trace.quiescent,
        "violations": len(verdict.violations),
    }


def verdict_json(trace, verdict):
    body = verdict.to_dict()
    body["summary"] = summarize(trace, verdict)
    return json.dumps(body, indent=2)


class StepMonitor:
    """Incremental form of the safety rules, fed one trace event at a time.

    Everything it remembers is an aggregate (running sums, last sequence
    numbers, delivered and issued sets), so its verdict on a step depends
    only on what happened before, not on the order it happened in.  The
    exhaustive explorer relies on this to check every transition of a
    state graph whose states are shared by many paths.
    """

    def __init__(self, n, init, byzantine=(), weakened=False):
        self.n = n
        self.init = list(init)
        self.byzantine = frozenset(byzantine)
        self.weakened = weakened
        self.plus = defaultdict(int)  # (node, account) -> credited
        self.minus = defaultdict(int)
        self.done = defaultdict(set)  # (node, sender) -> processed sns
        self.last = {}  # (node, sender) -> highest processed sn
        self.delivered = {}  # (node, origin, sn) -> payload
        self.issued = {}  # (origin, sn) -> payload
        self.agreed = {}  # (origin, sn) -> first payload delivered by any correct node
        self.outstanding = {}  # node -> own sn awaiting processing
        self.violations = []

    def clone(self):
        other = StepMonitor.__new__(StepMonitor)
        other.n, other.init, other.byzantine, other.weakened = self.n, self.init, self.byzantine, self.weakened
        other.plus = defaultdict(int, self.plus)
        other.minus = defaultdict(int, self.minus)
        other.done = defaultdict(set, {k: set(v) for k, v in self.done.items()})
        other.last = dict(self.last)
        other.delivered = dict(self.delivered)
        other.issued = dict(self.issued)
        other.agreed = dict(self.agreed)
        other.outstanding = dict(self.outstanding)
        other.violations = []
        return other

    def _flag(self, rule, node, detail):
        self.violations.append(Violation(rule, node, None, detail))

    def _acc(self, node, j):
        return self.init[j - 1] + self.plus[(node, j)] - self.minus[(node, j)]

    def feed(self, e):
        i = e.node
        if i in self.byzantine:
            return
        kind = e.kind
        if kind in ("Initiated", "BalanceRead") and self.outstanding.get(i) is not None:
            self._flag("process-order", i, f"{kind} invoked while sn={self.outstanding[i]} pending")
        if kind == "Initiated":
            self.issued[(i, e.sn)] = e.payload
            self.outstanding[i] = e.sn
        elif kind == "BalanceRead":
            if e.value != self._acc(i, e.j):
                self._flag("mt-compliance", i, f"blc({e.j})/{e.value} but acc={self._acc(i, e.j)}")
        elif kind == "Delivery":
            key = (i, e.origin, e.sn)
            if key in self.delivered:
                self._flag("broadcast-contract", i, f"integrity: second delivery of {key[1:]}")
            self.delivered[key] = e.payload
            if e.origin not in self.byzantine and self.issued.get((e.origin, e.sn)) != e.payload:
                self._flag("broadcast-contract", i, f"validity: {key[1:]} never broadcast")
            first = self.agreed.setdefault(key[1:], e.payload)
            if first != e.payload:
                self._flag("broadcast-contract", i, f"agreement: {key[1:]} delivered as {e.payload} and {first}")
        elif kind == "Processed":
            j, v, k = e.origin, e.payload.amount, e.payload.dest
            if v > self._acc(i, j):
                self._flag("mt-compliance", i, f"trf_{j}^{e.sn}({k},{v}) exceeds acc={self._acc(i, j)}")
            done = self.done[(i, j)]
            if e.sn in done:
                self._flag("process-order", i, f"sender {j} sn={e.sn} processed twice")
            strict = not self.weakened or j == i
            if strict and e.sn <= self.last.get((i, j), 0):
                self._flag("process-order", i, f"sender {j}: sn {e.sn} after {self.last[(i, j)]}")
            done.add(e.sn)
            self.last[(i, j)] = max(e.sn, self.last.get((i, j), 0))
            self.minus[(i, j)] += v
            self.plus[(i, k)] += v
            if j == i and self.outstanding.get(i) == e.sn:
                self.outstanding[i] = None
