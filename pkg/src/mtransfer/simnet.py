"""Deterministic discrete-event simulation of a complete asynchronous network.

Every point-to-point send between live nodes arrives after a delay drawn
from a seeded generator in ``[1, max_delay]``; nothing is lost, duplicated
or corrupted.  Crashed nodes stop acting and drop their arrivals.
Byzantine nodes do not run the protocol at all: their fault scripts compile
to raw protocol messages sent under their own identity.

:func:`run` samples one schedule.  :func:`explore` enumerates every
reachable state of a tiny scenario instead.
"""

from __future__ import annotations

import heapq
import os
import random
from collections import Counter
from dataclasses import dataclass, field

from .broadcast import Message, Model, broadcast_instance
from .compliance import StepMonitor
from .core import Aborted, BalanceRead, Committed, Initiated, Node, Processed, TransferPayload, new_node
from .scenario import BalanceRequest, Equivocate, Overspend, Scenario, Silent, SkipSeq
from .trace import Trace, TraceEvent

DEFAULT_MAX_STEPS = 5_000_000


class SimulationError(RuntimeError):
    pass


def max_steps_from_env(default=DEFAULT_MAX_STEPS):
    raw = os.environ.get("MT_MAX_STEPS")
    return int(raw) if raw else default


def byzantine_step(behaviour, node, n):
    """Raw messages emitted by a Byzantine script, as ``(dest, Message)``."""
    everyone = range(1, n + 1)
    if isinstance(behaviour, Silent):
        return []
    if isinstance(behaviour, Overspend):
        payload = TransferPayload(behaviour.dest, behaviour.amount)
        return [(d, Message("INIT", node, behaviour.sn, payload)) for d in everyone]
    if isinstance(behaviour, SkipSeq):
        out = []
        payload = TransferPayload(behaviour.dest, behaviour.amount)
        sns = list(range(1, behaviour.from_sn)) + [behaviour.from_sn + behaviour.gap]
        for sn in sns:
            out.extend((d, Message("INIT", node, sn, payload)) for d in everyone)
        return out
    if isinstance(behaviour, Equivocate):
        part = set(behaviour.partition)
        out = []
        for d in everyone:
            m = behaviour.payload_a if d in part else behaviour.payload_b
            out.append((d, Message("INIT", node, behaviour.sn, m)))
            if behaviour.amplify:
                out.append((d, Message("ECHO", node, behaviour.sn, m)))
                out.append((d, Message("READY", node, behaviour.sn, m)))
        return out
    raise TypeError(f"not a Byzantine behaviour: {behaviour!r}")


class Replica:
    """A correct process: money-transfer node, broadcast endpoint, operation queue."""

    def __init__(self, node, endpoint, sink):
        self.node = node
        self.endpoint = endpoint
        self.ops = []
        self.op_index = 0
        self.sink = sink
        self.deliveries = []
        self._key = None

    @property
    def id(self):
        return self.node.id

    def idle(self):
        return self.node.in_flight is None

    def has_next(self):
        return self.op_index < len(self.ops)

    def _emit(self, tick, kind, **kw):
        self.sink.append(TraceEvent(tick, self.id, kind, **kw))

    def _record(self, tick, events):
        for ev in events:
            if isinstance(ev, Processed):
                self._emit(tick, "Processed", origin=ev.origin, sn=ev.sn, payload=ev.payload)
            elif isinstance(ev, Committed):
                self._emit(tick, "Committed", sn=ev.sn)

    def issue_next(self, tick):
        """Run the next queued operation; returns the sends it causes."""
        req = self.ops[self.op_index]
        self.op_index += 1
        self._key = None
        if isinstance(req, BalanceRequest):
            value = self.node.balance(req.j)
            self._emit(tick, "BalanceRead", j=req.j, value=value)
            return []
        outcome, request = self.node.initiate_transfer(req.dest, req.amount)
        if isinstance(outcome, Aborted):
            self._emit(tick, "Aborted", payload=outcome.payload)
            return []
        self._emit(tick, "Initiated", sn=outcome.sn, payload=outcome.payload)
        return self.endpoint.broadcast(request.sn, request.payload)

    def pump(self, tick):
        sends = []
        while self.idle() and self.has_next():
            sends.extend(self.issue_next(tick))
        return sends

    def on_message(self, sender, msg, tick):
        sends, delivery = self.endpoint.receive(sender, msg)
        self._key = None
        if delivery is not None:
            self.deliveries.append(delivery)
            self._emit(tick, "Delivery", origin=delivery.origin, sn=delivery.sn, payload=delivery.payload)
            self._record(tick, self.node.handle_delivery(delivery.origin, delivery.sn, delivery.payload))
        return sends

    def check_invariants(self, total):
        acc = self.node.account
        if sum(acc) != total:
            raise SimulationError(f"conservation broken at node {self.id}: {acc}")
        if min(acc) < 0:
            raise SimulationError(f"negative balance at node {self.id}: {acc}")

    def clone(self, sink):
        other = Replica(self.node.clone(), self.endpoint.clone(), sink)
        other.ops = self.ops
        other.op_index = self.op_index
        other.deliveries = list(self.deliveries)
        return other

    def state_key(self):
        if self._key is None:
            self._key = (
                self.node.state_key(),
                self.endpoint.state_key(),
                self.op_index,
                frozenset(self.deliveries),
            )
        return self._key


def _make_replicas(scenario, node_cls, sink_factory):
    byz = set(scenario.byzantine)
    replicas = {}
    for i in range(1, scenario.n + 1):
        if i in byz:
            continue
        node = new_node(i, scenario.init, scenario.window_k, cls=node_cls)
        endpoint = broadcast_instance(scenario.model, i, scenario.n, scenario.t)
        replicas[i] = Replica(node, endpoint, sink_factory())
    return replicas


# event phases within one tick
_CRASH_EARLY, _NORMAL, _CRASH_LATE = 0, 1, 2


@dataclass(order=True)
class SimEvent:
    time: int
    phase: int
    seqno: int
    kind: str = field(compare=False)
    data: tuple = field(compare=False)


class Simulation:
    """Seeded event loop over one scenario.

    ``delay_fn(index, sender, dest, msg)`` may return a delay override for
    the ``index``-th point-to-point send (``None`` keeps the random draw).
    """

    def __init__(self, scenario, node_cls=Node, max_steps=None, check_invariants=True, delay_fn=None):
        self.scenario = scenario
        self.n = scenario.n
        self.rng = random.Random(scenario.seed)
        self.max_steps = max_steps_from_env() if max_steps is None else max_steps
        self.check = check_invariants
        self.delay_fn = delay_fn
        self.events = []
        self.replicas = _make_replicas(scenario, node_cls, lambda: self.events)
        self.byzantine = set(scenario.byzantine)
        self.total = sum(scenario.init)
        self.queue = []
        self._seq = 0
        self._sends = 0
        self.now = 0
        self.dead = set()
        self.crash_budget = {}
        self.crash_ticks = {}
        self.steps = 0

        for w in scenario.workload:
            self._push(w.at, _NORMAL, "WorkloadAction", (w.node, w.request))
        for f in scenario.faults:
            if f.is_crash:
                self.inject_crash(f.node, f.behavior.tick, f.behavior.sends_completed)
            else:
                self._push(getattr(f.behavior, "at", 0), _NORMAL, "ByzantineAction", (f.node, f.behavior))

    def _push(self, time, phase, kind, data):
        self._seq += 1
        heapq.heappush(self.queue, SimEvent(time, phase, self._seq, kind, data))

    def inject_crash(self, node, tick, sends_completed=None):
        if self.scenario.model is not Model.CRASH:
            raise SimulationError("crash injection requires the crash model")
        if node in self.crash_ticks:
            raise SimulationError(f"node {node} already scheduled to crash")
        self.crash_ticks[node] = tick
        if sends_completed is None:
            self._push(tick, _CRASH_EARLY, "CrashAt", (node,))
        else:
            self.crash_budget[node] = (tick, sends_completed)
            self._push(tick, _CRASH_LATE, "CrashAt", (node,))

    def _send_all(self, sender, sends):
        plan = self.crash_budget.get(sender)
        for dest, msg in sends:
            if sender in self.dead:
                return
            if plan is not None and plan[0] == self.now:
                if plan[1] <= 0:
                    continue
                plan = (plan[0], plan[1] - 1)
                self.crash_budget[sender] = plan
            self._sends += 1
            self.events.append(TraceEvent(self.now, sender, "Send", to=dest, msg=msg))
            delay = None
            if self.delay_fn is not None:
                delay = self.delay_fn(self._sends, sender, dest, msg)
            if delay is None:
                delay = self.rng.randint(1, self.scenario.max_delay)
            self._push(self.now + delay, _NORMAL, "MessageArrival", (sender, dest, msg))

    def step(self, ev):
        self.now = ev.time
        kind = ev.kind
        if kind == "MessageArrival":
            sender, dest, msg = ev.data
            rep = self.replicas.get(dest)
            if rep is None or dest in self.dead:
                return
            sends = rep.on_message(sender, msg, self.now)
            sends.extend(rep.pump(self.now))
            self._send_all(dest, sends)
            if self.check:
                rep.check_invariants(self.total)
        elif kind == "WorkloadAction":
            node, request = ev.data
            if node in self.dead:
                return
            rep = self.replicas[node]
            rep.ops.append(request)
            self._send_all(node, rep.pump(self.now))
        elif kind == "ByzantineAction":
            node, behaviour = ev.data
            self._send_all(node, byzantine_step(behaviour, node, self.n))
        elif kind == "CrashAt":
            (node,) = ev.data
            self.dead.add(node)
            self.events.append(TraceEvent(self.now, node, "Crashed"))
        else:
            raise SimulationError(f"unknown event kind {kind}")

    def run(self):
        while self.queue:
            if self.steps >= self.max_steps:
                return self._trace(quiescent=False)
            self.step(heapq.heappop(self.queue))
            self.steps += 1
        return self._trace(quiescent=True)

    def _trace(self, quiescent):
        return Trace(self.scenario.to_dict(), self.events, quiescent, self.steps)


def run(scenario, node_cls=Node, max_steps=None, check_invariants=True, delay_fn=None):
    """Run ``scenario`` to quiescence (or ``max_steps``) and return its trace."""
    return Simulation(scenario, node_cls, max_steps, check_invariants, delay_fn).run()


# -- exhaustive exploration -------------------------------------------------

MAX_CORRECT_NODES = 3
MAX_BROADCASTS = 8
DEFAULT_MAX_STATES = 1_000_000


class EnumerationBoundExceeded(SimulationError):
    pass


@dataclass
class Exploration:
    states: int
    terminals: list  # one representative Trace per distinct terminal state
    final_accounts: list  # per terminal: {node: account tuple}
    transitions: int = 0
    violations: list = field(default_factory=list)  # from the per-transition monitor


class _World:
    def __init__(self, replicas, flight):
        self.replicas = replicas
        self.flight = flight  # Counter of (sender, dest, msg)

    def clone_for(self, actor):
        """Copy sharing every replica except ``actor``, which is the only one a move mutates."""
        reps = dict(self.replicas)
        reps[actor] = reps[actor].clone(list(reps[actor].sink))
        return _World(reps, Counter(self.flight))

    def key(self):
        return (
            tuple(r.state_key() for _, r in sorted(self.replicas.items())),
            frozenset(self.flight.items()),
        )

    def add(self, sender, sends):
        for dest, msg in sends:
            rep = self.replicas.get(dest)
            if rep is None or rep.endpoint.absorbs(sender, msg):
                continue
            if rep.endpoint.collapse_senders:
                self.flight[(0, dest, msg)] = 1
            else:
                self.flight[(sender, dest, msg)] += 1

    def purge(self, dest):
        endpoint = self.replicas[dest].endpoint
        dead = [p for p in self.flight if p[1] == dest and endpoint.absorbs(p[0], p[2])]
        for p in dead:
            del self.flight[p]

    def moves(self):
        out = [("issue", i) for i, r in sorted(self.replicas.items()) if r.idle() and r.has_next()]
        out.extend(("arrive", pkt) for pkt in sorted(self.flight))
        return out

    def apply(self, move, depth):
        kind, arg = move
        if kind == "issue":
            self.add(arg, self.replicas[arg].issue_next(depth))
        else:
            sender, dest, msg = arg
            self.flight[arg] -= 1
            if not self.flight[arg]:
                del self.flight[arg]
            self.add(dest, self.replicas[dest].on_message(sender, msg, depth))
            self.purge(dest)


def explore(scenario, node_cls=Node, max_states=DEFAULT_MAX_STATES):
    """Enumerate every reachable state of a tiny scenario.

    Workload ticks are ignored: each correct node issues its operations in
    order, whenever idle, interleaved in every possible way with message
    arrivals.  Byzantine scripts are all in flight from the start.  Crash
    faults are not explored.

    States are protocol states only, so many paths share one state.  Every
    transition of the state graph is checked by a :class:`StepMonitor`, and
    each distinct terminal state yields one representative trace for the
    full checker.
    """
    if any(f.is_crash for f in scenario.faults):
        raise EnumerationBoundExceeded("exhaustive mode does not explore crash faults")
    byz = set(scenario.byzantine)
    correct = [i for i in range(1, scenario.n + 1) if i not in byz]
    transfers = sum(1 for w in scenario.workload if not isinstance(w.request, BalanceRequest))
    byz_slots = sum(len({m.sn for _, m in byzantine_step(f.behavior, f.node, scenario.n)}) for f in scenario.faults)
    if len(correct) > MAX_CORRECT_NODES:
        raise EnumerationBoundExceeded(f"{len(correct)} correct nodes > {MAX_CORRECT_NODES}")
    if transfers + byz_slots > MAX_BROADCASTS:
        raise EnumerationBoundExceeded(f"{transfers + byz_slots} broadcasts > {MAX_BROADCASTS}")

    replicas = _make_replicas(scenario, node_cls, list)
    for w in sorted(scenario.workload, key=lambda w: w.at):
        replicas[w.node].ops.append(w.request)
    world = _World(replicas, Counter())
    for f in scenario.faults:
        world.add(f.node, byzantine_step(f.behavior, f.node, scenario.n))

    total = sum(scenario.init)
    monitor = StepMonitor(scenario.n, scenario.init, byz, weakened=scenario.window_k > 1)
    seen = {world.key()}
    stack = [(world, monitor, 0)]
    result = Exploration(0, [], [])
    while stack:
        w, mon, depth = stack.pop()
        moves = w.moves()
        if not moves:
            events = [e for _, r in sorted(w.replicas.items()) for e in r.sink]
            result.terminals.append(Trace(scenario.to_dict(), events, True, depth))
            result.final_accounts.append({i: tuple(r.node.account) for i, r in w.replicas.items()})
            continue
        for move in moves:
            actor = move[1] if move[0] == "issue" else move[1][1]
            nxt = w.clone_for(actor)
            before = len(nxt.replicas[actor].sink)
            nxt.apply(move, depth + 1)
            nxt.replicas[actor].check_invariants(total)
            step_mon = mon.clone()
            for e in nxt.replicas[actor].sink[before:]:
                step_mon.feed(e)
            result.transitions += 1
            result.violations.extend(step_mon.violations)
            key = nxt.key()
            if key in seen:
                continue
            seen.add(key)
            if len(seen) > max_states:
                raise EnumerationBoundExceeded(f"more than {max_states} states")
            stack.append((nxt, step_mon, depth + 1))
    result.states = len(seen)
    return result
