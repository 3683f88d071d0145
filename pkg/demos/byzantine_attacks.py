"""
Equivocation and double spending against the Byzantine broadcast
================================================================

Node 4 is hostile. First it tells half the system one thing and the other
half another; then it announces a transfer it cannot pay for.
"""

from mtransfer import Scenario, check_trace, explore, run
from mtransfer.core import TransferPayload
from mtransfer.scenario import Equivocate, FaultSpec, Overspend

# every arrival order of the equivocation, explored exhaustively
for amplify in (False, True):
    attack = Equivocate(1, TransferPayload(2, 3), TransferPayload(3, 5), partition=(1, 2), amplify=amplify)
    ex = explore(Scenario(4, 1, "byzantine", [10] * 4, faults=[FaultSpec(4, attack)]))
    outcomes = {
        tuple(sorted((e.node, e.payload.dest) for e in t.events if e.kind == "Delivery"))
        for t in ex.terminals
    }
    print(f"amplify={amplify}: {ex.states} states, delivered outcomes {outcomes}")

# a million-unit transfer from an account holding 10
trace = run(Scenario(4, 1, "byzantine", [10] * 4, seed=3,
                     faults=[FaultSpec(4, Overspend(1, dest=2, amount=10**6))]))
delivered = sorted(e.node for e in trace.events if e.kind == "Delivery")
processed = [e for e in trace.events if e.kind == "Processed"]
print("overspend delivered at", delivered, "processed", len(processed), "times")
print("verdict ok:", check_trace(trace).ok)
