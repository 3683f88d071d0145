"""
An origin that crashes halfway through a broadcast
==================================================

Process 1 starts a transfer and crashes after two of its three sends. The
copy that reached process 2 is forwarded before delivery, so process 3
still learns of the transfer.
"""

from mtransfer import Scenario, check_trace, run
from mtransfer.scenario import CrashAtTick, FaultSpec, TransferRequest, WorkloadItem

scenario = Scenario(
    3, 1, "crash", [10, 0, 0], seed=1, max_delay=4,
    workload=[WorkloadItem(0, 1, TransferRequest(3, 6))],
    faults=[FaultSpec(1, CrashAtTick(0, sends_completed=2))],
)
trace = run(scenario)

sends = [(e.node, e.to) for e in trace.events if e.kind == "Send"]
print("sends (from, to):", sends)
print("processed at:", sorted({e.node for e in trace.events if e.kind == "Processed"}))
print("verdict ok:", check_trace(trace).ok)

# with no send completed, the transfer disappears together with its origin
lost = run(Scenario(3, 1, "crash", [10, 0, 0], workload=scenario.workload,
                    faults=[FaultSpec(1, CrashAtTick(0, sends_completed=0))]))
print("deliveries when nothing left:", [e for e in lost.events if e.kind == "Delivery"])
