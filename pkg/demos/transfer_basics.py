"""
A first money transfer
======================

Three processes share an account array. A transfer is broadcast with one
sequence number, and each replica applies it once funds and order allow.
"""

from mtransfer import Scenario, check_trace, run
from mtransfer.scenario import BalanceRequest, TransferRequest, WorkloadItem

# process 1 pays 4 to process 2; later process 2 reads process 1's balance
scenario = Scenario(
    n=3, t=1, model="crash", init=[10, 5, 3], seed=7, max_delay=5,
    workload=[
        WorkloadItem(0, 1, TransferRequest(dest=2, amount=4)),
        WorkloadItem(40, 2, BalanceRequest(j=1)),
    ],
)
trace = run(scenario)

for e in trace.events:
    if e.kind in ("Initiated", "Processed", "Committed", "BalanceRead"):
        detail = e.value if e.kind == "BalanceRead" else (e.payload or f"sn={e.sn}")
        print(e.tick, e.node, e.kind, detail)

# every replica applied the same transfer, so every replica holds [6, 9, 3]
print(check_trace(trace).to_dict())
