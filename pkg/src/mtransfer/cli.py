"""Command-line front end.

Exit codes: 0 all verdicts ok, 1 a verdict failed, 2 configuration or input
error, 3 a crash-model run did not reach quiescence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .compliance import check_trace, summarize
from .scenario import ScenarioError, load_scenario
from .simnet import EnumerationBoundExceeded, explore, max_steps_from_env, run
from .trace import Trace, TraceFormatError

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_STALLED = 0, 1, 2, 3


def _weakened(choice, window_k):
    if choice is None:
        return window_k > 1
    return choice == "weakened"


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _exit_code(verdicts_ok, stalled_crash):
    if not verdicts_ok:
        return EXIT_VERDICT
    if stalled_crash:
        return EXIT_STALLED
    return EXIT_OK


def _run_one(scenario, weakened, out, name, max_steps):
    trace = run(scenario, max_steps=max_steps)
    verdict = check_trace(trace, weakened=weakened)
    summary = summarize(trace, verdict)
    trace.write(os.path.join(out, f"trace-{name}.jsonl"))
    _write_json(os.path.join(out, f"verdict-{name}.json"), {**verdict.to_dict(), "summary": summary})
    return trace, verdict, summary


def cmd_run(args):
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    weakened = _weakened(args.checker, scenario.window_k)
    os.makedirs(args.out, exist_ok=True)
    crash_model = scenario.model.value == "crash"

    if args.mode == "exhaustive":
        try:
            ex = explore(scenario)
        except EnumerationBoundExceeded as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        bad = [v for v in ex.violations]
        for k, trace in enumerate(ex.terminals):
            trace.write(os.path.join(args.out, f"terminal-{k}.jsonl"))
            bad.extend(check_trace(trace, weakened=weakened).violations)
        per_node = {}
        for finals in ex.final_accounts:
            for node, acc in finals.items():
                per_node.setdefault(node, set()).add(acc)
        confluent = all(len(v) == 1 for v in per_node.values())
        report = {
            "ok": not bad,
            "states": ex.states,
            "transitions": ex.transitions,
            "terminal_states": len(ex.terminals),
            "confluent": confluent,
            "violations": [v.__dict__ for v in bad],
        }
        _write_json(os.path.join(args.out, "exhaustive.json"), report)
        print(f"states={ex.states} transitions={ex.transitions} terminals={len(ex.terminals)} "
              f"confluent={confluent} violations={len(bad)}")
        return _exit_code(not bad, False)

    max_steps = max_steps_from_env()
    seeds = [scenario.seed] if args.mode == "single" else [scenario.seed + i for i in range(args.seeds)]
    all_ok, stalled = True, False
    for seed in seeds:
        trace, verdict, summary = _run_one(scenario.with_seed(seed), weakened, args.out, str(seed), max_steps)
        all_ok &= verdict.ok
        stalled |= crash_model and not trace.quiescent
        print(
            f"seed={seed} ok={verdict.ok} committed={summary['committed']} aborted={summary['aborted']} "
            f"quiescent={trace.quiescent} violations={summary['violations']}"
        )
        if args.mode == "single":
            for node, bal in summary["final_balances"].items():
                print(f"  node {node}: {bal}")
    if args.mode == "sweep":
        print(f"{len(seeds)} runs, {'all ok' if all_ok else 'FAILURES'}")
    return _exit_code(all_ok, stalled)


def cmd_check(args):
    try:
        trace = Trace.read(args.trace)
    except (OSError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    verdict = check_trace(trace, weakened=_weakened(args.checker, trace.window_k))
    print(json.dumps(verdict.to_dict(), indent=2))
    return _exit_code(verdict.ok, trace.model == "crash" and not trace.quiescent)


def build_parser():
    parser = argparse.ArgumentParser(prog="mtransfer", description="Broadcast-based money transfer simulator and checker")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and check the resulting traces")
    p.add_argument("--scenario", required=True)
    p.add_argument("--mode", choices=["single", "sweep", "exhaustive"], default="single")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds in sweep mode")
    p.add_argument("--out", default="out")
    p.add_argument("--checker", choices=["strict", "weakened"], default=None,
                   help="default: weakened when window_k > 1, strict otherwise")
    p.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="check a stored trace")
    c.add_argument("--trace", required=True)
    c.add_argument("--checker", choices=["strict", "weakened"], default=None)
    c.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "run" and args.mode == "sweep" and args.seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
