#!/usr/bin/env python3
"""Per-turn enforcement walkthrough.

Loads the bundled financial-advisor contract, replays the 6-step demo
trace in detection-only mode, then replays it again with a recovery hook
registered so the tone violation is corrected in-step.  Shows that the
recorded compliance series reflect pre-recovery state either way.
"""

import json

from agentcontracts import ActionRecord, ExecutionTrace, load_contract, run_session
from agentcontracts.assets import asset_path

contract = load_contract(asset_path("contracts", "financial-advisor.yaml"))
with open(asset_path("traces", "financial_advisor_demo.json")) as fh:
    trace = ExecutionTrace.from_dict(json.load(fh))

print(f"contract: {contract.name}")
print(f"  hard: {[c.name for c in contract.hard_constraints()]}")
print(f"  soft: {[c.name for c in contract.soft_constraints()]}")
print(f"trace: {trace.length} steps\n")

# --- detection-only replay (no hook registered) -------------------------
report = run_session(contract, trace)
print("detection-only replay")
print(f"  outcome: {report.outcome}")
print(f"  deterministic verdict: overall={report.verdict.overall} "
      f"(recoverability_ok={report.verdict.recoverability_ok})")
print(f"  C_soft series: {report.c_soft_series}")
print(f"  drift series:  {tuple(round(d, 4) for d in report.drift_series)}")
for event in report.events:
    print(f"  event @step {event.step}: {event.kind} {dict(event.payload)}")
print(f"  metrics: {json.dumps(report.metrics.to_dict(), indent=4)}\n")

# --- replay with a recovery hook ----------------------------------------
def hook(strategy, constraint, state):
    """Corrective hook: patch the offending field and resubmit the step."""
    if constraint.name != "professional-tone":
        return None
    fixed = {k: dict(v) if isinstance(v, dict) else v for k, v in state.items()}
    fixed["output"]["tone_score"] = 0.85
    return fixed, ActionRecord("respond", {"amount": 0, "latency_ms": 300})

hooked = run_session(contract, trace, hook=hook)
print("replay with recovery hook")
succeeded = [e for e in hooked.events if e.kind == "recovery_succeeded"]
print(f"  recovery_succeeded events: {[(e.step, e.payload['constraint']) for e in succeeded]}")
print(f"  pre-recovery C_soft series unchanged: "
      f"{hooked.c_soft_series == report.c_soft_series}")
post = [s.post_recovery.c_soft for s in hooked.steps if s.post_recovery is not None]
print(f"  post-recovery C_soft at corrected steps: {post}")
