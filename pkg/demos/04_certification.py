#!/usr/bin/env python3
"""Compliance certification walkthrough.

Shows why recovery matters (exponential vs linear compliance decay), how
many sessions fixed-sample certification needs versus the sequential
test, and runs the sequential test over simulated session outcomes.
"""

import numpy as np

from agentcontracts import (
    CertificationStream,
    SprtConfig,
    compliance_no_recovery,
    compliance_with_recovery,
    hoeffding_n,
    kl_bernoulli,
    sprt_expected_n,
)

# --- recovery transforms the decay law -------------------------------------
q, r, T = 0.99, 0.95, 100
print(f"per-step compliance q={q}, recovery effectiveness r={r}, T={T} steps")
print(f"  without recovery: q^T = {compliance_no_recovery(q, T):.4f}")
print(f"  with recovery:    >= 1 - T(1-q)(1-r) = {compliance_with_recovery(q, r, T):.4f}")
print("  recovery turns a coin-flip guarantee into a deployable one\n")

# --- fixed-sample vs sequential sample sizes --------------------------------
cfg = SprtConfig(p0=0.90, p1=0.95, alpha_err=0.05, beta_err=0.05)
fixed = hoeffding_n(0.01, 0.05)
sequential = sprt_expected_n(cfg, "p1")
print(f"certifying compliance rate within 1% at 95% confidence:")
print(f"  fixed-sample (Hoeffding) sessions: {fixed}")
print(f"  sequential test expected sessions under H1: {sequential:.0f} "
      f"(KL(p1||p0) = {kl_bernoulli(cfg.p1, cfg.p0):.5f} nats)")
print(f"  reduction: ~{fixed / sequential:.0f}x\n")

# --- streaming certification over simulated sessions ------------------------
rng = np.random.default_rng(99)
stream = CertificationStream(cfg)
for outcome in rng.random(600) < 0.96:
    stream.feed(bool(outcome))
print("streaming certification at true compliance 0.96:")
for n, decision in stream.decisions:
    print(f"  decided {decision} after {n} sessions")
print(f"  in-flight test: n={stream.state.n}, "
      f"log-likelihood ratio {stream.state.log_lambda:.3f}")
stops = [n for n, _ in stream.decisions]
if stops:
    print(f"  mean stopping time {np.mean(stops):.1f} sessions")
