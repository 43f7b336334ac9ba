#!/usr/bin/env python3
"""Drift dynamics walkthrough.

Simulates the mean-reverting drift process, checks the Monte Carlo
stationary statistics against the closed forms, solves the contract
design criterion for a target ceiling, and fits the relaxation model to
a noisy trajectory.  Saves a trajectory plot next to this script when
matplotlib is importable.
"""

import math
import os

import numpy as np

from agentcontracts import (
    DesignSpec,
    OUParams,
    design_gamma_approx,
    fit_ou,
    mse_at_time,
    simulate_ou,
    simulate_ou_paths,
    solve_design_gamma,
    stationary_stats,
    tail_probability,
)

params = OUParams(alpha=0.02, gamma=0.2, sigma=0.05, d0=0.5)
mean, var = stationary_stats(params)
print(f"parameters: alpha={params.alpha} gamma={params.gamma} sigma={params.sigma}")
print(f"stationary law: N({mean:.4f}, {var:.6f})  (sd {math.sqrt(var):.4f})\n")

# --- Monte Carlo vs closed forms -----------------------------------------
finals = simulate_ou_paths(params, horizon=10 / params.gamma, dt=0.01,
                           n_paths=5000, seed=42)
print(f"5000-path Monte Carlo at t = 10/gamma:")
print(f"  sample mean {finals.mean():.4f}  (target {mean:.4f})")
print(f"  sample var  {finals.var():.6f}  (target {var:.6f})")
eta = math.sqrt(var)
print(f"  exceedance Pr(D > mean + sd): {(finals > mean + eta).mean():.4f} "
      f"<= bound {tail_probability(params, eta):.4f}")
print(f"  mean-square error at t=5: closed form {mse_at_time(params, 5.0):.5f}\n")

# --- contract design criterion --------------------------------------------
spec = DesignSpec(d_max=0.25, epsilon=0.05)
gamma_min = solve_design_gamma(0.05, 0.1, spec)
print(f"design: keep D below {spec.d_max} with probability {1 - spec.epsilon}")
print(f"  exact minimum recovery rate  gamma >= {gamma_min:.4f}")
print(f"  approximate criterion        gamma >~ {design_gamma_approx(0.05, 0.1, spec):.4f}")
check = tail_probability(OUParams(0.05, gamma_min, 0.1), spec.d_max - 0.05 / gamma_min)
print(f"  tail probability at the solved rate: {check:.6f} (== epsilon)\n")

# --- fit the relaxation model to a noisy trajectory ------------------------
times, values = simulate_ou(params, horizon=40.0, dt=0.1, seed=7)
fit = fit_ou(list(zip(times, values)))
print("relaxation fit on a simulated noisy trajectory:")
print(f"  gamma_hat={fit.gamma_hat:.4f}  d_star_hat={fit.d_star_hat:.4f}  "
      f"R^2={fit.r_squared:.3f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    model = fit.d_star_hat + (values[0] - fit.d_star_hat) * np.exp(-fit.gamma_hat * times)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, values, lw=0.8, label="simulated drift")
    ax.plot(times, model, lw=2, label=f"fit (gamma={fit.gamma_hat:.3f})")
    ax.axhline(mean, ls="--", c="gray", label="stationary mean")
    ax.set_xlabel("t (turns)")
    ax.set_ylabel("D(t)")
    ax.legend()
    out = os.path.join(os.path.dirname(__file__), "drift_trajectory.png")
    fig.savefig(out, dpi=120, bbox_inches="tight")
    print(f"  plot written to {out}")
except ImportError:
    print("  (matplotlib not available; skipping the plot)")
