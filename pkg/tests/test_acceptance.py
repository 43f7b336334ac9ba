"""Acceptance criteria.

Each test implements one numbered criterion at its stated tolerance and
prints a PASS line on success (pytest -s shows the full checklist).
Monte Carlo criteria carry their runtime budgets; the enforcement-overhead
criterion is best-effort per its definition and reports the measured
latency distribution.
"""

import json
import math
import time

import numpy as np
import pytest

from agentcontracts.bench import aggregate, load_suite, score_suite
from agentcontracts.certification import (
    SprtConfig,
    compliance_no_recovery,
    compliance_with_recovery,
    hoeffding_n,
    kl_bernoulli,
    sprt_expected_n,
    sprt_start,
    sprt_update,
)
from agentcontracts.composition import (
    ChainSpec,
    chain_bounds,
    check_conditions,
    compose_contracts,
    verify_chain_trace,
)
from agentcontracts.drift import DriftWindow, jsd, update_drift
from agentcontracts.dynamics import (
    DesignSpec,
    OUParams,
    simulate_ou_paths,
    solve_design_gamma,
    tail_probability,
)
from agentcontracts.engine import check_deterministic, classify_outcome, evaluate_step
from agentcontracts.model import (
    ActionRecord,
    Constraint,
    Contract,
    DriftConfig,
    Predicate,
)
from agentcontracts.monitor import SessionMonitor

from helpers import (
    oracle_deterministic,
    oracle_outcome,
    random_chain_instance,
    random_contract,
    random_trace,
)


def announce(number: int, name: str, detail: str = "") -> None:
    suffix = f"  [{detail}]" if detail else ""
    print(f"PASS criterion {number:2d}: {name}{suffix}")


def median_call_time(fn, repeats: int = 200) -> float:
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def test_criterion_01_recovery_lemma():
    no_rec = compliance_no_recovery(0.99, 100)
    assert no_rec == pytest.approx(0.3660, abs=0.0005)
    with_rec = compliance_with_recovery(0.99, 0.95, 100)
    assert with_rec == 0.95  # exact
    latency = median_call_time(lambda: compliance_with_recovery(0.99, 0.95, 100))
    assert latency < 1e-3
    announce(1, "recovery lemma reproduction",
             f"q^T={no_rec:.4f}, bound={with_rec}, {latency * 1e6:.1f} us/call")


def test_criterion_02_broken_telephone():
    spec = ChainSpec.uniform(5, p=0.95, delta=0.02, p_h=0.98, delta_h=0.01)
    bounds = chain_bounds(spec)
    assert bounds.p_chain_lower == pytest.approx(0.714, abs=0.001)
    assert bounds.delta_chain_upper == pytest.approx(0.14, abs=0.0)  # exact sum
    latency = median_call_time(lambda: chain_bounds(spec))
    assert latency < 1e-3
    announce(2, "broken-telephone chain bounds",
             f"p={bounds.p_chain_lower:.4f}, delta={bounds.delta_chain_upper}, "
             f"{latency * 1e6:.1f} us/call")


def test_criterion_03_sample_complexity():
    assert hoeffding_n(0.01, 0.05) == 18_445
    kl = kl_bernoulli(0.95, 0.90)
    assert kl == pytest.approx(0.01671, abs=0.0001)
    cfg = SprtConfig(p0=0.90, p1=0.95, alpha_err=0.05, beta_err=0.05)
    expected_n = sprt_expected_n(cfg, "p1")
    assert expected_n == pytest.approx(159, abs=2)
    latency = median_call_time(lambda: (hoeffding_n(0.01, 0.05),
                                        kl_bernoulli(0.95, 0.90),
                                        sprt_expected_n(cfg, "p1")))
    assert latency < 1e-3
    announce(3, "sample-complexity reproduction",
             f"n={hoeffding_n(0.01, 0.05)}, KL={kl:.5f}, E[N|H1]={expected_n:.1f}")


def _sprt_monte_carlo(cfg: SprtConfig, true_p: float, reps: int, seed: int,
                      max_n: int = 4000):
    """Vectorized replications of the sequential test."""
    rng = np.random.default_rng(seed)
    inc_s, inc_f = cfg.success_increment, cfg.failure_increment
    stops = np.empty(reps, dtype=int)
    accept_h1 = np.empty(reps, dtype=bool)
    chunk = 2000
    for start in range(0, reps, chunk):
        m = min(chunk, reps - start)
        x = rng.random((m, max_n)) < true_p
        lam = np.cumsum(np.where(x, inc_s, inc_f), axis=1)
        hit_up = lam >= cfg.upper
        hit_lo = lam <= cfg.lower
        hit = hit_up | hit_lo
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        stops[start:start + m] = np.where(any_hit, first + 1, max_n)
        decided_up = hit_up[np.arange(m), first]
        accept_h1[start:start + m] = np.where(any_hit, decided_up, lam[:, -1] > 0)
    return stops, accept_h1


def test_criterion_04_sprt_monte_carlo():
    start = time.perf_counter()
    cfg = SprtConfig(p0=0.90, p1=0.95, alpha_err=0.05, beta_err=0.05)

    # The vectorized replication must agree with the sequential updates.
    check_stops, check_h1 = _sprt_monte_carlo(cfg, 0.95, reps=50, seed=123)
    rng = np.random.default_rng(123)
    x = rng.random((2000, 4000)) < 0.95  # same stream shape as the first chunk
    for i in range(50):
        state = sprt_start(cfg)
        n = 0
        while state.decision == "continue":
            state = sprt_update(state, cfg, bool(x[i, n]))
            n += 1
        assert n == check_stops[i]
        assert (state.decision == "accept_h1") == bool(check_h1[i])

    stops_h1, accept_h1 = _sprt_monte_carlo(cfg, 0.95, reps=10_000, seed=2025)
    mean_stop = float(stops_h1.mean())
    assert 150 <= mean_stop <= 300
    type_2 = float(1.0 - accept_h1.mean())
    assert type_2 <= 1.2 * cfg.beta_err

    _, accept_h1_under_h0 = _sprt_monte_carlo(cfg, 0.90, reps=10_000, seed=2026)
    type_1 = float(accept_h1_under_h0.mean())
    assert type_1 <= 1.2 * cfg.alpha_err

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    announce(4, "SPRT Monte Carlo",
             f"E[N|H1]={mean_stop:.1f}, type1={type_1:.4f}, type2={type_2:.4f}, "
             f"{elapsed:.1f}s")


def test_criterion_05_ou_stationarity():
    start = time.perf_counter()
    triples = [(0.02, 0.2, 0.05), (0.05, 0.5, 0.10), (0.10, 0.4, 0.08)]
    n_paths = 10_000
    details = []
    for i, (alpha, gamma, sigma) in enumerate(triples):
        params = OUParams(alpha=alpha, gamma=gamma, sigma=sigma, d0=alpha / gamma)
        burn_in = 10.0 / gamma
        finals = simulate_ou_paths(params, horizon=burn_in, dt=0.01,
                                   n_paths=n_paths, seed=900 + i)
        mean_target = alpha / gamma
        var_target = sigma ** 2 / (2.0 * gamma)
        se_mean = math.sqrt(var_target / n_paths)
        assert abs(finals.mean() - mean_target) < 3 * se_mean
        assert abs(finals.var() / var_target - 1.0) < 0.05

        s = math.sqrt(var_target)
        for factor in (0.5, 1.0, 2.0):
            eta = factor * s
            bound = tail_probability(params, eta)
            p_hat = float((finals > mean_target + eta).mean())
            se_p = math.sqrt(max(p_hat * (1 - p_hat), 1e-9) / n_paths)
            assert p_hat - 3 * se_p <= bound
        details.append(f"({alpha},{gamma},{sigma}) ok")
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    announce(5, "OU stationary statistics + tail bound",
             f"{'; '.join(details)}, {elapsed:.1f}s")


def test_criterion_06_design_round_trip():
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 10:
        alpha = float(rng.uniform(0.01, 0.2))
        sigma = float(rng.uniform(0.01, 0.3))
        d_max = float(rng.uniform(0.1, 1.0))
        eps = float(rng.uniform(0.001, 0.2))
        gamma = solve_design_gamma(alpha, sigma, DesignSpec(d_max=d_max, epsilon=eps))
        assert gamma > alpha / d_max
        eta = d_max - alpha / gamma
        bound = tail_probability(OUParams(alpha, gamma, sigma), eta)
        assert bound == pytest.approx(eps, abs=1e-9)
        checked += 1
    announce(6, "design-criterion round trip", "10-point grid, tail == eps at 1e-9")


def test_criterion_07_drift_score_properties():
    start = time.perf_counter()
    rng = np.random.default_rng(88)
    config = DriftConfig(w_c=0.7, w_d=0.3, window=4,
                         vocabulary=("a", "b", "c"),
                         reference={"a": 0.5, "b": 0.3, "c": 0.2})
    contract = Contract(
        name="drift-props",
        invariants_hard=(Constraint(
            name="inv", severity="hard",
            check=Predicate(field_path="x", operator="ge", operand=1)),),
        governance_hard=(Constraint(
            name="gov", severity="hard",
            check=Predicate(field_path="cost", operator="le", operand=3)),),
        drift_config=config,
    )

    window = DriftWindow.for_contract(contract)
    history = []
    for t in range(1000):
        x = float(rng.integers(0, 3))
        cost = float(rng.integers(0, 6))
        label = str(rng.choice(["a", "b", "c", "zzz"]))
        action = ActionRecord(label, {"cost": cost})
        ev = evaluate_step(contract, {"x": x}, action, t)
        sample = update_drift(window, config, ev, action)
        history.append(label if label in config.vocabulary else "__other__")

        assert 0.0 <= sample.d_total <= 1.0
        full_compliance = (x >= 1) and (cost <= 3)
        counts = {}
        for kept in history[-config.window:]:
            counts[kept] = counts.get(kept, 0) + 1
        total = sum(counts.values())
        observed = {k: v / total for k, v in counts.items()}
        reference = dict(config.reference)
        identical = all(abs(observed.get(k, 0.0) - reference.get(k, 0.0)) < 1e-12
                        for k in set(observed) | set(reference) | {"__other__"})
        if full_compliance and identical:
            assert sample.d_total == pytest.approx(0.0, abs=1e-9)
        if sample.d_total < 1e-12:
            assert full_compliance and identical

        # Incremental window equals from-scratch recomputation.
        fresh = DriftWindow.for_contract(contract)
        for kept in history[-config.window:]:
            fresh.push(kept)
        assert np.allclose(window.observed(), fresh.observed())

    for _ in range(1000):
        p, q, r = (rng.dirichlet(np.ones(4)) for _ in range(3))
        assert math.sqrt(jsd(p, r)) <= (math.sqrt(jsd(p, q))
                                        + math.sqrt(jsd(q, r)) + 1e-9)

    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    announce(7, "drift-score property suite", f"1000 step cases + 1000 triples, "
                                              f"{elapsed:.1f}s")


def test_criterion_08_oracle_equivalence():
    rng = np.random.default_rng(99)
    for _ in range(500):
        contract = random_contract(rng, max_constraints=6)
        trace = random_trace(rng, max_steps=8)
        verdict = check_deterministic(contract, trace)
        expected = oracle_deterministic(contract, trace)
        got = {
            "preconditions_ok": verdict.preconditions_ok,
            "invariants_ok": verdict.invariants_ok,
            "governance_ok": verdict.governance_ok,
            "recoverability_ok": verdict.recoverability_ok,
            "overall": verdict.overall,
        }
        assert got == expected
        assert classify_outcome(contract, trace) == oracle_outcome(contract, trace)
    announce(8, "deterministic-satisfaction oracle equivalence", "500 instances exact")


def test_criterion_09_compositionality_suite():
    rng = np.random.default_rng(111)
    for _ in range(200):
        inst = random_chain_instance(rng)
        a, b, handoff = inst["a"], inst["b"], inst["handoff"]
        trace, boundary = inst["trace"], inst["boundary"]
        from agentcontracts.model import ExecutionTrace
        sub_a = ExecutionTrace(states=trace.states[:boundary + 1],
                               actions=trace.actions[:boundary])
        sub_b = ExecutionTrace(states=trace.states[boundary:],
                               actions=trace.actions[boundary:])
        assert check_deterministic(a, sub_a).overall
        assert check_deterministic(b, sub_b).overall
        report = check_conditions(a, b, handoff, inst["witnesses"], inst["corpus"])
        assert report.all_pass
        composed = compose_contracts(a, b, handoff)
        verdict = verify_chain_trace(composed, trace, boundaries=[boundary])
        assert verdict.overall, verdict.witnesses

    fault_attr = {"c1": "c1_interface", "c2": "c2_assumptions",
                  "c3": "c3_governance", "c4": "c4_recovery"}
    detected = 0
    for fault, attr in fault_attr.items():
        for _ in range(25):
            inst = random_chain_instance(rng, fault=fault)
            report = check_conditions(inst["a"], inst["b"], inst["handoff"],
                                      inst["witnesses"], inst["corpus"],
                                      recovery_transform=inst["transform"])
            assert getattr(report, attr).passed is False, fault
            detected += 1
    announce(9, "compositionality property suite",
             f"200 valid chains composed, {detected} fault injections detected")


def test_criterion_10_benchmark_self_consistency(suite_dir):
    start = time.perf_counter()
    scenarios = load_suite(suite_dir)
    assert len(scenarios) >= 50
    domains = {s.domain for s in scenarios}
    assert len(domains - {"composition"}) >= 5
    assert "composition" in domains
    scores = score_suite(scenarios)
    summary = aggregate(scores)
    assert summary.overall["detection_accuracy"] == 1.0
    assert summary.overall["false_flags"] == 0
    assert all(s.passed for s in scores)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    announce(10, "benchmark self-consistency",
             f"{len(scenarios)} scenarios, detection 1.0000, {elapsed:.1f}s")


def test_criterion_11_enforcement_overhead():
    # 100 constraints (mixed kinds), action vocabulary of 50.
    invariants_hard = tuple(
        Constraint(name=f"ih{i}", severity="hard",
                   check=Predicate(field_path=f"m.f{i}", operator="ge", operand=0.1))
        for i in range(40))
    invariants_soft = tuple(
        Constraint(name=f"is{i}", severity="soft",
                   check=Predicate(field_path=f"m.f{i + 40}", operator="ge", operand=0.1))
        for i in range(30))
    governance_hard = tuple(
        Constraint(name=f"gh{i}", severity="hard",
                   check=Predicate(field_path=f"p{i}", operator="le", operand=10.0))
        for i in range(20))
    governance_soft = tuple(
        Constraint(name=f"gs{i}", severity="soft",
                   check=Predicate(field_path=f"p{i + 20}", operator="le", operand=10.0))
        for i in range(10))
    vocabulary = tuple(f"act{i}" for i in range(50))
    contract = Contract(
        name="overhead",
        invariants_hard=invariants_hard,
        invariants_soft=invariants_soft,
        governance_hard=governance_hard,
        governance_soft=governance_soft,
        drift_config=DriftConfig(
            window=10, vocabulary=vocabulary,
            reference={v: 1.0 / 50 for v in vocabulary}),
    )
    state = {"m": {f"f{i}": 1.0 for i in range(70)}}
    rng = np.random.default_rng(7)

    monitor = SessionMonitor(contract)
    samples = []
    for t in range(300):
        action = ActionRecord(str(rng.choice(vocabulary)),
                              {f"p{i}": 1.0 for i in range(30)})
        start = time.perf_counter()
        monitor.step(state, action)
        samples.append(time.perf_counter() - start)
    arr = np.array(samples) * 1e3
    dist = {"p50": float(np.percentile(arr, 50)),
            "p90": float(np.percentile(arr, 90)),
            "p99": float(np.percentile(arr, 99)),
            "max": float(arr.max())}
    print(f"monitor_step latency (ms): {json.dumps(dist)}")
    # Best-effort criterion: a miss here calls for investigation on the
    # host in question, not an automatic implementation defect.
    assert dist["p50"] < 10.0
    announce(11, "enforcement overhead",
             f"median {dist['p50']:.3f} ms over 300 steps (100 constraints, |A|=50)")
