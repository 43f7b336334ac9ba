"""Per-turn runtime enforcement.

The session monitor evaluates each step in a fixed order: pre-recovery
evaluation (recorded), metric update, event emission, bounded recovery for
violated soft constraints, then a separately recorded post-recovery
re-evaluation.  Compliance series always reflect pre-recovery state; hard
violations are logged, never recovered.

Recovery walks the constraint's strategy chain against per-constraint
attempt counters that persist across steps and reset when the constraint
returns to satisfaction.  By default one attempt is spent per step; set
``attempts_per_step=None`` to allow a full chain traversal within a single
step.  Without a registered hook the monitor is detection-only: violations
of constraints whose strategies need corrective action emit
``recovery_failed`` immediately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple

from .drift import DriftSample, DriftWindow, SessionMetrics, update_drift
from .engine import (
    SatisfactionVerdict,
    StepEvaluation,
    ViolationEvent,
    check_deterministic,
    classify_outcome,
    constraint_timelines,
    evaluate_final_state,
    evaluate_step,
    scope_active,
)
from .errors import EmptyEnsemble, SessionTerminated
from .model import ActionRecord, Constraint, Contract, ExecutionTrace, RecoveryStrategy, SatisfactionParams, StateDict

__all__ = [
    "MonitorEvent",
    "StepReport",
    "SessionReport",
    "SessionMonitor",
    "RecoveryHook",
    "PdkVerdict",
    "run_session",
    "pdk_verdict",
]

# Hook contract: (strategy, violated constraint, state) -> optional corrected
# (state, action) injected for re-evaluation of the same step.
RecoveryHook = Callable[
    [RecoveryStrategy, Constraint, StateDict],
    Optional[Tuple[StateDict, ActionRecord]],
]

EVENT_KINDS = (
    "violation", "drift_alert_mild", "drift_alert_severe",
    "recovery_attempted", "recovery_succeeded", "recovery_failed",
    "session_terminated",
)

#: Strategy types that execute without a registered hook.
_INTRINSIC_TYPES = ("emit_event", "terminate_session")


@dataclass(frozen=True)
class MonitorEvent:
    kind: str
    step: int
    payload: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "step": self.step, "payload": dict(self.payload)}


@dataclass(frozen=True)
class StepReport:
    """Everything observed at one step (pre- and post-recovery)."""

    step: int
    evaluation: StepEvaluation
    drift: DriftSample
    events: tuple
    post_recovery: Optional[StepEvaluation] = None
    terminated: bool = False

    def to_dict(self) -> dict:
        def results_dict(ev: StepEvaluation) -> dict:
            return {name: {"satisfied": r.satisfied, "detail": r.detail}
                    for name, r in ev.results.items()}

        out = {
            "step": self.step,
            "c_hard": self.evaluation.c_hard,
            "c_soft": self.evaluation.c_soft,
            "results": results_dict(self.evaluation),
            "drift": self.drift.to_dict(),
            "post_recovery": None,
            "terminated": self.terminated,
        }
        if self.evaluation.preconditions is not None:
            out["preconditions"] = {
                name: {"satisfied": r.satisfied, "detail": r.detail}
                for name, r in self.evaluation.preconditions.items()}
        if self.post_recovery is not None:
            out["post_recovery"] = {
                "c_hard": self.post_recovery.c_hard,
                "c_soft": self.post_recovery.c_soft,
                "results": results_dict(self.post_recovery),
            }
        return out


@dataclass(frozen=True)
class SessionReport:
    """Session summary: series, logs, metrics, verdicts."""

    contract: str
    steps: tuple
    events: tuple
    violations: tuple
    metrics: SessionMetrics
    verdict: SatisfactionVerdict
    outcome: str
    preconditions_ok: bool
    excluded_steps: int = 0

    @property
    def c_hard_series(self) -> tuple:
        return tuple(s.evaluation.c_hard for s in self.steps)

    @property
    def c_soft_series(self) -> tuple:
        return tuple(s.evaluation.c_soft for s in self.steps)

    @property
    def drift_series(self) -> tuple:
        return tuple(s.drift.d_total for s in self.steps)

    def detected_violations(self) -> tuple:
        """(step, constraint) pairs flagged by the monitor (new violation
        episodes plus precondition failures at step 0)."""
        return tuple((e.step, e.payload["constraint"]) for e in self.events
                     if e.kind == "violation")

    def to_dict(self) -> dict:
        return {
            "contract": self.contract,
            "steps": [s.to_dict() for s in self.steps],
            "events": [e.to_dict() for e in self.events],
            "violations": [
                {"step": v.step, "constraint": v.constraint, "severity": v.severity,
                 "nu": v.nu, "recovered_at": v.recovered_at,
                 "delta_t_recovery": v.delta_t_recovery}
                for v in self.violations
            ],
            "metrics": self.metrics.to_dict(),
            "verdicts": {
                "deterministic": self.verdict.to_dict(),
                "outcome": self.outcome,
                "preconditions_ok": self.preconditions_ok,
            },
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


class _Episode:
    """Mutable bookkeeping for one open violation."""

    __slots__ = ("step", "nu", "severity", "failed_emitted")

    def __init__(self, step: int, nu: float, severity: str):
        self.step = step
        self.nu = nu
        self.severity = severity
        self.failed_emitted = False


class SessionMonitor:
    """Stateful per-session enforcement loop (single writer).

    ``boundaries`` enables phase scoping for composed contracts: a list of
    handoff state indices, in which case scoped invariants only apply
    inside their stage and handoff invariants only at their boundary
    state.  ``trace_length`` must accompany ``boundaries`` so the final
    stage knows its end index.
    """

    def __init__(self, contract: Contract, hook: Optional[RecoveryHook] = None,
                 listeners: Sequence[Callable[[MonitorEvent], None]] = (),
                 attempts_per_step: Optional[int] = 1,
                 boundaries: Optional[Sequence[int]] = None,
                 trace_length: Optional[int] = None):
        self.contract = contract
        self.hook = hook
        self.listeners = list(listeners)
        self.attempts_per_step = attempts_per_step
        self.boundaries = tuple(boundaries) if boundaries else ()
        self._last_state_index = trace_length if trace_length is not None else None

        self._t = 0
        self.terminated = False
        self.window = DriftWindow.for_contract(contract)
        self._attempts: dict = {}
        self._episodes: dict = {}
        self.step_reports: list = []
        self.violation_events: list = []
        self._events: list = []
        self._soft_by_name = {c.name: c for c in contract.soft_constraints()}
        self._hard_names = {c.name for c in contract.hard_constraints()}
        weights = [c.weight for c in contract.invariants() + contract.governance()]
        self._total_weight = sum(weights)
        self._weights = {c.name: c.weight
                         for c in contract.invariants() + contract.governance()}

    # -- events ------------------------------------------------------------

    def _emit(self, kind: str, step: int, **payload) -> MonitorEvent:
        event = MonitorEvent(kind=kind, step=step, payload=payload)
        self._events.append(event)
        for listener in self.listeners:
            listener(event)
        return event

    # -- phase scoping -----------------------------------------------------

    def _active_filter(self, state_index: int):
        if not self.boundaries:
            return None
        last = self._last_state_index if self._last_state_index is not None else state_index
        return lambda con: scope_active(con.scope, state_index, self.boundaries, last)

    # -- the enforcement loop ----------------------------------------------

    def step(self, state: StateDict, action: ActionRecord) -> StepReport:
        """Run one enforcement turn for (s_t, a_t)."""
        if self.terminated:
            raise SessionTerminated(
                f"session closed by terminate_session before step {self._t}")
        t = self._t
        self._t += 1
        step_events_start = len(self._events)

        # 1. Pre-recovery evaluation (this is what the series record).
        evaluation = evaluate_step(self.contract, state, action, t,
                                   active=self._active_filter(t))

        # 2. Metric update.
        drift = update_drift(self.window, self.contract.drift_config, evaluation, action)

        # 3. Event emission.
        if t == 0 and evaluation.preconditions:
            for name, r in evaluation.preconditions.items():
                if r.satisfied is not True:
                    self._emit("violation", t, constraint=name, severity="hard",
                               precondition=True, detail=r.detail)

        # Close episodes for constraints back in compliance, then open new ones.
        newly_violated = []
        for name, result in evaluation.results.items():
            episode = self._episodes.get(name)
            if result.satisfied is True and episode is not None:
                self._close_episode(name, recovered_at=t)
            elif result.satisfied is False and episode is None:
                newly_violated.append(name)

        if newly_violated:
            nu = self._severity(newly_violated)
            for name in newly_violated:
                severity = "hard" if name in self._hard_names else "soft"
                self._episodes[name] = _Episode(step=t, nu=nu, severity=severity)
                self._emit("violation", t, constraint=name, severity=severity,
                           nu=nu, detail=evaluation.results[name].detail)

        d = drift.d_total
        cfg = self.contract.drift_config
        if cfg.theta1 < d <= cfg.theta2:
            self._emit("drift_alert_mild", t, drift=d)
        elif d > cfg.theta2:
            self._emit("drift_alert_severe", t, drift=d)

        # 4. Recovery for violated soft constraints (hard ones only logged).
        post = self._attempt_recovery(t, state, action, evaluation)

        report = StepReport(
            step=t,
            evaluation=evaluation,
            drift=drift,
            events=tuple(self._events[step_events_start:]),
            post_recovery=post,
            terminated=self.terminated,
        )
        self.step_reports.append(report)
        return report

    def _severity(self, names: Sequence[str]) -> float:
        """Compliance drop attributable to this step's new violations,
        floored at one unit weight."""
        if self._total_weight <= 0:
            return 1.0
        drop = sum(self._weights.get(n, 0.0) for n in names)
        return min(1.0, max(drop, 1.0) / self._total_weight)

    def _close_episode(self, name: str, recovered_at: int) -> None:
        episode = self._episodes.pop(name)
        self._attempts.pop(name, None)
        self.violation_events.append(ViolationEvent(
            step=episode.step, constraint=name, severity=episode.severity,
            nu=episode.nu, recovered_at=recovered_at,
            delta_t_recovery=recovered_at - episode.step))

    def _chain(self, constraint: Constraint) -> list:
        chain = []
        name = constraint.recovery
        while name is not None:
            strategy = self.contract.strategy(name)
            if strategy is None:
                break
            chain.append(strategy)
            name = strategy.fallback
        return chain

    def _attempt_recovery(self, t: int, state: StateDict, action: ActionRecord,
                          evaluation: StepEvaluation) -> Optional[StepEvaluation]:
        post: Optional[StepEvaluation] = None
        current_state, current_action = state, action

        for con in self.contract.soft_constraints():
            result = (post or evaluation).results.get(con.name)
            if result is None or result.satisfied is not False:
                continue
            if con.name not in self._episodes:
                continue
            episode = self._episodes[con.name]
            chain = self._chain(con)
            if not chain:
                if not episode.failed_emitted:
                    episode.failed_emitted = True
                    self._emit("recovery_failed", t, constraint=con.name,
                               reason="no recovery strategy defined")
                continue

            budget = sum(s.max_attempts for s in chain)
            used = self._attempts.get(con.name, 0)
            spent_this_step = 0
            recovered = False

            while used < budget:
                if self.attempts_per_step is not None and spent_this_step >= self.attempts_per_step:
                    break
                strategy = self._strategy_at(chain, used)

                if strategy.type == "terminate_session":
                    used += 1
                    spent_this_step += 1
                    self._emit("recovery_attempted", t, constraint=con.name,
                               strategy=strategy.name, attempt=used)
                    self.terminated = True
                    self._emit("session_terminated", t, constraint=con.name,
                               strategy=strategy.name)
                    break

                if self.hook is None and strategy.type not in _INTRINSIC_TYPES:
                    if not episode.failed_emitted:
                        episode.failed_emitted = True
                        self._emit("recovery_failed", t, constraint=con.name,
                                   strategy=strategy.name,
                                   reason="no recovery hook registered")
                    break

                used += 1
                spent_this_step += 1
                self._emit("recovery_attempted", t, constraint=con.name,
                           strategy=strategy.name, attempt=used)

                corrected = None
                if self.hook is not None:
                    corrected = self.hook(strategy, con, current_state)
                if corrected is not None:
                    current_state, current_action = corrected
                    post = evaluate_step(self.contract, current_state, current_action,
                                         t, active=self._active_filter(t))
                    if post.results[con.name].satisfied is True:
                        self._emit("recovery_succeeded", t, constraint=con.name,
                                   strategy=strategy.name)
                        self._close_episode(con.name, recovered_at=t)
                        recovered = True
                        break

            self._attempts[con.name] = used
            if not recovered and used >= budget and con.name in self._episodes:
                if not self._episodes[con.name].failed_emitted:
                    self._episodes[con.name].failed_emitted = True
                    self._emit("recovery_failed", t, constraint=con.name,
                               reason="attempt budget exhausted")
            if self.terminated:
                break
        return post

    @staticmethod
    def _strategy_at(chain: Sequence[RecoveryStrategy], used: int) -> RecoveryStrategy:
        for strategy in chain:
            if used < strategy.max_attempts:
                return strategy
            used -= strategy.max_attempts
        return chain[-1]

    # -- finalization --------------------------------------------------------

    def finalize(self, trace: ExecutionTrace) -> SessionReport:
        """Close the session and roll up the report.

        The deterministic verdict is recomputed over the (possibly
        truncated, if terminated) raw trace, so it reflects pre-recovery
        behavior exactly.
        """
        steps_run = len(self.step_reports)
        states = trace.states[:steps_run + 1]
        actions = trace.actions[:steps_run]
        effective = ExecutionTrace(states=states, actions=actions)

        # Trailing state: invariants only; closes recovery windows.
        if steps_run == trace.length and steps_run > 0:
            final_results = evaluate_final_state(
                self.contract, trace.states[-1], steps_run,
                active=self._active_filter(steps_run))
            for name, r in final_results.items():
                if r.satisfied is True and name in self._episodes:
                    self._close_episode(name, recovered_at=steps_run)

        # Episodes never recovered stay open: no recovery duration.
        for name, episode in sorted(self._episodes.items()):
            self.violation_events.append(ViolationEvent(
                step=episode.step, constraint=name, severity=episode.severity,
                nu=episode.nu, recovered_at=None, delta_t_recovery=None))
        self._episodes.clear()

        boundaries = self.boundaries
        if boundaries:
            active = lambda con, idx: scope_active(con.scope, idx, boundaries,
                                                   effective.length)
        else:
            active = None
        timelines = constraint_timelines(self.contract, effective, active=active)
        verdict = check_deterministic(self.contract, effective, timelines=timelines)
        outcome = classify_outcome(self.contract, effective, timelines=timelines)

        compliance_series = [1.0 - s.drift.d_compliance for s in self.step_reports]
        metrics = SessionMetrics.compute(
            c_hard=[s.evaluation.c_hard for s in self.step_reports],
            c_soft=[s.evaluation.c_soft for s in self.step_reports],
            compliance=compliance_series,
            drift=[s.drift.d_total for s in self.step_reports],
            events=self.violation_events,
            weights=self.contract.reliability_weights,
        )

        preconditions_ok = verdict.preconditions_ok
        return SessionReport(
            contract=self.contract.name,
            steps=tuple(self.step_reports),
            events=tuple(self._events),
            violations=tuple(self.violation_events),
            metrics=metrics,
            verdict=verdict,
            outcome=outcome,
            preconditions_ok=preconditions_ok,
            excluded_steps=trace.length - steps_run,
        )


def run_session(contract: Contract, trace: ExecutionTrace,
                hook: Optional[RecoveryHook] = None,
                listeners: Sequence[Callable[[MonitorEvent], None]] = (),
                attempts_per_step: Optional[int] = 1,
                boundaries: Optional[Sequence[int]] = None) -> SessionReport:
    """Replay a trace through the monitor and return the session report.

    Deterministic given (contract, trace, hook behavior).  An empty trace
    (one state, zero actions) yields a report with the precondition
    verdict only.
    """
    monitor = SessionMonitor(contract, hook=hook, listeners=listeners,
                             attempts_per_step=attempts_per_step,
                             boundaries=boundaries, trace_length=trace.length)
    for t in range(trace.length):
        if monitor.terminated:
            break
        monitor.step(trace.states[t], trace.actions[t])
    return monitor.finalize(trace)


# ---------------------------------------------------------------------------
# (p, delta, k) verdicts over session ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PdkVerdict:
    """Probabilistic satisfaction over an ensemble of sessions."""

    holds: bool
    hard_frequency: float
    soft_frequency: float
    p: float
    delta: float
    k: int
    sessions: int
    excluded: int
    hard_counterexamples: tuple
    soft_counterexamples: tuple

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "hard_frequency": self.hard_frequency,
            "soft_frequency": self.soft_frequency,
            "p": self.p, "delta": self.delta, "k": self.k,
            "sessions": self.sessions,
            "excluded": self.excluded,
            "hard_counterexamples": list(self.hard_counterexamples),
            "soft_counterexamples": list(self.soft_counterexamples),
        }


def _soft_recovers(series: Sequence[float], delta: float, k: int) -> bool:
    last = len(series) - 1
    threshold = 1.0 - delta
    for t, value in enumerate(series):
        if value < threshold:
            end = min(t + k, last)
            if not any(series[u] >= threshold for u in range(t, end + 1)):
                return False
    return True


def pdk_verdict(contract: Contract, sessions: Sequence[SessionReport],
                params: Optional[SatisfactionParams] = None) -> PdkVerdict:
    """Check the (p, delta, k) guarantee over an ensemble of sessions.

    Hard guarantee: the fraction of sessions with C_hard(t) = 1 at every
    step must reach p.  Soft guarantee: the fraction of sessions where
    every dip of C_soft below 1 - delta recovers within k steps must reach
    p.  Sessions whose preconditions failed are excluded from the ensemble
    (their count is reported).
    """
    if params is None:
        params = contract.satisfaction
    if not sessions:
        raise EmptyEnsemble("no sessions supplied")
    usable = [(i, s) for i, s in enumerate(sessions) if s.preconditions_ok]
    excluded = len(sessions) - len(usable)
    if not usable:
        raise EmptyEnsemble("every session failed its preconditions")

    hard_bad = tuple(i for i, s in usable
                     if any(c < 1.0 for c in s.c_hard_series))
    soft_bad = tuple(i for i, s in usable
                     if not _soft_recovers(s.c_soft_series, params.delta, params.k))
    n = len(usable)
    hard_frequency = (n - len(hard_bad)) / n
    soft_frequency = (n - len(soft_bad)) / n
    return PdkVerdict(
        holds=hard_frequency >= params.p and soft_frequency >= params.p,
        hard_frequency=hard_frequency,
        soft_frequency=soft_frequency,
        p=params.p, delta=params.delta, k=params.k,
        sessions=n, excluded=excluded,
        hard_counterexamples=hard_bad,
        soft_counterexamples=soft_bad,
    )
