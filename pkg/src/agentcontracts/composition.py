"""Serial contract composition: composed contracts, the four composition
conditions, probabilistic chain bounds, and phase-scoped trace verification.

A composed contract keeps the upstream preconditions, unions both agents'
invariants (each phase-scoped to its own stage) with the handoff invariant
(scoped to the boundary state), unions governance constraints globally
(they are checked throughout the chain), merges recovery strategies under
a cascade policy, and takes the maximum of the two recovery windows.

The semantic conditions (assumption discharge C2, recovery independence
C4) are checked extensionally over supplied witness states; the logical
implication they stand for is undecidable for the expression language, so
witness corpora travel with the benchmark scenarios.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence, Tuple

from .engine import (
    SatisfactionVerdict,
    check_deterministic,
    constraint_timelines,
    evaluate_constraint,
    scope_active,
)
from .errors import BadBoundaries, InsufficientSamples
from .model import (
    MISSING,
    ActionRecord,
    Constraint,
    Contract,
    ExecutionTrace,
    SatisfactionParams,
    StateDict,
    is_number,
    resolve_path,
)

__all__ = [
    "HandoffSpec",
    "ChainSpec",
    "ChainBounds",
    "ConditionReport",
    "ConditionResult",
    "compose_contracts",
    "compose_chain",
    "check_conditions",
    "chain_bounds",
    "verify_chain_trace",
    "stage_count",
]


@dataclass(frozen=True)
class HandoffSpec:
    """Boundary requirements between two chained agents."""

    invariants: tuple = ()
    type_map: Mapping[str, str] = field(default_factory=dict)
    p_h: float = 1.0
    delta_h: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "invariants", tuple(self.invariants))
        object.__setattr__(self, "type_map", dict(self.type_map))
        if not (0.0 <= self.p_h <= 1.0 and 0.0 <= self.delta_h <= 1.0):
            raise ValueError("p_h and delta_h must lie in [0, 1]")


@dataclass(frozen=True)
class ChainSpec:
    """Per-agent and per-handoff reliability numbers for an N-agent chain."""

    p_agents: tuple
    delta_agents: tuple
    p_handoffs: tuple = ()
    delta_handoffs: tuple = ()
    conditional_independence_assumed: bool = True

    def __post_init__(self):
        for name in ("p_agents", "delta_agents", "p_handoffs", "delta_handoffs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        n = len(self.p_agents)
        if n < 1 or len(self.delta_agents) != n:
            raise ValueError("need p and delta for every agent")
        if len(self.p_handoffs) != n - 1 or len(self.delta_handoffs) != n - 1:
            raise ValueError(f"a {n}-agent chain has {n - 1} handoffs")

    @classmethod
    def uniform(cls, n: int, p: float, delta: float, p_h: float, delta_h: float,
                conditional_independence_assumed: bool = True) -> "ChainSpec":
        return cls(p_agents=(p,) * n, delta_agents=(delta,) * n,
                   p_handoffs=(p_h,) * (n - 1), delta_handoffs=(delta_h,) * (n - 1),
                   conditional_independence_assumed=conditional_independence_assumed)

    @classmethod
    def from_pipeline(cls, pipeline, conditional_independence_assumed: bool = True) -> "ChainSpec":
        """Read per-agent (p, delta) from stage contracts and handoff
        reliabilities from the pipeline document."""
        return cls(
            p_agents=tuple(s.contract.satisfaction.p for s in pipeline.stages),
            delta_agents=tuple(s.contract.satisfaction.delta for s in pipeline.stages),
            p_handoffs=tuple(h.p_h for h in pipeline.handoffs),
            delta_handoffs=tuple(h.delta_h for h in pipeline.handoffs),
            conditional_independence_assumed=conditional_independence_assumed,
        )


@dataclass(frozen=True)
class ChainBounds:
    """End-to-end chain guarantees."""

    p_chain_lower: float
    delta_chain_upper: float
    p_frechet_lower: float
    conditional_independence_assumed: bool = True

    def to_dict(self) -> dict:
        return {
            "p_chain_lower": self.p_chain_lower,
            "delta_chain_upper": self.delta_chain_upper,
            "p_frechet_lower": self.p_frechet_lower,
            "conditional_independence_assumed": self.conditional_independence_assumed,
        }


@dataclass(frozen=True)
class ConditionResult:
    passed: bool
    witnesses: tuple = ()
    checked: int = 0

    def to_dict(self) -> dict:
        return {"passed": self.passed, "witnesses": [list(w) for w in self.witnesses],
                "checked": self.checked}


@dataclass(frozen=True)
class ConditionReport:
    """Pass/fail plus concrete witnesses for each composition condition."""

    c1_interface: ConditionResult
    c2_assumptions: ConditionResult
    c3_governance: ConditionResult
    c4_recovery: ConditionResult

    @property
    def all_pass(self) -> bool:
        return (self.c1_interface.passed and self.c2_assumptions.passed
                and self.c3_governance.passed and self.c4_recovery.passed)

    def to_dict(self) -> dict:
        return {
            "C1": self.c1_interface.to_dict(),
            "C2": self.c2_assumptions.to_dict(),
            "C3": self.c3_governance.to_dict(),
            "C4": self.c4_recovery.to_dict(),
            "all_pass": self.all_pass,
        }


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def stage_count(contract: Contract) -> int:
    """Number of stages a (possibly composed) contract spans."""
    best = 0
    for con in contract.all_constraints():
        if con.scope and con.scope.startswith("stage:"):
            best = max(best, int(con.scope.split(":", 1)[1]) + 1)
        elif con.scope and con.scope.startswith("handoff:"):
            best = max(best, int(con.scope.split(":", 1)[1]) + 2)
    return max(best, 1)


def _shift_scope(scope: Optional[str], stage_offset: int, default_stage: int) -> str:
    if scope is None:
        return f"stage:{default_stage}"
    kind, _, num = scope.partition(":")
    return f"{kind}:{int(num) + stage_offset}"


def _rename_collisions(groups: Sequence[Tuple[str, list]]) -> dict:
    """groups: (owner prefix, list of named items).  Returns mapping
    id(item) -> new name, prefixing every name that appears in more than
    one group."""
    counts: dict = {}
    for _, items in groups:
        for item in items:
            counts[item.name] = counts.get(item.name, 0) + 1
    renames: dict = {}
    for prefix, items in groups:
        for item in items:
            renames[id(item)] = f"{prefix}.{item.name}" if counts[item.name] > 1 else item.name
    return renames


def compose_contracts(a: Contract, b: Contract, h: HandoffSpec) -> Contract:
    """Compose two agent contracts across a handoff.

    Invariants from each side are phase-scoped; handoff invariants bind at
    the boundary state; governance is a global union (C3 conflicts are
    surfaced by :func:`check_conditions`, not here); the composed recovery
    window is max(k_a, k_b) and the composed (p, delta) follow the
    probabilistic composition bounds.  Duplicate constraint or strategy
    names across the two sides are prefixed by their agent's name.
    """
    n_a = stage_count(a)

    a_cons = list(a.all_constraints())
    b_cons = list(b.all_constraints())
    h_cons = list(h.invariants)
    renames = _rename_collisions([(a.name, a_cons), (b.name, b_cons),
                                  ("handoff", h_cons)])
    a_strats = list(a.recovery_strategies)
    b_strats = list(b.recovery_strategies)
    strategy_renames = _rename_collisions([(a.name, a_strats), (b.name, b_strats)])

    def rebuild(con: Constraint, side: str) -> Constraint:
        if side == "a":
            scope = _shift_scope(con.scope, 0, 0)
        elif side == "b":
            scope = _shift_scope(con.scope, n_a, n_a)
        else:
            scope = f"handoff:{n_a - 1}"
        recovery = con.recovery
        if recovery is not None and side in ("a", "b"):
            owner = a if side == "a" else b
            for s in owner.recovery_strategies:
                if s.name == recovery:
                    recovery = strategy_renames[id(s)]
                    break
        return replace(con, name=renames[id(con)], scope=scope, recovery=recovery)

    def rebuild_strategy(s, owner_strats):
        fallback = s.fallback
        if fallback is not None:
            for other in owner_strats:
                if other.name == fallback:
                    fallback = strategy_renames[id(other)]
                    break
        return replace(s, name=strategy_renames[id(s)], fallback=fallback)

    sat_a, sat_b = a.satisfaction, b.satisfaction
    composed_sat = SatisfactionParams(
        p=sat_a.p * sat_b.p * h.p_h,
        delta=min(1.0, sat_a.delta + sat_b.delta + h.delta_h),
        k=max(sat_a.k, sat_b.k),
        T=None,
    )

    return Contract(
        name=f"{a.name}+{b.name}",
        kind="agent",
        preconditions=tuple(replace(c, name=renames[id(c)]) for c in a.preconditions),
        invariants_hard=tuple(
            [rebuild(c, "a") for c in a.invariants_hard]
            + [rebuild(c, "b") for c in b.invariants_hard]
            + [rebuild(c, "h") for c in h_cons if c.severity == "hard"]),
        invariants_soft=tuple(
            [rebuild(c, "a") for c in a.invariants_soft]
            + [rebuild(c, "b") for c in b.invariants_soft]
            + [rebuild(c, "h") for c in h_cons if c.severity == "soft"]),
        governance_hard=tuple(
            [replace(c, name=renames[id(c)]) for c in a.governance_hard]
            + [replace(c, name=renames[id(c)]) for c in b.governance_hard]),
        governance_soft=tuple(
            [replace(c, name=renames[id(c)]) for c in a.governance_soft]
            + [replace(c, name=renames[id(c)]) for c in b.governance_soft]),
        recovery_strategies=tuple(
            [rebuild_strategy(s, a_strats) for s in a_strats]
            + [rebuild_strategy(s, b_strats) for s in b_strats]),
        satisfaction=composed_sat,
        drift_config=a.drift_config,
        reliability_weights=a.reliability_weights,
    )


def compose_chain(contracts: Sequence[Contract], handoffs: Sequence[HandoffSpec]) -> Contract:
    """Left-fold pairwise composition over an N-agent chain."""
    if len(contracts) < 1:
        raise ValueError("need at least one contract")
    if len(handoffs) != len(contracts) - 1:
        raise ValueError(f"{len(contracts)} stages need {len(contracts) - 1} handoffs")
    composed = contracts[0]
    for nxt, h in zip(contracts[1:], handoffs):
        composed = compose_contracts(composed, nxt, h)
    return composed


# ---------------------------------------------------------------------------
# Composition conditions C1-C4
# ---------------------------------------------------------------------------

_KIND_OF_OPERATOR = {
    "lt": "number", "le": "number", "gt": "number", "ge": "number",
    "range": "number", "matches": "string",
}


def _scalar_kind(value) -> Optional[str]:
    if isinstance(value, bool):
        return "boolean"
    if is_number(value):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, (list, tuple)):
        return "list"
    return None


def _expected_kind(b: Contract, path: str) -> Optional[str]:
    """Scalar kind B's preconditions require of an input field, if any."""
    for con in b.preconditions:
        check = con.check
        if check.is_expression() or check.field_path != path:
            continue
        kind = _KIND_OF_OPERATOR.get(check.operator)
        if kind:
            return kind
        if check.operator in ("eq", "ne"):
            return _scalar_kind(check.operand)
        if check.operator in ("in", "not_in") and check.operand:
            return _scalar_kind(check.operand[0])
    return None


def _holds(constraints: Sequence[Constraint], state: StateDict,
           target: str = "state", action: Optional[ActionRecord] = None) -> bool:
    return all(evaluate_constraint(c, state, action, target=target).satisfied is True
               for c in constraints)


def check_conditions(a: Contract, b: Contract, h: HandoffSpec,
                     samples: Sequence[StateDict],
                     actions: Sequence[ActionRecord] = (),
                     recovery_transform: Optional[Callable[[StateDict], StateDict]] = None,
                     ) -> ConditionReport:
    """Check the four composition conditions over witness corpora.

    C1 (interface compatibility): every upstream path in the handoff type
    map resolves in every sample with the scalar kind B's preconditions
    expect of the mapped input path.  C2 (assumption discharge): samples
    satisfying PostCond_A and the handoff invariant must satisfy P_B.  C3
    (governance consistency): no corpus action (nor symbolically derived
    same-field witness value) is allowed by G_A yet prohibited by G_B.  C4
    (recovery independence): applying A's recovery transform to a sample
    must leave P_B satisfied (identity transform when none is registered).
    """
    if not samples:
        raise InsufficientSamples("C2/C4 are semantic checks and need witness states")

    # C1 -- interface compatibility over the type map.
    c1_witnesses = []
    for i, sample in enumerate(samples):
        for upstream, downstream in sorted(h.type_map.items()):
            value = resolve_path(sample, upstream)
            if value is MISSING:
                c1_witnesses.append((i, upstream, "missing in upstream output"))
                continue
            kind = _scalar_kind(value)
            if kind is None:
                c1_witnesses.append((i, upstream, f"unsupported value type {type(value).__name__}"))
                continue
            expected = _expected_kind(b, downstream)
            if expected is not None and kind != expected:
                c1_witnesses.append(
                    (i, upstream, f"kind {kind} incompatible with {downstream} ({expected})"))
    c1 = ConditionResult(passed=not c1_witnesses, witnesses=tuple(c1_witnesses),
                         checked=len(samples) * len(h.type_map))

    # C2 -- assumption discharge on samples passing the antecedent.
    c2_witnesses = []
    c2_checked = 0
    for i, sample in enumerate(samples):
        if not (_holds(a.invariants(), sample) and _holds(h.invariants, sample)):
            continue
        c2_checked += 1
        for con in b.preconditions:
            if evaluate_constraint(con, sample, None, target="state").satisfied is not True:
                c2_witnesses.append((i, con.name))
    c2 = ConditionResult(passed=not c2_witnesses, witnesses=tuple(c2_witnesses),
                         checked=c2_checked)

    # C3 -- governance consistency: corpus pass, then symbolic fast path.
    c3_witnesses = []
    for action in actions:
        allowed_by_a = _holds(a.governance(), {}, target="action", action=action)
        prohibited_by_b = any(
            evaluate_constraint(g, {}, action, target="action").satisfied is False
            for g in b.governance())
        if allowed_by_a and prohibited_by_b:
            c3_witnesses.append(("action", action.label))
    for witness in _symbolic_governance_conflicts(a, b):
        c3_witnesses.append(witness)
    c3 = ConditionResult(passed=not c3_witnesses, witnesses=tuple(c3_witnesses),
                         checked=len(actions))

    # C4 -- recovery independence.
    transform = recovery_transform or (lambda s: s)
    c4_witnesses = []
    for i, sample in enumerate(samples):
        after = transform(sample)
        for con in b.preconditions:
            if evaluate_constraint(con, after, None, target="state").satisfied is not True:
                c4_witnesses.append((i, con.name))
    c4 = ConditionResult(passed=not c4_witnesses, witnesses=tuple(c4_witnesses),
                         checked=len(samples))

    return ConditionReport(c1_interface=c1, c2_assumptions=c2,
                           c3_governance=c3, c4_recovery=c4)


def _candidate_values(predicate) -> list:
    if predicate.operator == "eq":
        return [predicate.operand]
    if predicate.operator == "in":
        return list(predicate.operand)
    if predicate.operator == "range":
        lo, hi = float(predicate.operand[0]), float(predicate.operand[1])
        return [lo, (lo + hi) / 2.0, hi]
    return []


def _symbolic_governance_conflicts(a: Contract, b: Contract) -> list:
    """Same-field conflicts provable from eq/in/range operand structure:
    a value permitted by all of A's predicates on a field yet rejected by
    one of B's predicates on that field."""
    from .engine import _apply_operator  # shared operator semantics

    witnesses = []
    a_preds = [c for c in a.governance()
               if not c.check.is_expression() and c.check.operator in ("eq", "in", "range")]
    for ga in a_preds:
        field_path = ga.check.field_path
        same_field_a = [c.check for c in a.governance()
                        if not c.check.is_expression() and c.check.field_path == field_path]
        b_preds = [c for c in b.governance()
                   if not c.check.is_expression() and c.check.field_path == field_path]
        if not b_preds:
            continue
        for value in _candidate_values(ga.check):
            try:
                if not all(_apply_operator(p.operator, value, p.operand) for p in same_field_a):
                    continue
                for gb in b_preds:
                    if not _apply_operator(gb.check.operator, value, gb.check.operand):
                        witnesses.append(("value", field_path, value, gb.name))
            except Exception:
                continue  # incomparable operand kinds: leave to the corpus pass
    # Deduplicate while keeping deterministic order.
    seen = set()
    unique = []
    for w in witnesses:
        key = repr(w)
        if key not in seen:
            seen.add(key)
            unique.append(w)
    return unique


# ---------------------------------------------------------------------------
# Probabilistic chain bounds
# ---------------------------------------------------------------------------

def chain_bounds(spec: ChainSpec) -> ChainBounds:
    """End-to-end bounds for a serial chain.

    Reliability multiplies (product of agent and handoff probabilities);
    deviation adds (sum of per-stage deltas, capped at 1).  The
    Frechet--Hoeffding fold p >= p_left + p_next * p_h - 1 (floored at 0,
    applied left-associatively) is the conservative alternative for
    correlated stages; it is reported alongside and highlighted when
    conditional independence is not assumed.
    """
    p_chain = 1.0
    for p in spec.p_agents:
        p_chain *= p
    for p in spec.p_handoffs:
        p_chain *= p

    delta_chain = min(1.0, sum(spec.delta_agents) + sum(spec.delta_handoffs))

    p_frechet = spec.p_agents[0]
    for p_next, p_h in zip(spec.p_agents[1:], spec.p_handoffs):
        p_frechet = max(0.0, p_frechet + p_next * p_h - 1.0)

    return ChainBounds(
        p_chain_lower=p_chain,
        delta_chain_upper=delta_chain,
        p_frechet_lower=p_frechet,
        conditional_independence_assumed=spec.conditional_independence_assumed,
    )


# ---------------------------------------------------------------------------
# Phase-scoped trace verification
# ---------------------------------------------------------------------------

def verify_chain_trace(composed: Contract, trace: ExecutionTrace,
                       boundaries: Sequence[int]) -> SatisfactionVerdict:
    """Deterministic satisfaction of a composed contract over a chain trace.

    ``boundaries`` are ascending state indices where each handoff occurs:
    stage j's invariants are enforced between its surrounding boundaries
    (boundary states belong to both adjacent stages), the handoff
    invariant at the boundary state only, and the governance union over
    every action.  Equivalent to :func:`check_deterministic` with
    phase-scoped constraint timelines.
    """
    n_stages = stage_count(composed)
    boundaries = tuple(boundaries)
    if len(boundaries) != n_stages - 1:
        raise BadBoundaries(
            f"{n_stages}-stage contract needs {n_stages - 1} boundaries, got {len(boundaries)}")
    last = trace.length
    if any(not (0 <= idx <= last) for idx in boundaries):
        raise BadBoundaries(f"boundary indices must lie in [0, {last}]")
    if any(boundaries[i] >= boundaries[i + 1] for i in range(len(boundaries) - 1)):
        raise BadBoundaries("boundary indices must be strictly increasing")

    active = lambda con, idx: scope_active(con.scope, idx, boundaries, last)
    timelines = constraint_timelines(composed, trace, active=active)
    return check_deterministic(composed, trace, timelines=timelines)
