"""Core domain model: contracts, constraints, traces, and configuration.

All types here are immutable value objects (frozen dataclasses with tuple
fields) and can be shared freely between threads.  Nested state is carried
as plain dicts restricted to JSON-expressible scalars, lists, and maps;
the library never mutates a state dict it is handed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Optional

__all__ = [
    "StateDict",
    "ActionRecord",
    "ExecutionTrace",
    "Predicate",
    "Constraint",
    "RecoveryStrategy",
    "SatisfactionParams",
    "DriftConfig",
    "ReliabilityWeights",
    "Contract",
    "StructuralIssue",
    "validate_contract",
    "OTHER_LABEL",
    "FIELD_OPERATORS",
    "RECOVERY_TYPES",
    "SUGGESTED_CATEGORIES",
]

# State dictionaries are nested string-keyed maps of JSON-style values.
StateDict = Mapping[str, Any]

#: Reserved histogram bucket for action labels outside the configured
#: vocabulary.  Present in both observed and reference supports.
OTHER_LABEL = "__other__"

FIELD_OPERATORS = (
    "eq", "ne", "lt", "le", "gt", "ge",
    "in", "not_in", "matches", "range", "exists",
)

RECOVERY_TYPES = (
    "emit_event",
    "prompt_adjust",
    "re_prompt",
    "reduce_autonomy",
    "escalate_human",
    "terminate_session",
)

#: The governance category taxonomy is open-ended; these five are the
#: documented suggestions.  Anything else parses with a warning.
SUGGESTED_CATEGORIES = (
    "resource management",
    "data protection",
    "action boundaries",
    "escalation",
    "regulatory compliance",
)

ON_MISSING_POLICIES = ("violate", "satisfy", "skip")

_WEIGHT_SUM_TOL = 1e-12
_DIST_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ActionRecord:
    """One agent action: a vocabulary label plus the payload fields
    governance predicates read."""

    label: str
    payload: StateDict = field(default_factory=dict)

    def view(self) -> dict:
        """Mapping governance predicates resolve against (label + payload)."""
        merged = dict(self.payload)
        merged.setdefault("label", self.label)
        return merged


@dataclass(frozen=True)
class ExecutionTrace:
    """Alternating states and actions: states s_0..s_T, actions a_0..a_{T-1}."""

    states: tuple
    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        if len(self.states) != len(self.actions) + 1:
            raise ValueError(
                f"trace needs |states| = |actions| + 1, got "
                f"{len(self.states)} states / {len(self.actions)} actions"
            )
        for a in self.actions:
            if not isinstance(a, ActionRecord) or not a.label:
                raise ValueError("every action needs a non-empty label")

    @property
    def length(self) -> int:
        """Number of steps T (actions)."""
        return len(self.actions)

    @staticmethod
    def from_dict(doc: Mapping) -> "ExecutionTrace":
        """Build a trace from the JSON wire shape
        {"states": [...], "actions": [{"label", "payload"?}, ...]}."""
        states = tuple(doc.get("states", ()))
        actions = tuple(
            ActionRecord(label=a["label"], payload=a.get("payload", {}))
            for a in doc.get("actions", ())
        )
        return ExecutionTrace(states=states, actions=actions)

    def to_dict(self) -> dict:
        return {
            "states": [dict(s) for s in self.states],
            "actions": [{"label": a.label, "payload": dict(a.payload)} for a in self.actions],
        }


@dataclass(frozen=True)
class Predicate:
    """A single check: either a structured (field, operator, operand)
    triple or a compiled sandbox expression.

    Exactly one of ``field_path`` and ``expression`` is set.  ``matches``
    uses search semantics (the pattern may hit anywhere in the string).
    """

    field_path: Optional[str] = None
    operator: Optional[str] = None
    operand: Any = None
    expression: Optional[object] = None  # ExprAst; opaque here
    expression_src: Optional[str] = None

    def is_expression(self) -> bool:
        return self.expression is not None

    def describe(self) -> str:
        if self.is_expression():
            return self.expression_src or "<expr>"
        return f"{self.field_path} {self.operator} {self.operand!r}"


@dataclass(frozen=True)
class Constraint:
    """A named behavioral constraint.

    ``severity`` is "hard" (zero tolerance) or "soft" (recoverable);
    ``weight`` feeds the weighted compliance gap; ``recovery`` names a
    strategy and is only legal on soft constraints.  ``on_missing``
    decides what an unresolvable field means: violate (default),
    satisfy, or skip (excluded from that step's scores).  ``scope`` is
    set by composition to phase-restrict the constraint
    ("stage:<i>" / "handoff:<j>"); plain contracts leave it None.
    """

    name: str
    check: Predicate
    severity: str = "soft"
    category: Optional[str] = None
    weight: float = 1.0
    recovery: Optional[str] = None
    on_missing: str = "violate"
    scope: Optional[str] = None


@dataclass(frozen=True)
class RecoveryStrategy:
    """A corrective strategy with an attempt budget and optional fallback."""

    name: str
    type: str
    action: Any = None
    max_attempts: int = 3
    fallback: Optional[str] = None


@dataclass(frozen=True)
class SatisfactionParams:
    """(p, delta, k) guarantee parameters, plus optional session length T."""

    p: float = 0.9
    delta: float = 0.1
    k: int = 2
    T: Optional[int] = None


@dataclass(frozen=True)
class DriftConfig:
    """Drift score configuration: component weights, sliding window,
    action vocabulary with its reference distribution, alert thresholds."""

    w_c: float = 0.7
    w_d: float = 0.3
    window: int = 10
    vocabulary: tuple = ()
    reference: Mapping[str, float] = field(default_factory=dict)
    theta1: float = 0.05
    theta2: float = 0.30

    def __post_init__(self):
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "reference", dict(self.reference))


@dataclass(frozen=True)
class ReliabilityWeights:
    """Weights of the four reliability-index components (sum to 1)."""

    a1: float = 0.4
    a2: float = 0.3
    a3: float = 0.2
    a4: float = 0.1


@dataclass(frozen=True)
class Contract:
    """A full behavioral contract for one agent (or a composed chain)."""

    name: str
    kind: str = "agent"
    preconditions: tuple = ()
    invariants_hard: tuple = ()
    invariants_soft: tuple = ()
    governance_hard: tuple = ()
    governance_soft: tuple = ()
    recovery_strategies: tuple = ()
    satisfaction: SatisfactionParams = field(default_factory=SatisfactionParams)
    drift_config: DriftConfig = field(default_factory=DriftConfig)
    reliability_weights: ReliabilityWeights = field(default_factory=ReliabilityWeights)

    def __post_init__(self):
        for f in ("preconditions", "invariants_hard", "invariants_soft",
                  "governance_hard", "governance_soft", "recovery_strategies"):
            object.__setattr__(self, f, tuple(getattr(self, f)))

    # -- convenience views ------------------------------------------------

    def all_constraints(self) -> tuple:
        """Every constraint, preconditions included."""
        return (self.preconditions + self.invariants_hard + self.invariants_soft
                + self.governance_hard + self.governance_soft)

    def invariants(self) -> tuple:
        return self.invariants_hard + self.invariants_soft

    def governance(self) -> tuple:
        return self.governance_hard + self.governance_soft

    def hard_constraints(self) -> tuple:
        return self.invariants_hard + self.governance_hard

    def soft_constraints(self) -> tuple:
        return self.invariants_soft + self.governance_soft

    def strategy(self, name: str) -> Optional[RecoveryStrategy]:
        for s in self.recovery_strategies:
            if s.name == name:
                return s
        return None

    def constraint(self, name: str) -> Optional[Constraint]:
        for c in self.all_constraints():
            if c.name == name:
                return c
        return None

    def with_name(self, name: str) -> "Contract":
        return replace(self, name=name)


@dataclass(frozen=True)
class StructuralIssue:
    """One validation finding.  ``severity`` is "error" for invariant
    violations and "warning" for advisories (unreferenced strategy,
    unknown governance category)."""

    element: str
    rule: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"[{self.severity}] {self.element}: {self.message}"


# ---------------------------------------------------------------------------
# Structural validation
# ---------------------------------------------------------------------------

def _issue(element: str, rule: str, message: str, severity: str = "error") -> StructuralIssue:
    return StructuralIssue(element=element, rule=rule, message=message, severity=severity)


def _validate_predicate(name: str, p: Predicate, out: list) -> None:
    if p.is_expression():
        return
    if p.operator not in FIELD_OPERATORS:
        out.append(_issue(name, "unknown-operator",
                          f"operator {p.operator!r} is not one of {FIELD_OPERATORS}"))
        return
    if p.operator == "range":
        ok = (isinstance(p.operand, (list, tuple)) and len(p.operand) == 2
              and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in p.operand)
              and p.operand[0] <= p.operand[1])
        if not ok:
            out.append(_issue(name, "bad-range-operand",
                              "range operand must be [lo, hi] with lo <= hi"))
    elif p.operator == "matches":
        if not isinstance(p.operand, str):
            out.append(_issue(name, "bad-regex-operand", "matches operand must be a string"))
        else:
            try:
                re.compile(p.operand)
            except re.error as exc:
                out.append(_issue(name, "bad-regex-operand", f"invalid regular expression: {exc}"))
    elif p.operator in ("in", "not_in"):
        if not isinstance(p.operand, (list, tuple)):
            out.append(_issue(name, "bad-membership-operand",
                              f"{p.operator} operand must be a list"))


def _fallback_cycle(strategies: Mapping[str, RecoveryStrategy], start: str) -> bool:
    seen = set()
    cur: Optional[str] = start
    while cur is not None:
        if cur in seen:
            return True
        seen.add(cur)
        nxt = strategies.get(cur)
        cur = nxt.fallback if nxt else None
    return False


def validate_contract(c: Contract) -> list:
    """Check every structural invariant of the contract.

    Returns a deterministic list of :class:`StructuralIssue`, sorted by
    element name then rule.  Empty iff all invariants hold (warnings such
    as an unreferenced strategy do not count against validity but are
    included with severity "warning").
    """
    issues: list = []

    if c.kind not in ("agent", "pipeline"):
        issues.append(_issue(c.name, "bad-kind", f"kind must be agent or pipeline, got {c.kind!r}"))

    # Constraint-level rules.
    names_seen: dict = {}
    strategy_names = {s.name: s for s in c.recovery_strategies}
    for con in c.all_constraints():
        if con.name in names_seen:
            issues.append(_issue(con.name, "duplicate-name",
                                 "constraint names must be unique within a contract"))
        names_seen[con.name] = True
        if not (isinstance(con.weight, (int, float)) and con.weight > 0):
            issues.append(_issue(con.name, "nonpositive-weight", "weight must be > 0"))
        if con.severity not in ("hard", "soft"):
            issues.append(_issue(con.name, "bad-severity",
                                 f"severity must be hard or soft, got {con.severity!r}"))
        if con.severity == "hard" and con.recovery is not None:
            issues.append(_issue(con.name, "hard-with-recovery",
                                 "hard constraints carry no recovery reference"))
        if con.recovery is not None and con.recovery not in strategy_names:
            issues.append(_issue(con.name, "unresolved-recovery-reference",
                                 f"recovery strategy {con.recovery!r} is not defined"))
        if con.on_missing not in ON_MISSING_POLICIES:
            issues.append(_issue(con.name, "bad-on-missing",
                                 f"on_missing must be one of {ON_MISSING_POLICIES}"))
        if con.category is not None and con.category not in SUGGESTED_CATEGORIES:
            issues.append(_issue(con.name, "unknown-category",
                                 f"category {con.category!r} is outside the suggested taxonomy",
                                 severity="warning"))
        _validate_predicate(con.name, con.check, issues)

    # Recovery strategies.
    referenced = {con.recovery for con in c.all_constraints() if con.recovery}
    for s in c.recovery_strategies:
        if s.type not in RECOVERY_TYPES:
            issues.append(_issue(s.name, "bad-strategy-type",
                                 f"type must be one of {RECOVERY_TYPES}, got {s.type!r}"))
        if not (isinstance(s.max_attempts, int) and s.max_attempts >= 1):
            issues.append(_issue(s.name, "bad-max-attempts", "max_attempts must be >= 1"))
        if s.fallback is not None and s.fallback not in strategy_names:
            issues.append(_issue(s.name, "unresolved-fallback-reference",
                                 f"fallback strategy {s.fallback!r} is not defined"))
        elif _fallback_cycle(strategy_names, s.name):
            issues.append(_issue(s.name, "cyclic-fallback-chain",
                                 "fallback chain must be acyclic"))
        if s.name not in referenced:
            issues.append(_issue(s.name, "unreferenced-strategy",
                                 "strategy is not referenced by any constraint",
                                 severity="warning"))
    # Chains reaching via fallback count as referenced, so demote those warnings.
    reachable = set()
    for ref in referenced:
        cur: Optional[str] = ref
        seen: set = set()
        while cur is not None and cur not in seen:
            seen.add(cur)
            reachable.add(cur)
            nxt = strategy_names.get(cur)
            cur = nxt.fallback if nxt else None
    issues = [i for i in issues
              if not (i.rule == "unreferenced-strategy" and i.element in reachable)]

    # Satisfaction parameters.
    sp = c.satisfaction
    if not (0.0 <= sp.p <= 1.0):
        issues.append(_issue("satisfaction", "p-out-of-range", f"p must be in [0,1], got {sp.p}"))
    if not (0.0 <= sp.delta <= 1.0):
        issues.append(_issue("satisfaction", "delta-out-of-range",
                             f"delta must be in [0,1], got {sp.delta}"))
    if not (isinstance(sp.k, int) and sp.k >= 0):
        issues.append(_issue("satisfaction", "bad-recovery-window",
                             f"k must be a non-negative integer, got {sp.k!r}"))
    if sp.T is not None and not (isinstance(sp.T, int) and sp.T >= 0):
        issues.append(_issue("satisfaction", "bad-session-length",
                             f"T must be a non-negative integer, got {sp.T!r}"))

    # Drift configuration.
    dc = c.drift_config
    if dc.w_c < 0 or dc.w_d < 0 or abs(dc.w_c + dc.w_d - 1.0) > _WEIGHT_SUM_TOL:
        issues.append(_issue("drift", "bad-component-weights",
                             f"w_c + w_d must equal 1 with w_c, w_d >= 0, got ({dc.w_c}, {dc.w_d})"))
    if not (isinstance(dc.window, int) and dc.window >= 1):
        issues.append(_issue("drift", "bad-window", f"window must be >= 1, got {dc.window!r}"))
    if not (0.0 <= dc.theta1 <= 1.0 and 0.0 <= dc.theta2 <= 1.0 and dc.theta1 < dc.theta2):
        issues.append(_issue("drift", "bad-thresholds",
                             f"need 0 <= theta1 < theta2 <= 1, got ({dc.theta1}, {dc.theta2})"))
    if dc.vocabulary:
        if len(set(dc.vocabulary)) != len(dc.vocabulary):
            issues.append(_issue("drift", "duplicate-vocabulary", "vocabulary labels must be unique"))
        if OTHER_LABEL in dc.vocabulary:
            issues.append(_issue("drift", "reserved-label",
                                 f"{OTHER_LABEL} is reserved for out-of-vocabulary actions"))
        extra = set(dc.reference) - set(dc.vocabulary) - {OTHER_LABEL}
        if extra:
            issues.append(_issue("drift", "reference-outside-vocabulary",
                                 f"reference mass on labels outside vocabulary: {sorted(extra)}"))
        total = sum(dc.reference.get(v, 0.0) for v in dc.vocabulary)
        if any(dc.reference.get(v, 0.0) < 0 for v in dc.vocabulary) or abs(total - 1.0) > _DIST_SUM_TOL:
            issues.append(_issue("drift", "reference-not-normalized",
                                 f"reference must be a distribution over the vocabulary (sums to {total})"))

    # Reliability weights.
    rw = c.reliability_weights
    ws = (rw.a1, rw.a2, rw.a3, rw.a4)
    if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > _WEIGHT_SUM_TOL:
        issues.append(_issue("reliability", "bad-weights",
                             f"a1..a4 must be non-negative and sum to 1, got {ws}"))

    issues.sort(key=lambda i: (i.element, i.rule))
    return issues


def resolve_path(mapping: Mapping, path: str):
    """Resolve a dot-separated key path inside a nested mapping.

    Raises KeyError (via a sentinel check in callers) by returning a
    module-level MISSING marker; kept exception-free because missing
    fields are an expected, policy-governed case.
    """
    cur: Any = mapping
    for part in path.split("."):
        if isinstance(cur, Mapping) and part in cur:
            cur = cur[part]
        else:
            return MISSING
    return cur


class _Missing:
    __slots__ = ()

    def __repr__(self):  # pragma: no cover
        return "<missing>"


MISSING = _Missing()


def is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(float(v))
