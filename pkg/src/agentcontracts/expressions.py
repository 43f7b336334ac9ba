"""Sandboxed expression language for cross-field constraint checks.

Expressions compile to a closed AST of literals, dotted field references,
unary not/neg, the usual arithmetic/comparison/boolean binary operators,
``in``, and four whitelisted functions (len, abs, min, max).  There are no
loops, definitions, attribute access on values, or other calls, so the
language is not Turing-complete by construction.  Compilation is
state-independent; evaluation resolves field references against a merged
view of the step state and the action payload.
"""

from __future__ import annotations

import ast as _pyast
from dataclasses import dataclass
from typing import Any, Optional, Union

from .errors import ExprSyntaxError, FieldResolutionError, ForbiddenConstruct, TypeMismatch
from .model import MISSING, ActionRecord, StateDict, is_number, resolve_path

__all__ = ["ExprAst", "Lit", "Field", "Unary", "Binary", "Call",
           "compile_expression", "eval_expression", "MAX_DEPTH"]

MAX_DEPTH = 64

WHITELISTED_FUNCTIONS = ("len", "abs", "min", "max")

BINARY_OPS = ("+", "-", "*", "/", "<", "<=", ">", ">=", "==", "!=", "and", "or", "in")
UNARY_OPS = ("not", "neg")


@dataclass(frozen=True)
class Lit:
    value: Union[float, str, bool]


@dataclass(frozen=True)
class Field:
    path: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "ExprAst"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


ExprAst = Union[Lit, Field, Unary, Binary, Call]


_CMP_OPS = {
    _pyast.Lt: "<", _pyast.LtE: "<=", _pyast.Gt: ">", _pyast.GtE: ">=",
    _pyast.Eq: "==", _pyast.NotEq: "!=", _pyast.In: "in",
}
_BIN_OPS = {_pyast.Add: "+", _pyast.Sub: "-", _pyast.Mult: "*", _pyast.Div: "/"}


def _dotted_path(node: _pyast.AST) -> Optional[str]:
    """Recover "a.b.c" from an Attribute chain rooted at a Name."""
    parts = []
    cur = node
    while isinstance(cur, _pyast.Attribute):
        parts.append(cur.attr)
        cur = cur.value
    if isinstance(cur, _pyast.Name):
        parts.append(cur.id)
        return ".".join(reversed(parts))
    return None


def _convert(node: _pyast.AST, depth: int) -> ExprAst:
    if depth > MAX_DEPTH:
        raise ForbiddenConstruct(f"expression nesting exceeds depth {MAX_DEPTH}")

    if isinstance(node, _pyast.Constant):
        v = node.value
        if isinstance(v, bool) or isinstance(v, str):
            return Lit(v)
        if isinstance(v, (int, float)):
            return Lit(float(v))
        raise ForbiddenConstruct(f"literal of type {type(v).__name__} is not allowed")

    if isinstance(node, _pyast.Name):
        return Field(node.id)

    if isinstance(node, _pyast.Attribute):
        path = _dotted_path(node)
        if path is None:
            raise ForbiddenConstruct("attribute access is only allowed as a dotted field path")
        return Field(path)

    if isinstance(node, _pyast.UnaryOp):
        if isinstance(node.op, _pyast.Not):
            return Unary("not", _convert(node.operand, depth + 1))
        if isinstance(node.op, _pyast.USub):
            return Unary("neg", _convert(node.operand, depth + 1))
        raise ForbiddenConstruct(f"unary operator {type(node.op).__name__} is not allowed")

    if isinstance(node, _pyast.BinOp):
        op = _BIN_OPS.get(type(node.op))
        if op is None:
            raise ForbiddenConstruct(f"operator {type(node.op).__name__} is not allowed")
        return Binary(op, _convert(node.left, depth + 1), _convert(node.right, depth + 1))

    if isinstance(node, _pyast.BoolOp):
        op = "and" if isinstance(node.op, _pyast.And) else "or"
        result = _convert(node.values[0], depth + 1)
        for operand in node.values[1:]:
            result = Binary(op, result, _convert(operand, depth + 1))
        return result

    if isinstance(node, _pyast.Compare):
        # Chained comparisons desugar to an and-chain of pairwise compares.
        left = node.left
        result: Optional[ExprAst] = None
        for op_node, right in zip(node.ops, node.comparators):
            op = _CMP_OPS.get(type(op_node))
            if op is None:
                raise ForbiddenConstruct(f"comparison {type(op_node).__name__} is not allowed")
            pair = Binary(op, _convert(left, depth + 1), _convert(right, depth + 1))
            result = pair if result is None else Binary("and", result, pair)
            left = right
        assert result is not None
        return result

    if isinstance(node, _pyast.Call):
        if not isinstance(node.func, _pyast.Name) or node.func.id not in WHITELISTED_FUNCTIONS:
            raise ForbiddenConstruct(
                f"only {WHITELISTED_FUNCTIONS} may be called"
            )
        if node.keywords:
            raise ForbiddenConstruct("keyword arguments are not allowed")
        args = tuple(_convert(a, depth + 1) for a in node.args)
        if node.func.id in ("len", "abs") and len(args) != 1:
            raise ExprSyntaxError(f"{node.func.id}() takes exactly one argument")
        if node.func.id in ("min", "max") and len(args) < 1:
            raise ExprSyntaxError(f"{node.func.id}() needs at least one argument")
        return Call(node.func.id, args)

    raise ForbiddenConstruct(f"construct {type(node).__name__} is not allowed")


def compile_expression(src: str) -> ExprAst:
    """Compile an expression string into the whitelisted AST.

    Raises ExprSyntaxError for malformed input and ForbiddenConstruct for
    anything outside the grammar (calls, loops, comprehensions, ...).
    """
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("expression must be a non-empty string")
    try:
        tree = _pyast.parse(src, mode="eval")
    except (SyntaxError, ValueError, MemoryError, RecursionError) as exc:
        raise ExprSyntaxError(f"cannot parse expression: {exc}") from None
    return _convert(tree.body, depth=1)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _resolve(path: str, state: StateDict, action: Optional[ActionRecord]):
    if path == "action" or path.startswith("action."):
        if action is None:
            raise FieldResolutionError(path)
        view = action.view()
        if path == "action":
            return view
        value = resolve_path(view, path[len("action."):])
    elif path.startswith("state."):
        value = resolve_path(state, path[len("state."):])
    else:
        value = resolve_path(state, path)
    if value is MISSING:
        raise FieldResolutionError(path)
    return value


def _require_number(v: Any, op: str) -> float:
    if not is_number(v):
        raise TypeMismatch(f"operator {op!r} needs numeric operands, got {type(v).__name__}")
    return float(v)


def _require_bool(v: Any, op: str) -> bool:
    if not isinstance(v, bool):
        raise TypeMismatch(f"operator {op!r} needs boolean operands, got {type(v).__name__}")
    return v


def _eval(node: ExprAst, state: StateDict, action: Optional[ActionRecord]):
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Field):
        return _resolve(node.path, state, action)
    if isinstance(node, Unary):
        v = _eval(node.operand, state, action)
        if node.op == "not":
            return not _require_bool(v, "not")
        return -_require_number(v, "neg")
    if isinstance(node, Binary):
        op = node.op
        if op in ("and", "or"):
            left = _require_bool(_eval(node.left, state, action), op)
            if op == "and" and not left:
                return False
            if op == "or" and left:
                return True
            return _require_bool(_eval(node.right, state, action), op)
        left = _eval(node.left, state, action)
        right = _eval(node.right, state, action)
        if op == "in":
            if not isinstance(right, (list, tuple, str)):
                raise TypeMismatch("'in' needs a list or string on the right")
            if isinstance(right, str) and not isinstance(left, str):
                raise TypeMismatch("'in' over a string needs a string on the left")
            return left in right
        if op in ("==", "!="):
            equal = _value_eq(left, right)
            return equal if op == "==" else not equal
        if op in ("<", "<=", ">", ">="):
            a, b = _require_number(left, op), _require_number(right, op)
            return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]
        a, b = _require_number(left, op), _require_number(right, op)
        if op == "/":
            if b == 0.0:
                raise TypeMismatch("division by zero")
            return a / b
        return {"+": a + b, "-": a - b, "*": a * b}[op]
    if isinstance(node, Call):
        args = [_eval(a, state, action) for a in node.args]
        if node.func == "len":
            if not isinstance(args[0], (list, tuple, str)):
                raise TypeMismatch("len() needs a list or string")
            return float(len(args[0]))
        if node.func == "abs":
            return abs(_require_number(args[0], "abs"))
        nums = [_require_number(a, node.func) for a in args]
        return min(nums) if node.func == "min" else max(nums)
    raise TypeMismatch(f"unknown node {node!r}")  # pragma: no cover


def _value_eq(a: Any, b: Any) -> bool:
    # Numbers compare numerically (exactly); bools only against bools.
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a is b
    if is_number(a) and is_number(b):
        return float(a) == float(b)
    return a == b


def eval_expression(ast: ExprAst, state: StateDict,
                    action: Optional[ActionRecord] = None) -> bool:
    """Evaluate a compiled expression to a boolean.

    Field references resolve against the step state (bare or under
    ``state.``) and the action payload under ``action.``.  Raises
    FieldResolutionError for missing paths and TypeMismatch for ill-typed
    operations; callers apply the constraint's fail-closed policy.
    """
    value = _eval(ast, state, action)
    if not isinstance(value, bool):
        raise TypeMismatch(
            f"expression must evaluate to a boolean, got {type(value).__name__}")
    return value
