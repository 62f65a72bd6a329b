"""Canonical text rendering of a CompositionSpec."""

from __future__ import annotations

import json

from mcomp.dsl.ast import (
    Access,
    And,
    Call,
    CallStmt,
    CompositionSpec,
    Eq,
    Exists,
    Expr,
    HasMatch,
    Literal,
    Name,
    Nest,
    Not,
    Or,
    Param,
    Rule,
    RuleKind,
    Select,
    SetCall,
    SetFeature,
    SetResolve,
    Statement,
)

# binding strength, loosest first
_OR, _AND, _NOT, _EQ, _POSTFIX = range(5)


def _prec(expr: Expr) -> int:
    if isinstance(expr, Or):
        return _OR
    if isinstance(expr, And):
        return _AND
    if isinstance(expr, Not):
        return _NOT
    if isinstance(expr, Eq):
        return _EQ
    return _POSTFIX


def print_expr(expr: Expr, context: int = _OR) -> str:
    text = _expr(expr)
    return f"({text})" if _prec(expr) < context else text


def _expr(expr: Expr) -> str:
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        if isinstance(expr.value, int):
            return str(expr.value)
        return json.dumps(expr.value, ensure_ascii=False)
    if isinstance(expr, Name):
        return expr.name
    if isinstance(expr, HasMatch):
        return f"hasMatch({expr.name})"
    if isinstance(expr, Access):
        return f"{print_expr(expr.obj, _POSTFIX)}.{expr.feature}"
    if isinstance(expr, (Exists, Select)):
        op = "exists" if isinstance(expr, Exists) else "select"
        return f"{print_expr(expr.collection, _POSTFIX)}.{op}({expr.var} | {print_expr(expr.predicate)})"
    if isinstance(expr, Eq):
        # '=' is non-associative: both operands must be postfix-level
        return f"{print_expr(expr.left, _POSTFIX)} = {print_expr(expr.right, _POSTFIX)}"
    if isinstance(expr, Not):
        return f"not {print_expr(expr.operand, _NOT)}"
    if isinstance(expr, And):
        return f"{print_expr(expr.left, _AND)} and {print_expr(expr.right, _NOT)}"
    if isinstance(expr, Or):
        return f"{print_expr(expr.left, _OR)} or {print_expr(expr.right, _AND)}"
    raise TypeError(f"not an expression: {expr!r}")


def _call(call: Call) -> str:
    parts = ", ".join(print_expr(a) for a in call.left_args)
    if call.right_args:
        rights = ", ".join(print_expr(a) for a in call.right_args)
        parts = f"{parts} with {rights}" if parts else f"with {rights}"
    return f"{call.rule}({parts})"


def print_statement(stmt: Statement) -> str:
    if isinstance(stmt, CallStmt):
        return f"call {_call(stmt.call)};"
    if isinstance(stmt, Nest):
        if stmt.origin == "implicit":
            return f"nest {stmt.link} implicit({print_expr(stmt.source)});"
        return f"nest {stmt.link} explicit {_call(stmt.call)};"
    op = "+=" if stmt.append else "="
    lhs = f"{stmt.target}.{stmt.feature} {op}"
    if isinstance(stmt, SetResolve):
        return f"{lhs} equivalent({print_expr(stmt.source)});"
    if isinstance(stmt, SetCall):
        return f"{lhs} call {_call(stmt.call)};"
    if isinstance(stmt, SetFeature):
        return f"{lhs} {print_expr(stmt.value)};"
    raise TypeError(f"not a statement: {stmt!r}")


def _param(p: Param) -> str:
    return f"{p.name} : {p.alias}!{p.type}"


def _params(ps: tuple[Param, ...]) -> str:
    return ", ".join(_param(p) for p in ps)


def print_rule(rule: Rule) -> str:
    lines = [f"rule {rule.name}"]
    if rule.kind is RuleKind.MATCH:
        lines.append(f"  match {_param(rule.in_left[0])}")
        lines.append(f"  with {_param(rule.in_right[0])}")
        lines.append(f"  compare {{ {print_expr(rule.guard)} }}")
        return "\n".join(lines)
    if rule.kind is RuleKind.MERGE:
        lines.append(f"  merge {_param(rule.in_left[0])}")
        lines.append(f"  with {_param(rule.in_right[0])}")
        lines.append(f"  into {_params(rule.out)}")
    else:
        if rule.in_left:
            lines.append(f"  transform {_params(rule.in_left)}")
            if rule.in_right:
                lines.append(f"  with {_params(rule.in_right)}")
        else:
            lines.append(f"  transform {_params(rule.in_right)}")
        lines.append(f"  to {_params(rule.out)}")
        if rule.guard is not None:
            lines.append(f"  when {{ {print_expr(rule.guard)} }}")
    if not rule.body:
        lines[-1] += " {}"
        return "\n".join(lines)
    lines[-1] += " {"
    lines.extend(f"    {print_statement(s)}" for s in rule.body)
    lines.append("  }")
    return "\n".join(lines)


def print_spec(spec: CompositionSpec) -> str:
    header = [
        f"composition {spec.name}",
        f"  left {spec.left.alias} : {spec.left.metamodel}",
        f"  right {spec.right.alias} : {spec.right.metamodel}",
    ]
    header += [f"  target {d.alias} : {d.metamodel}" for d in spec.targets]
    blocks = ["\n".join(header)] + [print_rule(r) for r in spec.rules]
    return "\n\n".join(blocks) + "\n"
