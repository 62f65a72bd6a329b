"""Static checking of a parsed spec against the metamodels it names."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Union

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
    Loc,
    Name,
    Nest,
    Not,
    Or,
    Rule,
    RuleKind,
    Select,
    SetCall,
    SetFeature,
    SetResolve,
    Statement,
)
from mcomp.errors import Diagnostic
from mcomp.model import LINK_TYPES, TRACE_METAMODEL, TRACE_MM_NAME, Kind, Metamodel, MetaType


@dataclass(frozen=True)
class PrimType:
    kind: Kind

    def __str__(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class ElemType:
    alias: str
    type: str
    many: bool = False

    def __str__(self) -> str:
        return f"{'collection of ' if self.many else ''}{self.alias}!{self.type}"


StaticType = Union[PrimType, ElemType]
BOOL = PrimType(Kind.BOOLEAN)


def _literal_kind(value: object) -> Kind:
    if isinstance(value, bool):
        return Kind.BOOLEAN
    if isinstance(value, int):
        return Kind.INTEGER
    return Kind.STRING


class _Checker:
    def __init__(self, spec: CompositionSpec, metamodels: Mapping[str, Metamodel]):
        self.spec = spec
        self.diagnostics: list[Diagnostic] = []
        self.mms: dict[str, Metamodel] = {}
        for decl in (spec.left, spec.right, *spec.targets):
            mm = metamodels.get(decl.metamodel)
            if mm is None:
                self.error(decl.loc, f"metamodel {decl.metamodel!r} for {decl.alias!r} was not supplied")
            else:
                self.mms[decl.alias] = mm
        self.sources = {spec.left.alias, spec.right.alias}

    def error(self, loc: Loc, message: str) -> None:
        self.diagnostics.append(Diagnostic("error", loc.line, loc.col, message))

    def metatype(self, alias: str, type_name: str) -> MetaType | None:
        mm = self.mms.get(alias)
        return mm.type(type_name) if mm else None

    # -- rules -------------------------------------------------------------

    def check(self) -> list[Diagnostic]:
        for rule in self.spec.rules:
            self.rule(rule)
        return self.diagnostics

    def rule(self, rule: Rule) -> None:
        env: dict[str, ElemType] = {}
        for p in rule.inputs + rule.out:
            if p.alias in self.mms and self.metatype(p.alias, p.type) is None:
                self.error(p.loc, f"unknown type {p.type!r} in metamodel {self.mms[p.alias].name!r}")
            else:
                env[p.name] = ElemType(p.alias, p.type)
        if rule.guard is not None:
            inputs = {p.name: env[p.name] for p in rule.inputs if p.name in env}
            t = self.expr(rule.guard, inputs)
            if t is not None and t != BOOL:
                self.error(rule.guard.loc, f"guard of {rule.name!r} must be boolean, not {t}")
        for stmt in rule.body:
            self.statement(rule, stmt, env)

    # -- statements --------------------------------------------------------

    def statement(self, rule: Rule, stmt: Statement, env: dict[str, ElemType]) -> None:
        if isinstance(stmt, CallStmt):
            self.call(stmt.call, env)
            return
        if isinstance(stmt, Nest):
            self.nest(stmt, env)
            return
        owner = env.get(stmt.target)
        mt = self.metatype(owner.alias, owner.type) if owner else None
        if mt is None:
            return
        attr = mt.attribute(stmt.feature)
        ref = mt.reference(stmt.feature)
        if attr is None and ref is None:
            self.error(stmt.loc, f"{mt.name} has no feature {stmt.feature!r}")
            return
        if stmt.append and (ref is None or not ref.many):
            self.error(stmt.loc, f"'+=' needs a many-valued reference, {mt.name}.{stmt.feature} is not one")
        if isinstance(stmt, SetFeature):
            t = self.expr(stmt.value, env)
            if t is None:
                return
            if attr is not None:
                if t != PrimType(attr.kind):
                    self.error(stmt.loc, f"{mt.name}.{attr.name} expects {attr.kind.value}, got {t}")
                return
            if not isinstance(t, ElemType):
                self.error(stmt.loc, f"{mt.name}.{ref.name} expects elements, got {t}")
                return
            if not ref.external and (t.alias != owner.alias or t.type != ref.target):
                self.error(stmt.loc, f"{mt.name}.{ref.name} expects {owner.alias}!{ref.target}, got {t}")
            elif not ref.many and t.many:
                self.error(stmt.loc, f"{mt.name}.{ref.name} is single-valued but gets a collection")
            return
        if ref is None:
            self.error(stmt.loc, f"{mt.name}.{stmt.feature} is an attribute; only references take resolved elements")
            return
        if isinstance(stmt, SetResolve):
            t = self.expr(stmt.source, env)
            if t is not None and not (isinstance(t, ElemType) and t.alias in self.sources):
                self.error(stmt.source.loc, f"equivalent() needs source-model elements, got {t}")
        elif isinstance(stmt, SetCall):
            callee = self.call(stmt.call, env)
            if callee is not None and not ref.external:
                produced = [p for p in callee.out if p.alias == owner.alias and p.type == ref.target]
                if not produced:
                    self.error(
                        stmt.loc,
                        f"rule {callee.name!r} produces no {owner.alias}!{ref.target} for {mt.name}.{ref.name}",
                    )

    def nest(self, stmt: Nest, env: dict[str, ElemType]) -> None:
        link = env.get(stmt.link)
        if link is not None and (link.type not in LINK_TYPES or self.mms_trace(link.alias) is None):
            self.error(stmt.loc, f"{stmt.link!r} is not a trace link parameter")
        if stmt.origin == "implicit":
            t = self.expr(stmt.source, env)
            if t is not None and not (isinstance(t, ElemType) and t.alias in self.sources):
                self.error(stmt.source.loc, f"nesting source must be source-model elements, got {t}")
        else:
            self.call(stmt.call, env)

    def mms_trace(self, alias: str) -> Metamodel | None:
        mm = self.mms.get(alias)
        return mm if mm is not None and mm.name == TRACE_MM_NAME else None

    def call(self, call: Call, env: dict[str, ElemType]) -> Rule | None:
        callee = self.spec.rule(call.rule)
        if callee is None:
            self.error(call.loc, f"unknown rule {call.rule!r}")
            return None
        if callee.kind is RuleKind.MATCH:
            self.error(call.loc, f"match rule {callee.name!r} cannot be called: it produces no elements")
            return None
        for side, args, params in (
            ("left", call.left_args, callee.in_left),
            ("right", call.right_args, callee.in_right),
        ):
            if len(args) != len(params):
                self.error(call.loc, f"{callee.name} takes {len(params)} {side} argument(s), got {len(args)}")
                continue
            for arg, param in zip(args, params):
                t = self.expr(arg, env)
                if t is None:
                    continue
                if not isinstance(t, ElemType) or (t.alias, t.type) != (param.alias, param.type):
                    self.error(arg.loc, f"argument for {callee.name}.{param.name} must be {param.alias}!{param.type}, got {t}")
        return callee

    # -- expressions -------------------------------------------------------

    def expr(self, e: Expr, env: Mapping[str, ElemType]) -> StaticType | None:
        """Type of ``e``; None when an error was already reported."""
        if isinstance(e, Literal):
            return PrimType(_literal_kind(e.value))
        if isinstance(e, Name):
            return env.get(e.name)
        if isinstance(e, HasMatch):
            t = env.get(e.name)
            if t is not None and t.alias not in self.sources:
                self.error(e.loc, f"hasMatch needs a source-model element, {e.name!r} is {t}")
            return BOOL
        if isinstance(e, Access):
            obj = self.expr(e.obj, env)
            if obj is None:
                return None
            if not isinstance(obj, ElemType) or obj.many:
                self.error(e.loc, f"cannot read feature {e.feature!r} of {obj}")
                return None
            mt = self.metatype(obj.alias, obj.type)
            if mt is None:
                return None
            attr = mt.attribute(e.feature)
            if attr is not None:
                return PrimType(attr.kind)
            ref = mt.reference(e.feature)
            if ref is None:
                self.error(e.loc, f"{mt.name} has no feature {e.feature!r}")
                return None
            if ref.external:
                self.error(e.loc, f"{mt.name}.{ref.name} points outside its model and cannot be navigated")
                return None
            return ElemType(obj.alias, ref.target, ref.many)
        if isinstance(e, Eq):
            lt, rt = self.expr(e.left, env), self.expr(e.right, env)
            if lt is not None and rt is not None:
                if isinstance(lt, ElemType) and isinstance(rt, ElemType) and not (lt.many or rt.many):
                    ok = (lt.alias, lt.type) == (rt.alias, rt.type)
                else:
                    ok = lt == rt and isinstance(lt, PrimType)
                if not ok:
                    self.error(e.loc, f"cannot compare {lt} with {rt}")
            return BOOL
        if isinstance(e, (And, Or)):
            for side in (e.left, e.right):
                self._boolean(side, env)
            return BOOL
        if isinstance(e, Not):
            self._boolean(e.operand, env)
            return BOOL
        if isinstance(e, (Exists, Select)):
            coll = self.expr(e.collection, env)
            if coll is None:
                return None
            if not isinstance(coll, ElemType) or not coll.many:
                self.error(e.loc, f"cannot iterate over {coll}")
                return None
            item = ElemType(coll.alias, coll.type)
            self._boolean(e.predicate, {**env, e.var: item})
            return BOOL if isinstance(e, Exists) else coll
        raise TypeError(f"not an expression: {e!r}")

    def _boolean(self, e: Expr, env: Mapping[str, ElemType]) -> None:
        t = self.expr(e, env)
        if t is not None and t != BOOL:
            self.error(e.loc, f"expected a boolean, got {t}")


def check_spec(
    spec: CompositionSpec, metamodels: Mapping[str, Metamodel] | Iterable[Metamodel]
) -> list[Diagnostic]:
    """Return every type error in ``spec``; an empty list means it is executable.

    The built-in trace metamodel is always available.
    """
    if not isinstance(metamodels, Mapping):
        metamodels = {mm.name: mm for mm in metamodels}
    metamodels = {TRACE_MM_NAME: TRACE_METAMODEL, **metamodels}
    return _Checker(spec, metamodels).check()
