"""Syntax tree for composition specs.

Every node carries a source location that is excluded from equality, so a
spec re-parsed from printed text compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union


@dataclass(frozen=True)
class Loc:
    line: int = 0
    col: int = 0


_NOLOC = Loc()


def _loc() -> Loc:
    return field(default=_NOLOC, compare=False, repr=False)


class RuleKind(str, Enum):
    MATCH = "match"
    MERGE = "merge"
    TRANSFORM = "transform"


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: str | bool | int
    loc: Loc = _loc()


@dataclass(frozen=True)
class Name:
    """Reference to a rule parameter or a bound iteration variable."""

    name: str
    loc: Loc = _loc()


@dataclass(frozen=True)
class Access:
    """Attribute read or reference navigation: ``obj.feature``."""

    obj: Expr
    feature: str
    loc: Loc = _loc()


@dataclass(frozen=True)
class Eq:
    left: Expr
    right: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class And:
    left: Expr
    right: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class Or:
    left: Expr
    right: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class Not:
    operand: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class Exists:
    collection: Expr
    var: str
    predicate: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class Select:
    collection: Expr
    var: str
    predicate: Expr
    loc: Loc = _loc()


@dataclass(frozen=True)
class HasMatch:
    name: str
    loc: Loc = _loc()


Expr = Union[Literal, Name, Access, Eq, And, Or, Not, Exists, Select, HasMatch]


# -- statements -------------------------------------------------------------


@dataclass(frozen=True)
class Call:
    rule: str
    left_args: tuple[Expr, ...] = ()
    right_args: tuple[Expr, ...] = ()
    loc: Loc = _loc()


@dataclass(frozen=True)
class SetFeature:
    """``out.feature = expr;`` (or ``+=`` to append to a many reference)."""

    target: str
    feature: str
    value: Expr
    append: bool = False
    loc: Loc = _loc()


@dataclass(frozen=True)
class SetResolve:
    """``out.ref = equivalent(source);``"""

    target: str
    feature: str
    source: Expr
    append: bool = False
    loc: Loc = _loc()


@dataclass(frozen=True)
class SetCall:
    """``out.ref = call Rule(args);``"""

    target: str
    feature: str
    call: Call
    append: bool = False
    loc: Loc = _loc()


@dataclass(frozen=True)
class CallStmt:
    call: Call
    loc: Loc = _loc()


@dataclass(frozen=True)
class Nest:
    """Record a nesting relationship from the link bound to ``link``.

    ``origin`` is "implicit" (with ``source`` resolved like equivalent()) or
    "explicit" (with ``call`` naming the activation that was invoked).
    Only produced by the traceability weaver.
    """

    link: str
    origin: str
    source: Expr | None = None
    call: Call | None = None
    loc: Loc = _loc()


Statement = Union[SetFeature, SetResolve, SetCall, CallStmt, Nest]


# -- declarations -----------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    alias: str
    type: str
    loc: Loc = _loc()


@dataclass(frozen=True)
class ModelDecl:
    alias: str
    metamodel: str
    loc: Loc = _loc()


@dataclass(frozen=True)
class Rule:
    name: str
    kind: RuleKind
    in_left: tuple[Param, ...] = ()
    in_right: tuple[Param, ...] = ()
    out: tuple[Param, ...] = ()
    guard: Expr | None = None
    body: tuple[Statement, ...] = ()
    loc: Loc = _loc()

    @property
    def inputs(self) -> tuple[Param, ...]:
        return self.in_left + self.in_right

    def param(self, name: str) -> Param | None:
        for p in self.in_left + self.in_right + self.out:
            if p.name == name:
                return p
        return None


@dataclass(frozen=True)
class CompositionSpec:
    name: str
    left: ModelDecl
    right: ModelDecl
    targets: tuple[ModelDecl, ...]
    rules: tuple[Rule, ...] = ()
    loc: Loc = _loc()

    @property
    def primary(self) -> ModelDecl:
        return self.targets[0]

    def rule(self, name: str) -> Rule | None:
        for r in self.rules:
            if r.name == name:
                return r
        return None

    def decl(self, alias: str) -> ModelDecl | None:
        for d in (self.left, self.right, *self.targets):
            if d.alias == alias:
                return d
        return None
