"""Lexer and recursive-descent parser for ``.mcomp`` composition specs.

Keywords are contextual: they are ordinary identifiers that the parser
recognises at the positions where the grammar expects them, so feature
names such as ``left`` or ``targets`` stay usable after a dot.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

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
    ModelDecl,
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
from mcomp.errors import Diagnostic, SpecError
from mcomp.model import TRACE_MM_NAME

RESERVED = frozenset(
    """composition left right target rule match merge transform with into to
    when compare call nest equivalent and or not true false hasMatch
    implicit explicit""".split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<int>-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<sym>\+=|[{}():!,;.=|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    @property
    def loc(self) -> Loc:
        return Loc(self.line, self.col)

    def describe(self) -> str:
        return "end of input" if self.kind == "eof" else repr(self.text)


class _Abort(Exception):
    pass


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise SpecError([Diagnostic("error", line, col, f"unexpected character {text[pos]!r}")])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    # -- token plumbing ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tok
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.tok.kind in ("ident", "sym") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}, found {self.tok.describe()}")
        return self.advance()

    def ident(self, what: str = "identifier", allow_reserved: bool = False) -> Token:
        tok = self.tok
        if tok.kind != "ident":
            self.fail(f"expected {what}, found {tok.describe()}")
        if not allow_reserved and tok.text in RESERVED:
            self.fail(f"expected {what}, found keyword {tok.text!r}")
        return self.advance()

    def error(self, loc: Loc | Token, message: str) -> None:
        self.diagnostics.append(Diagnostic("error", loc.line, loc.col, message))

    def fail(self, message: str) -> None:
        self.error(self.tok, message)
        raise _Abort

    # -- spec --------------------------------------------------------------

    def parse(self) -> CompositionSpec:
        try:
            head = self.expect("composition")
            name = self.ident("spec name").text
            self.expect("left")
            left = self.model_decl()
            self.expect("right")
            right = self.model_decl()
            targets = []
            while self.at("target"):
                tok = self.advance()
                if len(targets) == 2:
                    self.error(tok, "a composition has at most 2 target models")
                targets.append(self.model_decl())
            if not targets:
                self.fail(f"expected 'target', found {self.tok.describe()}")
        except _Abort:
            raise SpecError(self.diagnostics) from None
        spec = CompositionSpec(name, left, right, tuple(targets), loc=head.loc)
        self._check_aliases(spec)

        rules: list[Rule] = []
        while self.tok.kind != "eof":
            try:
                rules.append(self.rule(spec))
            except _Abort:
                self._sync()
        seen: set[str] = set()
        for r in rules:
            if r.name in seen:
                self.error(r.loc, f"duplicate rule name {r.name!r}")
            seen.add(r.name)
        spec = CompositionSpec(spec.name, spec.left, spec.right, spec.targets, tuple(rules), loc=spec.loc)
        if self.diagnostics:
            raise SpecError(self.diagnostics)
        return spec

    def _sync(self) -> None:
        # skip to the next rule header
        self.advance()
        while self.tok.kind != "eof":
            if self.at("rule") and self.tokens[self.pos - 1].text in ("}", ";"):
                return
            self.advance()

    def model_decl(self) -> ModelDecl:
        alias = self.ident("model alias")
        self.expect(":")
        mm = self.ident("metamodel name")
        return ModelDecl(alias.text, mm.text, loc=alias.loc)

    def _check_aliases(self, spec: CompositionSpec) -> None:
        seen: set[str] = set()
        for d in (spec.left, spec.right, *spec.targets):
            if d.alias in seen:
                self.error(d.loc, f"duplicate model alias {d.alias!r}")
            seen.add(d.alias)

    # -- rules -------------------------------------------------------------

    def param(self) -> Param:
        name = self.ident("parameter name")
        self.expect(":")
        alias = self.ident("model alias")
        self.expect("!")
        type_ = self.ident("type name")
        return Param(name.text, alias.text, type_.text, loc=name.loc)

    def param_list(self, separators: tuple[str, ...] = (",",)) -> list[Param]:
        params = [self.param()]
        while any(self.at(s) for s in separators):
            self.advance()
            params.append(self.param())
        return params

    def rule(self, spec: CompositionSpec) -> Rule:
        head = self.expect("rule")
        name = self.ident("rule name").text
        guard = None
        body: tuple[Statement, ...] = ()
        if self.accept("match"):
            kind = RuleKind.MATCH
            lefts = [self.param()]
            self.expect("with")
            rights = [self.param()]
            self.expect("compare")
            self.expect("{")
            guard = self.expr()
            self.expect("}")
            outs: list[Param] = []
        elif self.accept("merge"):
            kind = RuleKind.MERGE
            lefts = [self.param()]
            self.expect("with")
            rights = [self.param()]
            self.expect("into")
            outs = self.param_list()
            if self.at("when"):
                self.fail("guards are not allowed on merge rules")
            body = self.block()
        elif self.accept("transform"):
            kind = RuleKind.TRANSFORM
            sources = self.param_list((",", "with"))
            lefts = [p for p in sources if p.alias != spec.right.alias]
            rights = [p for p in sources if p.alias == spec.right.alias]
            self.expect("to")
            outs = self.param_list()
            if self.accept("when"):
                self.expect("{")
                guard = self.expr()
                self.expect("}")
            body = self.block()
        else:
            self.fail(f"expected 'match', 'merge' or 'transform', found {self.tok.describe()}")
        rule = Rule(name, kind, tuple(lefts), tuple(rights), tuple(outs), guard, body, loc=head.loc)
        self._check_rule(spec, rule)
        return rule

    def block(self) -> tuple[Statement, ...]:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            stmts.append(self.statement())
        self.expect("}")
        return tuple(stmts)

    # -- statements --------------------------------------------------------

    def statement(self) -> Statement:
        tok = self.tok
        if self.accept("call"):
            call = self.call()
            self.expect(";")
            return CallStmt(call, loc=tok.loc)
        if self.accept("nest"):
            link = self.ident("link parameter").text
            if self.accept("implicit"):
                self.expect("(")
                source = self.expr()
                self.expect(")")
                self.expect(";")
                return Nest(link, "implicit", source=source, loc=tok.loc)
            if self.accept("explicit"):
                call = self.call()
                self.expect(";")
                return Nest(link, "explicit", call=call, loc=tok.loc)
            self.fail(f"expected 'implicit' or 'explicit', found {self.tok.describe()}")
        target = self.ident("output parameter").text
        self.expect(".")
        feature = self.ident("feature name", allow_reserved=True).text
        if self.accept("+="):
            append = True
        else:
            self.expect("=")
            append = False
        if self.accept("equivalent"):
            self.expect("(")
            source = self.expr()
            self.expect(")")
            self.expect(";")
            return SetResolve(target, feature, source, append, loc=tok.loc)
        if self.accept("call"):
            call = self.call()
            self.expect(";")
            return SetCall(target, feature, call, append, loc=tok.loc)
        value = self.expr()
        self.expect(";")
        return SetFeature(target, feature, value, append, loc=tok.loc)

    def call(self) -> Call:
        name = self.ident("rule name")
        self.expect("(")
        lefts: list[Expr] = []
        rights: list[Expr] = []
        if not self.at("with") and not self.at(")"):
            lefts = self.expr_list()
        if self.accept("with"):
            rights = self.expr_list()
        self.expect(")")
        return Call(name.text, tuple(lefts), tuple(rights), loc=name.loc)

    def expr_list(self) -> list[Expr]:
        items = [self.expr()]
        while self.accept(","):
            items.append(self.expr())
        return items

    # -- expressions -------------------------------------------------------

    def expr(self) -> Expr:
        left = self.and_expr()
        while self.at("or"):
            tok = self.advance()
            left = Or(left, self.and_expr(), loc=tok.loc)
        return left

    def and_expr(self) -> Expr:
        left = self.unary()
        while self.at("and"):
            tok = self.advance()
            left = And(left, self.unary(), loc=tok.loc)
        return left

    def unary(self) -> Expr:
        if self.at("not"):
            tok = self.advance()
            return Not(self.unary(), loc=tok.loc)
        left = self.postfix()
        if self.at("="):
            tok = self.advance()
            return Eq(left, self.postfix(), loc=tok.loc)
        return left

    def postfix(self) -> Expr:
        expr = self.primary()
        while self.at("."):
            self.advance()
            feature = self.ident("feature name", allow_reserved=True)
            if feature.text in ("exists", "select") and self.at("("):
                self.advance()
                var = self.ident("iteration variable").text
                self.expect("|")
                pred = self.expr()
                self.expect(")")
                node = Exists if feature.text == "exists" else Select
                expr = node(expr, var, pred, loc=feature.loc)
            else:
                expr = Access(expr, feature.text, loc=feature.loc)
        return expr

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "string":
            try:
                value = json.loads(tok.text)
            except ValueError:
                self.fail(f"invalid string literal {tok.text}")
            self.advance()
            return Literal(value, loc=tok.loc)
        if tok.kind == "int":
            self.advance()
            return Literal(int(tok.text), loc=tok.loc)
        if self.accept("true"):
            return Literal(True, loc=tok.loc)
        if self.accept("false"):
            return Literal(False, loc=tok.loc)
        if self.accept("hasMatch"):
            self.expect("(")
            name = self.ident("parameter name").text
            self.expect(")")
            return HasMatch(name, loc=tok.loc)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "ident" and tok.text not in RESERVED:
            self.advance()
            return Name(tok.text, loc=tok.loc)
        self.fail(f"expected an expression, found {tok.describe()}")
        raise AssertionError  # unreachable

    # -- structural checks that need no metamodel ----------------------------

    def _check_rule(self, spec: CompositionSpec, rule: Rule) -> None:
        targets = {d.alias: d for d in spec.targets}
        for p in rule.in_left:
            if p.alias != spec.left.alias:
                self.error(p.loc, f"parameter {p.name!r} must come from the left model {spec.left.alias!r}")
        for p in rule.in_right:
            if p.alias != spec.right.alias:
                self.error(p.loc, f"parameter {p.name!r} must come from the right model {spec.right.alias!r}")
        for p in rule.out:
            if p.alias not in targets:
                self.error(p.loc, f"output parameter {p.name!r} must use a target model alias")
        names = [p.name for p in rule.in_left + rule.in_right + rule.out]
        for p in rule.in_left + rule.in_right + rule.out:
            if names.count(p.name) > 1:
                self.error(p.loc, f"duplicate parameter {p.name!r} in rule {rule.name!r}")
                names = [n for n in names if n != p.name]

        primary_outs = [p for p in rule.out if p.alias == spec.primary.alias]
        if rule.kind is RuleKind.MERGE:
            extra = [
                p for p in rule.out
                if p.alias != spec.primary.alias and targets.get(p.alias, spec.primary).metamodel != TRACE_MM_NAME
            ]
            if len(primary_outs) != 1 or extra:
                surplus = primary_outs[1:] + extra
                self.error(
                    surplus[0].loc if surplus else rule.loc,
                    f"merge rule {rule.name!r} must produce exactly one element of the composed model "
                    f"(found {len(primary_outs)}{' plus ' + str(len(extra)) + ' other' if extra else ''})",
                )
        elif rule.kind is RuleKind.TRANSFORM and not rule.inputs:
            self.error(rule.loc, f"transform rule {rule.name!r} needs at least one source parameter")

        inputs = {p.name for p in rule.inputs}
        outputs = {p.name for p in rule.out}
        if rule.guard is not None:
            self._check_names(rule.guard, inputs)
        for stmt in rule.body:
            self._check_statement(stmt, inputs | outputs, outputs)

    def _check_statement(self, stmt: Statement, scope: set[str], outputs: set[str]) -> None:
        if isinstance(stmt, (SetFeature, SetResolve, SetCall)):
            if stmt.target not in outputs:
                self.error(stmt.loc, f"{stmt.target!r} is not an output parameter of this rule")
        if isinstance(stmt, Nest) and stmt.link not in outputs:
            self.error(stmt.loc, f"{stmt.link!r} is not an output parameter of this rule")
        for expr in _statement_exprs(stmt):
            self._check_names(expr, scope)

    def _check_names(self, expr: Expr, scope: set[str]) -> None:
        if isinstance(expr, Name):
            if expr.name not in scope:
                self.error(expr.loc, f"unknown parameter {expr.name!r}")
        elif isinstance(expr, HasMatch):
            if expr.name not in scope:
                self.error(expr.loc, f"unknown parameter {expr.name!r}")
        elif isinstance(expr, Access):
            self._check_names(expr.obj, scope)
        elif isinstance(expr, Not):
            self._check_names(expr.operand, scope)
        elif isinstance(expr, (Eq, And, Or)):
            self._check_names(expr.left, scope)
            self._check_names(expr.right, scope)
        elif isinstance(expr, (Exists, Select)):
            self._check_names(expr.collection, scope)
            self._check_names(expr.predicate, scope | {expr.var})


def _statement_exprs(stmt: Statement) -> list[Expr]:
    if isinstance(stmt, SetFeature):
        return [stmt.value]
    if isinstance(stmt, SetResolve):
        return [stmt.source]
    call = None
    if isinstance(stmt, (SetCall, CallStmt)):
        call = stmt.call
    elif isinstance(stmt, Nest):
        if stmt.source is not None:
            return [stmt.source]
        call = stmt.call
    return list(call.left_args + call.right_args) if call else []


def parse_spec(text: str) -> CompositionSpec:
    """Parse ``.mcomp`` source; raises :class:`SpecError` with every diagnostic found."""
    return Parser(text).parse()
