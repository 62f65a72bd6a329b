"""Execution of composition specs.

A run has three phases. The match phase evaluates every match rule over
every same-typed (left, right) pair and records correspondences. Pass 1
allocates one activation per applicable merge/transform rule input and
creates its (still empty) target elements. Pass 2 evaluates rule bodies in
activation order. Because every scheduled target already exists when bodies
run, ``equivalent()`` never depends on rule text order.

Explicit calls issued from a body reuse an existing activation of the
callee on the same arguments, or fire a fresh one (allocated and
initialised on the spot).
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

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
    Rule,
    RuleKind,
    Select,
    SetFeature,
    SetResolve,
    Statement,
)
from mcomp.errors import (
    AmbiguityError,
    CallError,
    CompositionError,
    EvaluationError,
    UnresolvedEquivalentError,
)
from mcomp.model import (
    LINK_TYPES,
    TRACE_METAMODEL,
    TRACE_MM_NAME,
    Metamodel,
    Model,
    ModelElement,
    Role,
    model_to_dict,
    parse_model,
)

ID_PREFIX = "t"


@dataclass(frozen=True)
class ElementRef:
    """Runtime value of an element: the alias of its model and its id."""

    model: str
    id: str


@dataclass(frozen=True)
class Correspondence:
    rule: str
    left: str
    right: str


@dataclass(frozen=True)
class Activation:
    seq: int
    rule: str
    kind: RuleKind
    left: tuple[str, ...]
    right: tuple[str, ...]
    comp: tuple[str, ...]
    # every created element in out-param order, as (target alias, id)
    outputs: tuple[tuple[str, str], ...] = ()

    @property
    def sources(self) -> frozenset[str]:
        return frozenset(self.left) | frozenset(self.right)


@dataclass(frozen=True)
class ExplicitCallRecord:
    index: int
    caller: int
    callee: str
    left: tuple[str, ...]
    right: tuple[str, ...]


@dataclass(frozen=True)
class ImplicitCallRecord:
    index: int
    caller: int
    # resolved source elements in collection order, as (side, id)
    resolved: tuple[tuple[str, str], ...]
    targets: tuple[str, ...]


@dataclass
class ExecutionResult:
    composed: Model
    match_trace: list[Correspondence]
    activations: list[Activation]
    explicit_calls: list[ExplicitCallRecord]
    implicit_calls: list[ImplicitCallRecord]
    extra_targets: list[Model] = field(default_factory=list)

    def activation(self, seq: int) -> Activation:
        return self.activations[seq - 1]

    def calls(self) -> list[ExplicitCallRecord | ImplicitCallRecord]:
        """All call records in the order they were issued."""
        return sorted([*self.explicit_calls, *self.implicit_calls], key=lambda c: c.index)


class _TargetBuilder:
    def __init__(self, model_id: str, metamodel: Metamodel, role: Role):
        self.model_id = model_id
        self.metamodel = metamodel
        self.role = role
        self.elements: list[ModelElement] = []
        self.index: dict[str, ModelElement] = {}
        self.nestings: set[tuple[str, str, str]] = set()

    def new(self, type_name: str) -> str:
        el = ModelElement(f"{ID_PREFIX}{len(self.elements) + 1}", type_name)
        self.elements.append(el)
        self.index[el.id] = el
        return el.id

    def build(self) -> Model:
        return Model(self.model_id, self.metamodel.name, self.role, tuple(self.elements))


class Execution:
    """State of one run of a spec over a (left, right) model pair."""

    def __init__(
        self,
        spec: CompositionSpec,
        left: Model,
        right: Model,
        metamodels: Mapping[str, Metamodel] | Iterable[Metamodel],
    ):
        if not isinstance(metamodels, Mapping):
            metamodels = {mm.name: mm for mm in metamodels}
        metamodels = {TRACE_MM_NAME: TRACE_METAMODEL, **metamodels}
        self.spec = spec
        self.mms = {d.alias: metamodels[d.metamodel] for d in (spec.left, spec.right, *spec.targets)}
        self.sources = {spec.left.alias: left, spec.right.alias: right}
        self.side = {spec.left.alias: "left", spec.right.alias: "right"}
        self.targets = {
            d.alias: _TargetBuilder(
                f"{spec.name}.{d.alias}",
                self.mms[d.alias],
                Role.TRACE if d.metamodel == TRACE_MM_NAME else Role.COMPOSED,
            )
            for d in spec.targets
        }
        self.correspondences: list[Correspondence] = []
        self.matched: dict[str, set[str]] = {"left": set(), "right": set()}
        self.activations: list[Activation] = []
        self.memo: dict[tuple[str, tuple[str, ...], tuple[str, ...]], Activation] = {}
        self.producer: dict[tuple[str, str], Activation] = {}
        self.explicit_calls: list[ExplicitCallRecord] = []
        self.implicit_calls: list[ImplicitCallRecord] = []
        self._calls = 0

    # -- element access ----------------------------------------------------

    def element(self, ref: ElementRef) -> ModelElement:
        if ref.model in self.sources:
            return self.sources[ref.model].get(ref.id)
        return self.targets[ref.model].index[ref.id]

    def _bind(self, rule: Rule, left: Sequence[str], right: Sequence[str]) -> dict[str, ElementRef]:
        env = {p.name: ElementRef(p.alias, i) for p, i in zip(rule.in_left, left)}
        env.update({p.name: ElementRef(p.alias, i) for p, i in zip(rule.in_right, right)})
        return env

    # -- match phase -------------------------------------------------------

    def run_match_phase(self) -> list[Correspondence]:
        left, right = self.sources[self.spec.left.alias], self.sources[self.spec.right.alias]
        for rule in self.spec.rules:
            if rule.kind is not RuleKind.MATCH:
                continue
            for l in left.of_type(rule.in_left[0].type):
                for r in right.of_type(rule.in_right[0].type):
                    env = self._bind(rule, [l.id], [r.id])
                    if self._guard(rule, env, f"({l.id}, {r.id})"):
                        self.correspondences.append(Correspondence(rule.name, l.id, r.id))
                        self.matched["left"].add(l.id)
                        self.matched["right"].add(r.id)
        return self.correspondences

    def _guard(self, rule: Rule, env: dict[str, ElementRef], where: str) -> bool:
        try:
            value = self.eval(rule.guard, env)
        except EvaluationError as exc:
            raise EvaluationError(f"rule {rule.name} on {where}: {exc}") from None
        if not isinstance(value, bool):
            raise EvaluationError(f"rule {rule.name} on {where}: guard produced {value!r}, not a boolean")
        return value

    # -- scheduling --------------------------------------------------------

    def run(self) -> ExecutionResult:
        self.run_match_phase()
        scheduled: list[Activation] = []

        merges = [r for r in self.spec.rules if r.kind is RuleKind.MERGE]
        seen_pairs: set[tuple[str, str]] = set()
        left, right = self.sources[self.spec.left.alias], self.sources[self.spec.right.alias]
        for c in self.correspondences:
            if (c.left, c.right) in seen_pairs:
                continue
            seen_pairs.add((c.left, c.right))
            ltype, rtype = left.get(c.left).type, right.get(c.right).type
            rules = [r for r in merges if (r.in_left[0].type, r.in_right[0].type) == (ltype, rtype)]
            if len(rules) > 1:
                raise AmbiguityError([r.name for r in rules], f"correspondence ({c.left}, {c.right})")
            if rules:
                scheduled.append(self._allocate(rules[0], (c.left,), (c.right,)))

        claims: dict[tuple[tuple[str, ...], tuple[str, ...]], list[Rule]] = {}
        for rule in self.spec.rules:
            if rule.kind is not RuleKind.TRANSFORM:
                continue
            pools = [left.of_type(p.type) for p in rule.in_left] + [right.of_type(p.type) for p in rule.in_right]
            n_left = len(rule.in_left)
            for combo in itertools.product(*pools):
                ids = tuple(el.id for el in combo)
                lids, rids = ids[:n_left], ids[n_left:]
                if rule.guard is not None and not self._guard(rule, self._bind(rule, lids, rids), str(ids)):
                    continue
                claims.setdefault((lids, rids), []).append(rule)
        for (lids, rids), rules in claims.items():
            if len(rules) > 1:
                raise AmbiguityError([r.name for r in rules], f"source tuple {lids + rids}")
        for (lids, rids), rules in claims.items():
            scheduled.append(self._allocate(rules[0], lids, rids))

        for act in scheduled:
            self._initialize(act)
        return self.result()

    def result(self) -> ExecutionResult:
        primary, *extra = [self.targets[d.alias].build() for d in self.spec.targets]
        return ExecutionResult(
            primary,
            list(self.correspondences),
            list(self.activations),
            list(self.explicit_calls),
            list(self.implicit_calls),
            extra,
        )

    def _allocate(self, rule: Rule, left: tuple[str, ...], right: tuple[str, ...]) -> Activation:
        outputs = tuple((p.alias, self.targets[p.alias].new(p.type)) for p in rule.out)
        primary = self.spec.primary.alias
        act = Activation(
            len(self.activations) + 1,
            rule.name,
            rule.kind,
            left,
            right,
            tuple(i for alias, i in outputs if alias == primary),
            outputs,
        )
        self.activations.append(act)
        self.memo[(rule.name, left, right)] = act
        for i in left:
            self.producer.setdefault(("left", i), act)
        for i in right:
            self.producer.setdefault(("right", i), act)
        return act

    def _initialize(self, act: Activation) -> None:
        rule = self.spec.rule(act.rule)
        env = self._bind(rule, act.left, act.right)
        env.update({p.name: ElementRef(alias, i) for p, (alias, i) in zip(rule.out, act.outputs)})
        for stmt in rule.body:
            try:
                self.execute_statement(stmt, act, env)
            except EvaluationError as exc:
                raise EvaluationError(f"rule {rule.name} (activation {act.seq}): {exc}") from None

    # -- calls -------------------------------------------------------------

    def call_explicit(
        self, callee: str, left: Sequence[ElementRef], right: Sequence[ElementRef], caller: int
    ) -> Activation:
        """Apply ``callee`` to exactly these sources, reusing a prior activation if there is one."""
        rule = self.spec.rule(callee)
        if rule is None:
            raise CallError(f"unknown rule {callee!r}")
        if rule.kind is RuleKind.MATCH:
            raise CallError(f"match rule {callee!r} cannot be called")
        for side, args, params in (("left", left, rule.in_left), ("right", right, rule.in_right)):
            if len(args) != len(params):
                raise CallError(f"{callee} takes {len(params)} {side} argument(s), got {len(args)}")
            for arg, p in zip(args, params):
                actual = self.element(arg).type if arg.model == p.alias else f"element of {arg.model}"
                if arg.model != p.alias or actual != p.type:
                    raise CallError(f"{callee}.{p.name} expects {p.alias}!{p.type}, got {arg.id!r} ({actual})")
        lids, rids = tuple(a.id for a in left), tuple(a.id for a in right)
        self._calls += 1
        self.explicit_calls.append(ExplicitCallRecord(self._calls, caller, callee, lids, rids))
        act = self.memo.get((callee, lids, rids))
        if act is None:
            act = self._allocate(rule, lids, rids)
            self._initialize(act)
        return act

    def _call_combinations(self, call: Call, env: dict[str, ElementRef]) -> list[tuple[list, list]]:
        columns = [self._as_list(self.eval(a, env)) for a in call.left_args + call.right_args]
        n = len(call.left_args)
        return [(list(c[:n]), list(c[n:])) for c in itertools.product(*columns)]

    def _calls_from(self, call: Call, act: Activation, env: dict[str, ElementRef]) -> list[Activation]:
        return [self.call_explicit(call.rule, l, r, act.seq) for l, r in self._call_combinations(call, env)]

    def producing_activation(self, ref: ElementRef) -> Activation:
        side = self.side.get(ref.model)
        act = self.producer.get((side, ref.id)) if side else None
        if act is None:
            raise UnresolvedEquivalentError(f"no activation consumed {ref.model}!{ref.id}")
        return act

    def equivalent(self, refs: Sequence[ElementRef], caller: int, alias: str, type_name: str | None) -> list[str]:
        """Resolve source elements to targets in model ``alias``, one element at a time."""
        wired: list[str] = []
        for ref in refs:
            act = self.producing_activation(ref)
            found = [
                i for a, i in act.outputs
                if a == alias and (type_name is None or self.targets[a].index[i].type == type_name)
            ]
            if not found:
                raise UnresolvedEquivalentError(
                    f"activation {act.seq} ({act.rule}) produced no {alias}!{type_name} for {ref.id!r}"
                )
            wired.extend(found)
        if refs:
            self._calls += 1
            resolved = tuple((self.side[r.model], r.id) for r in refs)
            self.implicit_calls.append(ImplicitCallRecord(self._calls, caller, resolved, tuple(wired)))
        return wired

    # -- statements --------------------------------------------------------

    def execute_statement(self, stmt: Statement, act: Activation, env: dict[str, ElementRef]) -> None:
        if isinstance(stmt, CallStmt):
            self._calls_from(stmt.call, act, env)
            return
        if isinstance(stmt, Nest):
            self._nest(stmt, env)
            return
        owner = env[stmt.target]
        el = self.element(owner)
        mt = self.mms[owner.model].type(el.type)
        attr = mt.attribute(stmt.feature)
        if attr is not None:
            value = self.eval(stmt.value, env)
            if value is None:
                el.attrs.pop(attr.name, None)
            elif not attr.kind.accepts(value):
                raise EvaluationError(f"{el.type}.{attr.name} expects {attr.kind.value}, got {value!r}")
            else:
                el.attrs[attr.name] = value
            return
        ref = mt.reference(stmt.feature)
        if ref is None:
            raise EvaluationError(f"{el.type} has no feature {stmt.feature!r}")
        wanted = None if ref.external else ref.target
        if isinstance(stmt, SetFeature):
            ids = [r.id for r in self._as_list(self.eval(stmt.value, env))]
        elif isinstance(stmt, SetResolve):
            refs = self._as_list(self.eval(stmt.source, env))
            ids = self.equivalent(refs, act.seq, owner.model, wanted)
        else:
            ids = []
            for callee in self._calls_from(stmt.call, act, env):
                ids.extend(
                    i for a, i in callee.outputs
                    if a == owner.model and (wanted is None or self.targets[a].index[i].type == wanted)
                )
        current = el.refs.get(ref.name, []) if stmt.append else []
        values = current + ids
        if not ref.many and len(values) > 1:
            raise EvaluationError(f"{el.type}.{ref.name} is single-valued but got {len(values)} elements")
        if values:
            el.refs[ref.name] = values
        else:
            el.refs.pop(ref.name, None)

    def _child_link(self, act: Activation, alias: str) -> str:
        links = [i for a, i in act.outputs if a == alias and self.targets[a].index[i].type in LINK_TYPES]
        if len(links) != 1:
            raise EvaluationError(f"activation {act.seq} ({act.rule}) has {len(links)} trace links, expected 1")
        return links[0]

    def _nest(self, stmt: Nest, env: dict[str, ElementRef]) -> None:
        parent = env[stmt.link]
        if stmt.origin == "implicit":
            children = [self.producing_activation(r) for r in self._as_list(self.eval(stmt.source, env))]
        else:
            children = []
            for lefts, rights in self._call_combinations(stmt.call, env):
                key = (stmt.call.rule, tuple(r.id for r in lefts), tuple(r.id for r in rights))
                if key not in self.memo:
                    raise CallError(f"nesting refers to a call of {stmt.call.rule} that never happened")
                children.append(self.memo[key])
        builder = self.targets[parent.model]
        for child in children:
            triple = (parent.id, self._child_link(child, parent.model), stmt.origin)
            if triple[0] == triple[1] or triple in builder.nestings:
                continue
            builder.nestings.add(triple)
            el = builder.index[builder.new("TraceRelationship")]
            el.attrs["origin"] = stmt.origin
            el.refs["parent"] = [triple[0]]
            el.refs["child"] = [triple[1]]

    # -- expressions -------------------------------------------------------

    @staticmethod
    def _as_list(value: Any) -> list[ElementRef]:
        if value is None:
            return []
        if isinstance(value, ElementRef):
            return [value]
        if isinstance(value, tuple) and all(isinstance(v, ElementRef) for v in value):
            return list(value)
        raise EvaluationError(f"expected elements, got {value!r}")

    def _bool(self, e: Expr, env: dict[str, ElementRef]) -> bool:
        value = self.eval(e, env)
        if not isinstance(value, bool):
            raise EvaluationError(f"expected a boolean, got {value!r}")
        return value

    def eval(self, e: Expr, env: dict[str, ElementRef]) -> Any:
        if isinstance(e, Literal):
            return e.value
        if isinstance(e, Name):
            return env[e.name]
        if isinstance(e, Access):
            obj = self.eval(e.obj, env)
            if obj is None:
                return None
            if not isinstance(obj, ElementRef):
                raise EvaluationError(f"cannot read {e.feature!r} of {obj!r}")
            el = self.element(obj)
            mt = self.mms[obj.model].type(el.type)
            if mt.attribute(e.feature) is not None:
                return el.attrs.get(e.feature)
            ref = mt.reference(e.feature)
            if ref is None:
                raise EvaluationError(f"{el.type} has no feature {e.feature!r}")
            ids = el.refs.get(e.feature, [])
            if ref.many:
                return tuple(ElementRef(obj.model, i) for i in ids)
            return ElementRef(obj.model, ids[0]) if ids else None
        if isinstance(e, Eq):
            lv, rv = self.eval(e.left, env), self.eval(e.right, env)
            # keep true distinct from 1
            return isinstance(lv, bool) == isinstance(rv, bool) and lv == rv
        if isinstance(e, And):
            return self._bool(e.left, env) and self._bool(e.right, env)
        if isinstance(e, Or):
            return self._bool(e.left, env) or self._bool(e.right, env)
        if isinstance(e, Not):
            return not self._bool(e.operand, env)
        if isinstance(e, (Exists, Select)):
            items = self._as_list(self.eval(e.collection, env))
            kept = tuple(i for i in items if self._bool(e.predicate, {**env, e.var: i}))
            return bool(kept) if isinstance(e, Exists) else kept
        if isinstance(e, HasMatch):
            ref = env[e.name]
            side = self.side.get(ref.model)
            if side is None:
                raise EvaluationError(f"hasMatch({e.name}) on an element of {ref.model}")
            return ref.id in self.matched[side]
        raise EvaluationError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# entry points


def run_match_phase(
    spec: CompositionSpec, left: Model, right: Model, metamodels: Mapping[str, Metamodel] | Iterable[Metamodel]
) -> list[Correspondence]:
    return Execution(spec, left, right, metamodels).run_match_phase()


def execute(
    spec: CompositionSpec, left: Model, right: Model, metamodels: Mapping[str, Metamodel] | Iterable[Metamodel]
) -> ExecutionResult:
    """Compose ``left`` and ``right`` under ``spec``.

    The composition is assumed to have passed ``check_spec``; runtime failures raise
    a :class:`CompositionError` subclass.
    """
    return Execution(spec, left, right, metamodels).run()


def resolve(source: Iterable[str], activations: Iterable[Activation]) -> tuple[str, ...]:
    """Targets of every activation whose combined sources are exactly ``source``."""
    wanted = frozenset(source)
    out: list[str] = []
    for a in activations:
        if a.sources == wanted:
            out.extend(i for i in a.comp if i not in out)
    return tuple(out)


def equivalents(elements: Iterable[tuple[str, str]], activations: Sequence[Activation]) -> tuple[str, ...]:
    """Per-element resolution as performed by ``equivalent()``: each (side, id)
    maps to the composed targets of the first activation that consumed it."""
    out: list[str] = []
    for side, i in elements:
        for a in activations:
            if i in (a.left if side == "left" else a.right):
                out.extend(a.comp)
                break
        else:
            raise UnresolvedEquivalentError(f"no activation consumed {side} element {i!r}")
    return tuple(out)


# --------------------------------------------------------------------------
# serialization


def result_to_dict(result: ExecutionResult) -> dict[str, Any]:
    return {
        "composed": model_to_dict(result.composed),
        "matchTrace": [{"rule": c.rule, "left": c.left, "right": c.right} for c in result.match_trace],
        "activations": [
            {
                "seq": a.seq,
                "rule": a.rule,
                "kind": a.kind.value,
                "left": list(a.left),
                "right": list(a.right),
                "comp": list(a.comp),
                "outputs": [{"model": m, "id": i} for m, i in a.outputs],
            }
            for a in result.activations
        ],
        "explicitCalls": [
            {"index": c.index, "caller": c.caller, "callee": c.callee, "left": list(c.left), "right": list(c.right)}
            for c in result.explicit_calls
        ],
        "implicitCalls": [
            {
                "index": c.index,
                "caller": c.caller,
                "resolved": [{"side": s, "id": i} for s, i in c.resolved],
                "targets": list(c.targets),
            }
            for c in result.implicit_calls
        ],
        "extraTargets": [model_to_dict(m) for m in result.extra_targets],
    }


def result_from_dict(data: Mapping[str, Any]) -> ExecutionResult:
    try:
        return ExecutionResult(
            parse_model(data["composed"]),
            [Correspondence(c["rule"], c["left"], c["right"]) for c in data["matchTrace"]],
            [
                Activation(
                    a["seq"],
                    a["rule"],
                    RuleKind(a["kind"]),
                    tuple(a["left"]),
                    tuple(a["right"]),
                    tuple(a["comp"]),
                    tuple((o["model"], o["id"]) for o in a.get("outputs", [])),
                )
                for a in data["activations"]
            ],
            [
                ExplicitCallRecord(c["index"], c["caller"], c["callee"], tuple(c["left"]), tuple(c["right"]))
                for c in data["explicitCalls"]
            ],
            [
                ImplicitCallRecord(
                    c["index"], c["caller"], tuple((r["side"], r["id"]) for r in c["resolved"]), tuple(c["targets"])
                )
                for c in data["implicitCalls"]
            ],
            [parse_model(m) for m in data.get("extraTargets", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CompositionError(f"malformed execution log: {exc}") from exc
