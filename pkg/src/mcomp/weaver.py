"""Traceability weaving: rewrite a spec so that running it also builds its trace.

The rewrite happens in three passes over the syntax tree:

1. declare a second target model typed by the built-in trace metamodel;
2. give every merge/transform rule an extra output parameter holding its
   trace link, and initialise the link's ``left``, ``right`` and ``targets``;
3. after every ``equivalent()`` or explicit call in a body, add a ``nest``
   statement that records the relationship to the callee's link.

The woven spec is an ordinary spec: executing it yields the composed model
as first target and the trace model as second target.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace
from typing import Any

from mcomp.dsl.ast import (
    CallStmt,
    CompositionSpec,
    ModelDecl,
    Name,
    Nest,
    Param,
    Rule,
    RuleKind,
    SetCall,
    SetFeature,
    SetResolve,
    Statement,
)
from mcomp.dsl.parser import RESERVED
from mcomp.engine import ExecutionResult, execute
from mcomp.errors import WeaveError
from mcomp.model import TRACE_MM_NAME, Metamodel, Model
from mcomp.trace import TraceModel, trace_from_model


@dataclass
class WeaveReport:
    added_target: ModelDecl
    instrumented_rules: list[tuple[str, str]] = field(default_factory=list)
    nesting_sites: list[tuple[str, int, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "addedTarget": {"alias": self.added_target.alias, "metamodel": self.added_target.metamodel},
            "instrumentedRules": [{"rule": r, "param": p} for r, p in self.instrumented_rules],
            "nestingSites": [{"rule": r, "statement": i, "origin": o} for r, i, o in self.nesting_sites],
        }


def _fresh(base: str, taken: Iterable[str]) -> str:
    taken = set(taken) | RESERVED
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}{n}"
    return name


def _instrument(rule: Rule, trace_alias: str, primary: str, report: WeaveReport) -> Rule:
    link = _fresh("link", (p.name for p in rule.inputs + rule.out))
    link_type = "MergingLink" if rule.kind is RuleKind.MERGE else "TransformationLink"
    report.instrumented_rules.append((rule.name, link))

    init: list[Statement] = []
    for feature, params in (
        ("left", rule.in_left),
        ("right", rule.in_right),
        ("targets", [p for p in rule.out if p.alias == primary]),
    ):
        for i, p in enumerate(params):
            init.append(SetFeature(link, feature, Name(p.name), append=i > 0))

    body: list[Statement] = []
    for index, stmt in enumerate(rule.body):
        body.append(stmt)
        if isinstance(stmt, SetResolve):
            body.append(Nest(link, "implicit", source=stmt.source))
        elif isinstance(stmt, (SetCall, CallStmt)):
            body.append(Nest(link, "explicit", call=stmt.call))
        elif isinstance(stmt, Nest):
            raise WeaveError(f"rule {rule.name} already contains nesting statements")
        else:
            continue
        report.nesting_sites.append((rule.name, index, body[-1].origin))

    out = rule.out + (Param(link, trace_alias, link_type),)
    return replace(rule, out=out, body=tuple(init + body))


def weave_traceability(spec: CompositionSpec) -> tuple[CompositionSpec, WeaveReport]:
    if len(spec.targets) != 1:
        raise WeaveError(
            f"spec {spec.name} already declares {len(spec.targets)} target models; "
            "weaving needs exactly one so the trace model can be added"
        )
    aliases = [d.alias for d in (spec.left, spec.right, *spec.targets)]
    decl = ModelDecl(_fresh("Trace", aliases), TRACE_MM_NAME)
    report = WeaveReport(decl)
    rules = []
    for rule in spec.rules:
        if rule.kind is RuleKind.MATCH:
            rules.append(rule)
        else:
            rules.append(_instrument(rule, decl.alias, spec.primary.alias, report))
    woven = replace(spec, targets=spec.targets + (decl,), rules=tuple(rules))
    return woven, report


def run_woven(
    spec: CompositionSpec, left: Model, right: Model, metamodels: Mapping[str, Metamodel] | Iterable[Metamodel]
) -> tuple[ExecutionResult, Model]:
    """Weave ``spec``, execute it, and return the result with its trace model."""
    woven, _ = weave_traceability(spec)
    result = execute(woven, left, right, metamodels)
    return result, result.extra_targets[0]


# --------------------------------------------------------------------------
# oracle between the native trace builder and the woven spec


@dataclass
class Equivalence:
    equivalent: bool
    mismatches: list[str]

    def __bool__(self) -> bool:
        return self.equivalent


def check_equivalence(native: TraceModel, woven_output: Model | TraceModel) -> Equivalence:
    """Compare two traces up to link identity.

    Links are identified by (kind, left, right, targets); relationships by
    the identities of their endpoints plus their origin.
    """
    woven = woven_output if isinstance(woven_output, TraceModel) else trace_from_model(woven_output)
    mismatches: list[str] = []

    def keys(trace: TraceModel) -> tuple[dict[tuple, int], dict[str, tuple]]:
        counts: dict[tuple, int] = {}
        by_id = {}
        for link in trace.links:
            key = (link.kind.value, link.left, link.right, link.targets)
            counts[key] = counts.get(key, 0) + 1
            by_id[link.id] = key
        return counts, by_id

    native_counts, native_ids = keys(native)
    woven_counts, woven_ids = keys(woven)
    for key in list(native_counts) + [k for k in woven_counts if k not in native_counts]:
        n, w = native_counts.get(key, 0), woven_counts.get(key, 0)
        if n != w:
            mismatches.append(f"link {key}: {n} native, {w} woven")
        elif n > 1:
            mismatches.append(f"link {key} is not unique ({n} copies); no isomorphism can be fixed")

    def rels(trace: TraceModel, ids: dict[str, tuple]) -> set[tuple]:
        return {(ids[r.parent], ids[r.child], r.origin.value) for r in trace.relationships}

    native_rels, woven_rels = rels(native, native_ids), rels(woven, woven_ids)
    for r in sorted(native_rels - woven_rels, key=repr):
        mismatches.append(f"relationship {r} missing from woven trace")
    for r in sorted(woven_rels - native_rels, key=repr):
        mismatches.append(f"relationship {r} missing from native trace")
    if len(native.relationships) != len(native_rels) or len(woven.relationships) != len(woven_rels):
        mismatches.append("duplicate relationships")
    return Equivalence(not mismatches, mismatches)
