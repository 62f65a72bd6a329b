"""Independent re-derivations used as test oracles."""

from __future__ import annotations

from mcomp.dsl import RuleKind
from mcomp.engine import Activation, ExecutionResult
from mcomp.model import Model, ModelElement
from mcomp.trace import LinkKind, TraceModel


def link_kind(a: Activation) -> LinkKind:
    return LinkKind.MERGING if a.kind is RuleKind.MERGE else LinkKind.TRANSFORMATION


def reconstruct_relationships(result: ExecutionResult, trace: TraceModel) -> set[tuple[str, str, str]]:
    """Relationships straight from the call logs, without going through nest_links."""
    link_by_fields = {(l.kind, l.left, l.right, l.targets): l.id for l in trace.links}

    def link_for(a: Activation) -> str:
        return link_by_fields[(link_kind(a), a.left, a.right, a.comp)]

    out = set()
    for rec in result.explicit_calls:
        callee = next(a for a in result.activations if (a.rule, a.left, a.right) == (rec.callee, rec.left, rec.right))
        out.add((link_for(result.activation(rec.caller)), link_for(callee), "explicit"))
    for rec in result.implicit_calls:
        for side, i in rec.resolved:
            producer = next(a for a in result.activations if i in (a.left if side == "left" else a.right))
            out.add((link_for(result.activation(rec.caller)), link_for(producer), "implicit"))
    return {r for r in out if r[0] != r[1]}


def bijection_violations(result: ExecutionResult, trace: TraceModel) -> list[str]:
    traced = [a for a in result.activations if a.kind is not RuleKind.MATCH]
    problems = []
    if len(trace.links) != len(traced):
        problems.append(f"{len(trace.links)} links for {len(traced)} activations")
    images = []
    for a in traced:
        hits = [l for l in trace.links if (l.kind, l.left, l.right, l.targets) == (link_kind(a), a.left, a.right, a.comp)]
        if len(hits) != 1:
            problems.append(f"activation {a.seq} matches {len(hits)} links")
        else:
            images.append(hits[0].id)
    if len(set(images)) != len(images):
        problems.append("two activations share a link")
    return problems


def is_acyclic(trace: TraceModel) -> bool:
    edges: dict[str, list[str]] = {}
    for r in trace.relationships:
        edges.setdefault(r.parent, []).append(r.child)
    state: dict[str, int] = {}

    def visit(n: str) -> bool:
        if state.get(n) == 1:
            return False
        if state.get(n) == 2:
            return True
        state[n] = 1
        ok = all(visit(c) for c in edges.get(n, []))
        state[n] = 2
        return ok

    return all(visit(l.id) for l in trace.links)


def same_modulo_ids(a: Model, b: Model) -> bool:
    """Element-by-element equality after mapping ids by creation order."""
    if len(a.elements) != len(b.elements):
        return False
    mapping = {x.id: y.id for x, y in zip(a.elements, b.elements)}
    for x, y in zip(a.elements, b.elements):
        refs = {k: [mapping.get(i, i) for i in v] for k, v in x.refs.items()}
        if ModelElement(mapping[x.id], x.type, x.attrs, refs) != y:
            return False
    return True
