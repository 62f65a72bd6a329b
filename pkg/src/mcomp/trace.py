"""Trace models: one link per merge/transform activation, nested along calls.

Links are built from the activation log, then relationships are added from
the explicit and implicit call records. Match rules are never traced.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import Enum
from typing import Any

from mcomp.dsl.ast import RuleKind
from mcomp.engine import Activation, ExecutionResult, ExplicitCallRecord
from mcomp.errors import DocumentError, TraceIntegrityError, UnknownLinkError
from mcomp.model import LINK_TYPES, TRACE_MM_NAME, Model, ModelElement, Role


class LinkKind(str, Enum):
    MERGING = "merging"
    TRANSFORMATION = "transformation"

    @property
    def metatype(self) -> str:
        return "MergingLink" if self is LinkKind.MERGING else "TransformationLink"


class Origin(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"


@dataclass(frozen=True)
class Context:
    attributes: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        names = [n for n, _ in self.attributes]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate context attribute names in {names}")

    def get(self, name: str) -> str | None:
        return dict(self.attributes).get(name)


@dataclass(frozen=True)
class TraceLink:
    id: str
    kind: LinkKind
    left: tuple[str, ...]
    right: tuple[str, ...]
    targets: tuple[str, ...]
    context: Context | None = None

    @property
    def key(self) -> tuple[LinkKind, tuple[str, ...], tuple[str, ...], tuple[str, ...]]:
        return (self.kind, self.left, self.right, self.targets)


@dataclass(frozen=True)
class TraceRelationship:
    parent: str
    child: str
    origin: Origin


@dataclass(frozen=True)
class TraceModel:
    links: tuple[TraceLink, ...] = ()
    relationships: tuple[TraceRelationship, ...] = ()

    def __post_init__(self) -> None:
        index: dict[str, TraceLink] = {}
        for link in self.links:
            if link.id in index:
                raise TraceIntegrityError(f"duplicate link id {link.id!r}")
            index[link.id] = link
        object.__setattr__(self, "_index", index)
        for r in self.relationships:
            if r.parent not in self._index or r.child not in self._index:
                raise TraceIntegrityError(f"relationship {r.parent} -> {r.child} references a missing link")
            if r.parent == r.child:
                raise TraceIntegrityError(f"relationship from {r.parent} to itself")

    def link(self, link_id: str) -> TraceLink:
        try:
            return self._index[link_id]
        except KeyError:
            raise UnknownLinkError(f"unknown link {link_id!r}") from None

    def __contains__(self, link_id: str) -> bool:
        return link_id in self._index

    @property
    def merging(self) -> list[TraceLink]:
        return [l for l in self.links if l.kind is LinkKind.MERGING]

    @property
    def transformation(self) -> list[TraceLink]:
        return [l for l in self.links if l.kind is LinkKind.TRANSFORMATION]


# --------------------------------------------------------------------------
# generation


def build_trace(result: ExecutionResult) -> TraceModel:
    """One link per merge/transform activation, in activation order."""
    links = []
    for a in result.activations:
        if a.kind is RuleKind.MATCH:
            continue
        if a.kind is RuleKind.MERGE and not (len(a.left) == len(a.right) == len(a.comp) == 1):
            raise TraceIntegrityError(
                f"merge activation {a.seq} ({a.rule}) has {len(a.left)}/{len(a.right)}/{len(a.comp)} elements"
            )
        kind = LinkKind.MERGING if a.kind is RuleKind.MERGE else LinkKind.TRANSFORMATION
        context = Context((("rule", a.rule), ("activation", str(a.seq))))
        links.append(TraceLink(f"l{len(links) + 1}", kind, a.left, a.right, a.comp, context))
    return TraceModel(tuple(links))


def _link_map(trace: TraceModel, activations: Iterable[Activation]) -> dict[int, TraceLink]:
    """Map activation seq -> link by field equality (kind, left, right, targets)."""
    by_key: dict[tuple, list[TraceLink]] = {}
    for link in trace.links:
        by_key.setdefault(link.key, []).append(link)
    out = {}
    for a in activations:
        if a.kind is RuleKind.MATCH:
            continue
        kind = LinkKind.MERGING if a.kind is RuleKind.MERGE else LinkKind.TRANSFORMATION
        candidates = by_key.get((kind, a.left, a.right, a.comp), [])
        if len(candidates) > 1:
            candidates = [l for l in candidates if l.context and l.context.get("activation") == str(a.seq)]
        if len(candidates) != 1:
            raise TraceIntegrityError(f"activation {a.seq} ({a.rule}) has {len(candidates)} matching links")
        out[a.seq] = candidates[0]
    return out


def nest_links(trace: TraceModel, result: ExecutionResult) -> TraceModel:
    """Add parent/child relationships mirroring the explicit and implicit calls."""
    links = _link_map(trace, result.activations)
    by_call = {(a.rule, a.left, a.right): a for a in result.activations}
    first_consumer: dict[tuple[str, str], Activation] = {}
    for a in result.activations:
        for i in a.left:
            first_consumer.setdefault(("left", i), a)
        for i in a.right:
            first_consumer.setdefault(("right", i), a)

    seen: set[tuple[str, str, Origin]] = set()
    relationships = list(trace.relationships)
    seen.update((r.parent, r.child, r.origin) for r in relationships)

    def add(parent: int, child: Activation, origin: Origin) -> None:
        p = links[parent].id
        c = links[child.seq].id
        if p == c or (p, c, origin) in seen:
            return
        seen.add((p, c, origin))
        relationships.append(TraceRelationship(p, c, origin))

    for record in result.calls():
        if record.caller not in links:
            raise TraceIntegrityError(f"call {record.index} issued by unknown activation {record.caller}")
        if isinstance(record, ExplicitCallRecord):
            callee = by_call.get((record.callee, record.left, record.right))
            if callee is None:
                raise TraceIntegrityError(
                    f"explicit call {record.index} to {record.callee}{record.left + record.right} matches no activation"
                )
            add(record.caller, callee, Origin.EXPLICIT)
        else:
            for element in record.resolved:
                producer = first_consumer.get(element)
                if producer is None:
                    raise TraceIntegrityError(f"implicit call {record.index} resolved {element} with no producer")
                add(record.caller, producer, Origin.IMPLICIT)
    return TraceModel(trace.links, tuple(relationships))


def trace_execution(result: ExecutionResult) -> TraceModel:
    return nest_links(build_trace(result), result)


# --------------------------------------------------------------------------
# queries


def children(trace: TraceModel, link_id: str) -> list[str]:
    trace.link(link_id)
    out: list[str] = []
    for r in trace.relationships:
        if r.parent == link_id and r.child not in out:
            out.append(r.child)
    return out


def parents(trace: TraceModel, link_id: str) -> list[str]:
    trace.link(link_id)
    out: list[str] = []
    for r in trace.relationships:
        if r.child == link_id and r.parent not in out:
            out.append(r.parent)
    return out


def roots(trace: TraceModel) -> list[str]:
    has_parent = {r.child for r in trace.relationships}
    return [l.id for l in trace.links if l.id not in has_parent]


SIDES = ("left", "right", "target")


def links_for_element(trace: TraceModel, element_id: str, side: str) -> list[str]:
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, not {side!r}")
    field_name = "targets" if side == "target" else side
    return [l.id for l in trace.links if element_id in getattr(l, field_name)]


# --------------------------------------------------------------------------
# DOT

_SIDE_COLORS = {"left": "blue", "right": "green", "target": "red"}


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(trace: TraceModel, models: Mapping[str, Model] | None = None) -> str:
    """Graphviz rendering: links as boxes, relationships as solid edges,
    and dashed blue/green/red edges to left/right/composed elements."""
    models = models or {}
    nodes: list[str] = []
    edges: list[str] = []
    elements: dict[str, str] = {}
    for link in trace.links:
        label = f"{link.kind.metatype} {link.id}"
        nodes.append(f"  {_quote(link.id)} [shape=box, label={_quote(label)}];")
    for r in trace.relationships:
        edges.append(f"  {_quote(r.parent)} -> {_quote(r.child)};")
    for link in trace.links:
        for side, ids in (("left", link.left), ("right", link.right), ("target", link.targets)):
            model = models.get(side)
            for element_id in ids:
                node = f"{side}:{element_id}"
                if node not in elements:
                    label = model.get(element_id).label if model and element_id in model else element_id
                    elements[node] = label
                    nodes.append(f"  {_quote(node)} [shape=ellipse, label={_quote(label)}];")
                edges.append(f"  {_quote(link.id)} -> {_quote(node)} [style=dashed, color={_SIDE_COLORS[side]}];")
    body = "".join(line + "\n" for line in nodes + edges)
    return "digraph trace {\n" + body + "}\n"


# --------------------------------------------------------------------------
# serialization


def trace_to_dict(trace: TraceModel) -> dict[str, Any]:
    return {
        "links": [
            {
                "id": l.id,
                "kind": l.kind.value,
                "left": list(l.left),
                "right": list(l.right),
                "targets": list(l.targets),
                "context": dict(l.context.attributes) if l.context else {},
            }
            for l in trace.links
        ],
        "relationships": [
            {"parent": r.parent, "child": r.child, "origin": r.origin.value} for r in trace.relationships
        ],
    }


def trace_from_dict(data: str | Mapping[str, Any]) -> TraceModel:
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"trace: invalid JSON: {exc}") from exc
    try:
        links = tuple(
            TraceLink(
                l["id"],
                LinkKind(l["kind"]),
                tuple(l["left"]),
                tuple(l["right"]),
                tuple(l["targets"]),
                Context(tuple((str(k), str(v)) for k, v in l["context"].items())) if l.get("context") else None,
            )
            for l in data["links"]
        )
        rels = tuple(TraceRelationship(r["parent"], r["child"], Origin(r["origin"])) for r in data["relationships"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DocumentError(f"trace: malformed document: {exc}") from exc
    return TraceModel(links, rels)


def trace_to_model(trace: TraceModel, model_id: str = "trace") -> Model:
    """The trace as an ordinary model conforming to the built-in trace metamodel."""
    elements: list[ModelElement] = []
    for link in trace.links:
        refs = {"left": list(link.left), "right": list(link.right), "targets": list(link.targets)}
        refs = {k: v for k, v in refs.items() if v}
        el = ModelElement(link.id, link.kind.metatype, {}, refs)
        elements.append(el)
        if link.context is not None:
            ctx = ModelElement(f"{link.id}-ctx", "Context")
            el.refs["context"] = [ctx.id]
            elements.append(ctx)
            for i, (name, value) in enumerate(link.context.attributes, 1):
                attr = ModelElement(f"{ctx.id}-{i}", "ContextAttribute", {"name": name, "value": value})
                ctx.refs.setdefault("attributes", []).append(attr.id)
                elements.append(attr)
    for i, r in enumerate(trace.relationships, 1):
        elements.append(
            ModelElement(f"r{i}", "TraceRelationship", {"origin": r.origin.value}, {"parent": [r.parent], "child": [r.child]})
        )
    return Model(model_id, TRACE_MM_NAME, Role.TRACE, tuple(elements))


def trace_from_model(model: Model) -> TraceModel:
    """Read links and relationships back out of a trace-metamodel model."""
    if model.metamodel != TRACE_MM_NAME:
        raise DocumentError(f"model {model.id} does not conform to {TRACE_MM_NAME}")
    links = []
    for el in model.elements:
        if el.type not in LINK_TYPES:
            continue
        context = None
        for ctx_id in el.refs.get("context", []):
            ctx = model.get(ctx_id)
            attrs = [model.get(a) for a in ctx.refs.get("attributes", [])]
            context = Context(tuple((a.attrs["name"], a.attrs["value"]) for a in attrs))
        links.append(
            TraceLink(
                el.id,
                LinkKind(LINK_TYPES[el.type]),
                tuple(el.refs.get("left", [])),
                tuple(el.refs.get("right", [])),
                tuple(el.refs.get("targets", [])),
                context,
            )
        )
    rels = tuple(
        TraceRelationship(el.refs["parent"][0], el.refs["child"][0], Origin(el.attrs["origin"]))
        for el in model.elements
        if el.type == "TraceRelationship"
    )
    return TraceModel(tuple(links), rels)
