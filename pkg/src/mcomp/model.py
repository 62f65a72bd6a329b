"""Metamodels, models and conformance.

Models are flat element tables: every element has a stable id, a type name,
primitive attributes and ordered reference lists. Containment is a flag on
the reference, not a separate structure.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Union

from mcomp.errors import ConformanceError, DocumentError, ValidationError, Violation

Primitive = Union[str, bool, int]

# Reference target accepted by the built-in trace metamodel: the value is an
# element id living in another model (left, right or composed).
ANY_TARGET = "*"
TRACE_MM_NAME = "trace-mm"


class Role(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    COMPOSED = "composed"
    TRACE = "trace"


class Kind(str, Enum):
    STRING = "string"
    BOOLEAN = "boolean"
    INTEGER = "integer"

    def accepts(self, value: object) -> bool:
        if self is Kind.BOOLEAN:
            return isinstance(value, bool)
        if self is Kind.INTEGER:
            return isinstance(value, int) and not isinstance(value, bool)
        return isinstance(value, str)


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: Kind


@dataclass(frozen=True)
class Reference:
    name: str
    target: str
    many: bool = False
    containment: bool = False

    @property
    def external(self) -> bool:
        return self.target == ANY_TARGET


@dataclass(frozen=True)
class MetaType:
    name: str
    attributes: tuple[Attribute, ...] = ()
    references: tuple[Reference, ...] = ()

    def attribute(self, name: str) -> Attribute | None:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def reference(self, name: str) -> Reference | None:
        for r in self.references:
            if r.name == name:
                return r
        return None


@dataclass(frozen=True)
class Metamodel:
    name: str
    types: tuple[MetaType, ...] = ()

    def __post_init__(self) -> None:
        problems = []
        seen: set[str] = set()
        for t in self.types:
            if t.name in seen:
                problems.append(f"duplicate type name {t.name!r}")
            seen.add(t.name)
            features = [a.name for a in t.attributes] + [r.name for r in t.references]
            dupes = sorted({f for f in features if features.count(f) > 1})
            for f in dupes:
                problems.append(f"duplicate feature {f!r} on type {t.name!r}")
        for t in self.types:
            for r in t.references:
                if r.target != ANY_TARGET and r.target not in seen:
                    problems.append(
                        f"reference {t.name}.{r.name} targets undeclared type {r.target!r}"
                    )
        if problems:
            raise ValidationError(f"metamodel {self.name!r}: " + "; ".join(problems))

    def type(self, name: str) -> MetaType | None:
        for t in self.types:
            if t.name == name:
                return t
        return None


@dataclass
class ModelElement:
    id: str
    type: str
    attrs: dict[str, Any] = field(default_factory=dict)
    refs: dict[str, list[str]] = field(default_factory=dict)

    @property
    def label(self) -> str:
        name = self.attrs.get("name")
        return f"{self.type}:{name if name is not None else self.id}"


@dataclass
class Model:
    id: str
    metamodel: str
    role: Role
    elements: tuple[ModelElement, ...] = ()

    def __post_init__(self) -> None:
        self.elements = tuple(self.elements)
        self.role = Role(self.role)
        self._index = {}
        for el in self.elements:
            self._index.setdefault(el.id, el)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Model):
            return NotImplemented
        return (self.id, self.metamodel, self.role, self.elements) == (
            other.id,
            other.metamodel,
            other.role,
            other.elements,
        )

    def __contains__(self, element_id: str) -> bool:
        return element_id in self._index

    def __len__(self) -> int:
        return len(self.elements)

    def get(self, element_id: str) -> ModelElement:
        return self._index[element_id]

    def of_type(self, type_name: str) -> list[ModelElement]:
        return [el for el in self.elements if el.type == type_name]


# --------------------------------------------------------------------------
# documents


def _as_doc(doc: str | bytes | Mapping[str, Any], what: str) -> Mapping[str, Any]:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"{what}: invalid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise DocumentError(f"{what}: document root must be an object")
    return doc


def _require(doc: Mapping[str, Any], key: str, kind: type | tuple[type, ...], where: str) -> Any:
    if key not in doc:
        raise DocumentError(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise DocumentError(f"{where}: field {key!r} has the wrong JSON type")
    return value


def load_metamodel(doc: str | bytes | Mapping[str, Any]) -> Metamodel:
    doc = _as_doc(doc, "metamodel")
    name = _require(doc, "name", str, "metamodel")
    types = []
    for i, t in enumerate(_require(doc, "types", list, f"metamodel {name}")):
        where = f"metamodel {name} types[{i}]"
        if not isinstance(t, Mapping):
            raise DocumentError(f"{where}: expected an object")
        attrs = []
        for a in t.get("attributes", []):
            kind = _require(a, "kind", str, where)
            try:
                attrs.append(Attribute(_require(a, "name", str, where), Kind(kind)))
            except ValueError:
                raise DocumentError(f"{where}: unknown primitive kind {kind!r}") from None
        refs = [
            Reference(
                _require(r, "name", str, where),
                _require(r, "target", str, where),
                bool(r.get("many", False)),
                bool(r.get("containment", False)),
            )
            for r in t.get("references", [])
        ]
        types.append(MetaType(_require(t, "name", str, where), tuple(attrs), tuple(refs)))
    return Metamodel(name, tuple(types))


def load_model(doc: str | bytes | Mapping[str, Any], mm: Metamodel) -> Model:
    """Parse a model document and reject it unless it conforms to ``mm``."""
    model = parse_model(doc)
    violations = conforms(model, mm)
    if violations:
        raise ConformanceError(violations)
    return model


def parse_model(doc: str | bytes | Mapping[str, Any]) -> Model:
    """Parse a model document without checking conformance."""
    doc = _as_doc(doc, "model")
    model_id = _require(doc, "id", str, "model")
    where = f"model {model_id}"
    role = _require(doc, "role", str, where)
    try:
        role = Role(role)
    except ValueError:
        raise DocumentError(f"{where}: unknown role {role!r}") from None
    elements = []
    for i, e in enumerate(_require(doc, "elements", list, where)):
        ew = f"{where} elements[{i}]"
        if not isinstance(e, Mapping):
            raise DocumentError(f"{ew}: expected an object")
        attrs = dict(e.get("attrs", {}))
        refs = {}
        for k, v in dict(e.get("refs", {})).items():
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise DocumentError(f"{ew}: reference {k!r} must be a list of ids")
            refs[k] = list(v)
        elements.append(
            ModelElement(_require(e, "id", str, ew), _require(e, "type", str, ew), attrs, refs)
        )
    return Model(model_id, _require(doc, "metamodel", str, where), role, tuple(elements))


def conforms(model: Model, mm: Metamodel) -> list[Violation]:
    out: list[Violation] = []
    if model.metamodel != mm.name:
        out.append(
            Violation(None, "metamodel", f"model declares {model.metamodel!r}, checked against {mm.name!r}")
        )
    seen: set[str] = set()
    for el in model.elements:
        if el.id in seen:
            out.append(Violation(el.id, "unique-id", "duplicate element id"))
        seen.add(el.id)

    container: dict[str, str] = {}
    for el in model.elements:
        mt = mm.type(el.type)
        if mt is None:
            out.append(Violation(el.id, "type", f"unknown type {el.type!r}"))
            continue
        for name, value in el.attrs.items():
            attr = mt.attribute(name)
            if attr is None:
                out.append(Violation(el.id, "attribute", f"{name!r} is not declared on {mt.name}"))
            elif not attr.kind.accepts(value):
                out.append(
                    Violation(el.id, "attribute-kind", f"{name!r} expects {attr.kind.value}, got {value!r}")
                )
        for name, ids in el.refs.items():
            ref = mt.reference(name)
            if ref is None:
                out.append(Violation(el.id, "reference", f"{name!r} is not declared on {mt.name}"))
                continue
            if not ref.many and len(ids) > 1:
                out.append(
                    Violation(el.id, "multiplicity", f"{name!r} is single-valued but holds {len(ids)} ids")
                )
            if ref.external:
                continue
            for target in ids:
                if target not in model:
                    out.append(Violation(el.id, "dangling", f"{name!r} points at missing element {target!r}"))
                    continue
                target_type = model.get(target).type
                if target_type != ref.target:
                    out.append(
                        Violation(el.id, "reference-type", f"{name!r} expects {ref.target}, {target!r} is {target_type}")
                    )
                if ref.containment:
                    owner = container.setdefault(target, el.id)
                    if owner != el.id:
                        out.append(
                            Violation(target, "containment", f"contained by both {owner!r} and {el.id!r}")
                        )
    return out


# --------------------------------------------------------------------------
# serialization


def metamodel_to_dict(mm: Metamodel) -> dict[str, Any]:
    return {
        "name": mm.name,
        "types": [
            {
                "name": t.name,
                "attributes": [{"name": a.name, "kind": a.kind.value} for a in t.attributes],
                "references": [
                    {"name": r.name, "target": r.target, "many": r.many, "containment": r.containment}
                    for r in t.references
                ],
            }
            for t in mm.types
        ],
    }


def model_to_dict(model: Model) -> dict[str, Any]:
    return {
        "id": model.id,
        "metamodel": model.metamodel,
        "role": model.role.value,
        "elements": [
            {"id": el.id, "type": el.type, "attrs": dict(el.attrs), "refs": {k: list(v) for k, v in el.refs.items()}}
            for el in model.elements
        ],
    }


def dumps(data: Any) -> str:
    """Canonical JSON text used for every emitted file."""
    return json.dumps(data, indent=2, ensure_ascii=False) + "\n"


def read_metamodel(path: str | Path) -> Metamodel:
    return load_metamodel(Path(path).read_text(encoding="utf-8"))


def read_model(path: str | Path, metamodels: Mapping[str, Metamodel] | Iterable[Metamodel]) -> Model:
    if not isinstance(metamodels, Mapping):
        metamodels = {mm.name: mm for mm in metamodels}
    model = parse_model(Path(path).read_text(encoding="utf-8"))
    mm = metamodels.get(model.metamodel)
    if mm is None:
        raise DocumentError(f"model {model.id}: metamodel {model.metamodel!r} was not supplied")
    violations = conforms(model, mm)
    if violations:
        raise ConformanceError(violations)
    return model


def _link_type(name: str) -> MetaType:
    return MetaType(
        name,
        (),
        (
            Reference("left", ANY_TARGET, many=True),
            Reference("right", ANY_TARGET, many=True),
            Reference("targets", ANY_TARGET, many=True),
            Reference("context", "Context", containment=True),
        ),
    )


TRACE_METAMODEL = Metamodel(
    TRACE_MM_NAME,
    (
        _link_type("MergingLink"),
        _link_type("TransformationLink"),
        MetaType(
            "TraceRelationship",
            (Attribute("origin", Kind.STRING),),
            (Reference("parent", ANY_TARGET), Reference("child", ANY_TARGET)),
        ),
        MetaType(
            "Context",
            (),
            (Reference("attributes", "ContextAttribute", many=True, containment=True),),
        ),
        MetaType("ContextAttribute", (Attribute("name", Kind.STRING), Attribute("value", Kind.STRING))),
    ),
)
LINK_TYPES = {"MergingLink": "merging", "TransformationLink": "transformation"}
