from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, SCENARIO, diamond_setup, scenario_setup
from mcomp.dsl import RuleKind, parse_spec
from mcomp.engine import ExecutionResult, ExplicitCallRecord, execute
from mcomp.errors import TraceIntegrityError, UnknownLinkError
from mcomp.model import TRACE_METAMODEL, conforms, load_metamodel, load_model
from mcomp.trace import (
    Context,
    LinkKind,
    Origin,
    TraceLink,
    TraceModel,
    TraceRelationship,
    build_trace,
    children,
    export_dot,
    links_for_element,
    nest_links,
    parents,
    roots,
    trace_execution,
    trace_from_dict,
    trace_from_model,
    trace_to_dict,
    trace_to_model,
)
from oracles import bijection_violations, is_acyclic, reconstruct_relationships
from randgen import generate


def scenario_trace():
    result = scenario_setup().run()
    return result, trace_execution(result)


def link_of(trace: TraceModel, left: str) -> TraceLink:
    [link] = [l for l in trace.links if left in l.left]
    return link


# -- build_trace ---------------------------------------------------------------


def test_scenario_links():
    result, trace = scenario_trace()
    assert [(l.id, l.kind, l.left, l.right) for l in trace.links] == [
        ("l1", LinkKind.MERGING, ("sys",), ("vocab",)),
        ("l2", LinkKind.MERGING, ("author",), ("term-author",)),
        ("l3", LinkKind.MERGING, ("publisher",), ("term-publisher",)),
        ("l4", LinkKind.MERGING, ("book",), ("term-book",)),
        ("l5", LinkKind.TRANSFORMATION, ("chapter",), ()),
    ]
    root = trace.link("l1")
    assert result.composed.get(root.targets[0]).type == "System"
    assert root.context == Context((("rule", "MergeSystemWithVocabulary"), ("activation", "1")))


def test_match_correspondences_produce_no_links():
    result, trace = scenario_trace()
    assert len(result.match_trace) == 4
    assert len(trace.links) == len([a for a in result.activations if a.kind is not RuleKind.MATCH])


def test_zero_activations_give_empty_trace():
    result = scenario_setup("empty.mcomp").run()
    assert build_trace(result) == TraceModel()


def test_two_source_transform_link():
    result = scenario_setup("two_sources.mcomp").run()
    [act] = result.activations
    [link] = build_trace(result).links
    assert link.kind is LinkKind.TRANSFORMATION
    assert (link.left, link.right, link.targets) == (act.left, act.right, act.comp)
    assert len(link.left) == 2


def test_bad_merge_activation_is_an_integrity_error():
    result = scenario_setup().run()
    bad = replace(result.activations[1], left=("author", "book"))
    tampered = replace(result, activations=[result.activations[0], bad, *result.activations[2:]])
    with pytest.raises(TraceIntegrityError, match="merge activation 2"):
        build_trace(tampered)


# -- nest_links ----------------------------------------------------------------


def test_scenario_has_four_implicit_children_of_root():
    _, trace = scenario_trace()
    assert trace.relationships == tuple(
        TraceRelationship("l1", c, Origin.IMPLICIT) for c in ("l2", "l3", "l4", "l5")
    )


def test_no_call_records_no_relationships():
    result = scenario_setup().run()
    quiet = replace(result, implicit_calls=[], explicit_calls=[])
    assert nest_links(build_trace(quiet), quiet).relationships == ()


def test_explicit_variant_has_same_nesting_shape():
    _, native = scenario_trace()
    result = scenario_setup("explicit_call.mcomp").run()
    trace = trace_execution(result)
    shape = lambda t: {(r.parent, r.child) for r in t.relationships}  # noqa: E731
    assert shape(trace) == shape(native)
    assert children(trace, "l1") == ["l2", "l3", "l4", "l5"]
    explicit = [r for r in trace.relationships if r.origin is Origin.EXPLICIT]
    assert explicit == [TraceRelationship("l1", "l5", Origin.EXPLICIT)]


def test_repeated_calls_are_deduplicated():
    setup = scenario_setup()
    text = (SCENARIO / "compose.mcomp").read_text().replace(
        "t.entity = equivalent(s.entity);",
        "t.entity = equivalent(s.entity);\n    t.entity += equivalent(s.entity);\n"
        "    call TransformEntity(s.entity.select(e | not hasMatch(e)));\n"
        "    call TransformEntity(s.entity.select(e | not hasMatch(e)));",
    )
    result = execute(parse_spec(text), setup.left, setup.right, setup.metamodels)
    assert len(result.implicit_calls) == 2 and len(result.explicit_calls) == 2
    trace = trace_execution(result)
    assert len(trace.relationships) == 5


def test_dangling_explicit_call_is_an_integrity_error():
    result = scenario_setup().run()
    ghost = ExplicitCallRecord(99, 1, "TransformEntity", ("author",), ())
    tampered = replace(result, explicit_calls=[ghost])
    with pytest.raises(TraceIntegrityError, match="matches no activation"):
        nest_links(build_trace(tampered), tampered)


# -- queries -------------------------------------------------------------------


def test_children_and_parents():
    _, trace = scenario_trace()
    assert children(trace, "l1") == ["l2", "l3", "l4", "l5"]
    assert children(trace, "l3") == []
    assert parents(trace, "l3") == ["l1"]
    assert parents(trace, "l1") == []
    assert roots(trace) == ["l1"]
    with pytest.raises(UnknownLinkError):
        children(trace, "l42")
    with pytest.raises(UnknownLinkError):
        parents(trace, "nope")


def test_diamond_child_has_both_shelf_links_as_parents():
    setup = diamond_setup()
    result = setup.run()
    trace = trace_execution(result)
    book = link_of(trace, "atlas")
    expected = [r.parent for r in trace.relationships if r.child == book.id]
    shelves = [link_of(trace, "shelf-a").id, link_of(trace, "shelf-b").id]
    assert parents(trace, book.id) == expected == shelves


def test_links_for_element():
    result, trace = scenario_trace()
    scan = lambda i, field: [l.id for l in trace.links if i in getattr(l, field)]  # noqa: E731
    assert links_for_element(trace, "book", "left") == scan("book", "left") == ["l4"]
    system = result.composed.of_type("System")[0].id
    assert links_for_element(trace, system, "target") == scan(system, "targets") == ["l1"]
    assert links_for_element(trace, "term-book", "right") == ["l4"]
    assert links_for_element(trace, "unknown", "left") == []
    with pytest.raises(ValueError):
        links_for_element(trace, "book", "middle")


# -- DOT -----------------------------------------------------------------------


def scenario_dot() -> str:
    setup = scenario_setup()
    result = setup.run()
    trace = trace_execution(result)
    return export_dot(trace, {"left": setup.left, "right": setup.right, "target": result.composed})


def test_dot_counts_match_an_independent_count():
    _, trace = scenario_trace()
    dot = scenario_dot()
    lines = dot.splitlines()
    assert len([l for l in lines if "shape=box" in l]) == 5
    solid = [l for l in lines if "->" in l and "dashed" not in l]
    assert len(solid) == len(trace.relationships) == 4
    expected = sum(len(l.left) + len(l.right) + len(l.targets) for l in trace.links)
    assert expected == 3 + 3 * 3 + 2
    assert len([l for l in lines if "style=dashed" in l]) == expected
    for side, color in (("left", "blue"), ("right", "green"), ("target", "red")):
        assert all(f'"{side}:' in l for l in lines if f"color={color}" in l)


def test_dot_labels():
    dot = scenario_dot()
    assert '"l5" [shape=box, label="TransformationLink l5"];' in dot
    assert '"left:book" [shape=ellipse, label="Entity:Book"];' in dot
    assert '"right:term-book" [shape=ellipse, label="Term:Volume"];' in dot


def test_empty_trace_dot():
    assert export_dot(TraceModel()) == "digraph trace {\n}\n"


def test_dot_matches_golden_and_is_stable():
    assert scenario_dot() == scenario_dot() == (GOLDEN / "trace.dot").read_text()


def test_dot_escapes_quotes():
    link = TraceLink('l"1', LinkKind.MERGING, ("a",), ("b",), ("c",))
    assert r'"l\"1"' in export_dot(TraceModel((link,)))


# -- serialization -------------------------------------------------------------


def test_trace_json_matches_golden():
    _, trace = scenario_trace()
    assert trace_to_dict(trace) == json.loads((GOLDEN / "trace.json").read_text())


def test_trace_round_trips_through_json_and_model():
    _, trace = scenario_trace()
    assert trace_from_dict(json.dumps(trace_to_dict(trace))) == trace
    model = trace_to_model(trace)
    assert conforms(model, TRACE_METAMODEL) == []
    assert trace_from_model(model) == trace


def test_trace_model_invariants():
    link = TraceLink("l1", LinkKind.MERGING, ("a",), ("b",), ("c",))
    with pytest.raises(TraceIntegrityError):
        TraceModel((link, link))
    with pytest.raises(TraceIntegrityError):
        TraceModel((link,), (TraceRelationship("l1", "l2", Origin.IMPLICIT),))
    with pytest.raises(TraceIntegrityError):
        TraceModel((link,), (TraceRelationship("l1", "l1", Origin.IMPLICIT),))
    with pytest.raises(ValueError):
        Context((("a", "1"), ("a", "2")))


# -- properties over generated runs ---------------------------------------------


def assert_trace_properties(result: ExecutionResult, trace: TraceModel) -> None:
    assert bijection_violations(result, trace) == []
    for link in trace.merging:
        assert len(link.left) == len(link.right) == len(link.targets) == 1
    got = {(r.parent, r.child, r.origin.value) for r in trace.relationships}
    assert len(got) == len(trace.relationships)
    assert got == reconstruct_relationships(result, trace)


@pytest.mark.parametrize("factory", [scenario_setup, diamond_setup, lambda: scenario_setup("explicit_call.mcomp")])
def test_properties_on_fixtures(factory):
    result = factory().run()
    trace = trace_execution(result)
    assert_trace_properties(result, trace)
    assert is_acyclic(trace)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_properties_on_generated_runs(seed):
    case = generate(seed)
    result = execute(parse_spec(case.spec_text), case.left, case.right, case.metamodels)
    trace = trace_execution(result)
    assert_trace_properties(result, trace)
    assert is_acyclic(trace)
    assert trace_from_dict(json.dumps(trace_to_dict(trace))) == trace
    assert trace_from_model(trace_to_model(trace)) == trace


def test_mutual_resolution_can_form_a_cycle():
    # Outside the layered generator the relationship graph need not be acyclic.
    mm = load_metamodel({"name": "ring", "types": [
        {"name": "Node", "attributes": [{"name": "name", "kind": "string"}],
         "references": [{"name": "peer", "target": "Node", "many": True}]}]})
    left = load_model({"id": "l", "metamodel": "ring", "role": "left", "elements": [
        {"id": "a", "type": "Node", "refs": {"peer": ["b"]}},
        {"id": "b", "type": "Node", "refs": {"peer": ["a"]}}]}, mm)
    right = load_model({"id": "r", "metamodel": "ring", "role": "right", "elements": []}, mm)
    spec = parse_spec("""composition Ring
  left L : ring
  right R : ring
  target T : ring

rule Copy
  transform s : L!Node
  to t : T!Node {
    t.peer = equivalent(s.peer);
  }
""")
    trace = trace_execution(execute(spec, left, right, [mm]))
    assert {(r.parent, r.child) for r in trace.relationships} == {("l1", "l2"), ("l2", "l1")}
    assert not is_acyclic(trace)
