from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SCENARIO, diamond_setup, scenario_setup
from mcomp.dsl import RuleKind, check_spec, parse_spec, print_spec
from mcomp.dsl.ast import Nest, SetFeature
from mcomp.engine import execute
from mcomp.errors import WeaveError
from mcomp.model import TRACE_METAMODEL, Model, conforms
from mcomp.trace import trace_execution, trace_from_model
from mcomp.weaver import check_equivalence, run_woven, weave_traceability
from oracles import same_modulo_ids
from randgen import generate


def test_scenario_weave_report(scenario):
    woven, report = weave_traceability(scenario.spec)
    assert [t.metamodel for t in woven.targets] == ["entities", "trace-mm"]
    assert report.added_target.alias == "Trace"
    assert report.instrumented_rules == [
        ("MergeEntityWithTerm", "link"),
        ("MergeSystemWithVocabulary", "link"),
        ("TransformEntity", "link"),
    ]
    assert report.nesting_sites == [("MergeSystemWithVocabulary", 0, "implicit")]
    assert check_spec(woven, scenario.metamodels) == []


def test_every_traced_rule_is_instrumented_once(scenario):
    woven, report = weave_traceability(scenario.spec)
    traced = [r.name for r in scenario.spec.rules if r.kind is not RuleKind.MATCH]
    assert sorted(r for r, _ in report.instrumented_rules) == sorted(traced)
    for name in traced:
        rule = woven.rule(name)
        link = rule.out[-1]
        assert link.alias == "Trace"
        assert link.type == ("MergingLink" if rule.kind is RuleKind.MERGE else "TransformationLink")
        features = [s.feature for s in rule.body if isinstance(s, SetFeature) and s.target == link.name]
        assert "targets" in features and "left" in features


def test_nesting_statement_follows_its_site(scenario):
    woven, _ = weave_traceability(scenario.spec)
    body = woven.rule("MergeSystemWithVocabulary").body
    nests = [i for i, s in enumerate(body) if isinstance(s, Nest)]
    assert nests == [len(body) - 1]
    assert body[-1].source == body[-2].source


def test_match_rules_are_untouched(scenario):
    woven, _ = weave_traceability(scenario.spec)
    for rule in scenario.spec.rules:
        if rule.kind is RuleKind.MATCH:
            assert woven.rule(rule.name) == rule


def test_zero_rule_spec():
    spec = scenario_setup("empty.mcomp").spec
    woven, report = weave_traceability(spec)
    assert len(woven.targets) == 2 and woven.rules == ()
    assert report.instrumented_rules == [] and report.nesting_sites == []
    assert report.to_dict() == {
        "addedTarget": {"alias": "Trace", "metamodel": "trace-mm"},
        "instrumentedRules": [],
        "nestingSites": [],
    }


def test_reweaving_is_rejected(scenario):
    woven, _ = weave_traceability(scenario.spec)
    with pytest.raises(WeaveError, match="exactly one"):
        weave_traceability(woven)
    with pytest.raises(WeaveError):
        weave_traceability(parse_spec(print_spec(woven)))


def test_fresh_names_avoid_collisions(mms):
    text = (SCENARIO / "compose.mcomp").read_text()
    text = text.replace("right Vocabulary", "right Trace").replace("Vocabulary!", "Trace!").replace("into t : Target!System", "into link : Target!System")
    text = text.replace("t.entity = equivalent", "link.entity = equivalent")
    spec = parse_spec(text)
    assert check_spec(spec, mms) == []
    woven, report = weave_traceability(spec)
    assert report.added_target.alias == "Trace2"
    assert ("MergeSystemWithVocabulary", "link2") in report.instrumented_rules
    assert check_spec(woven, mms) == []


def test_report_serializes(scenario):
    _, report = weave_traceability(scenario.spec)
    data = json.loads(json.dumps(report.to_dict()))
    assert data["nestingSites"] == [{"rule": "MergeSystemWithVocabulary", "statement": 0, "origin": "implicit"}]


# -- equivalence oracle ---------------------------------------------------------


def test_scenario_native_and_woven_traces_agree(scenario):
    native_result = scenario.run()
    native = trace_execution(native_result)
    result, trace_model = run_woven(scenario.spec, scenario.left, scenario.right, scenario.metamodels)
    assert conforms(trace_model, TRACE_METAMODEL) == []
    verdict = check_equivalence(native, trace_model)
    assert verdict.equivalent and verdict.mismatches == []
    assert same_modulo_ids(native_result.composed, result.composed)


def test_empty_spec_traces_agree():
    setup = scenario_setup("empty.mcomp")
    native = trace_execution(setup.run())
    _, trace_model = run_woven(setup.spec, setup.left, setup.right, setup.metamodels)
    assert check_equivalence(native, trace_model)


def test_deleting_one_relationship_gives_one_mismatch(scenario):
    native = trace_execution(scenario.run())
    _, trace_model = run_woven(scenario.spec, scenario.left, scenario.right, scenario.metamodels)
    victim = next(e for e in trace_model.elements if e.type == "TraceRelationship")
    mutated = Model(trace_model.id, trace_model.metamodel, trace_model.role,
                    tuple(e for e in trace_model.elements if e is not victim))
    verdict = check_equivalence(native, mutated)
    assert not verdict
    assert len(verdict.mismatches) == 1


def test_changed_link_is_reported(scenario):
    native = trace_execution(scenario.run())
    _, trace_model = run_woven(scenario.spec, scenario.left, scenario.right, scenario.metamodels)
    woven = trace_from_model(trace_model)
    links = list(woven.links)
    links[4] = type(links[4])(links[4].id, links[4].kind, ("author",), (), links[4].targets)
    mutated = type(woven)(tuple(links), woven.relationships)
    verdict = check_equivalence(native, mutated)
    assert not verdict and len(verdict.mismatches) >= 2


@pytest.mark.parametrize("factory", [diamond_setup, lambda: scenario_setup("explicit_call.mcomp"),
                                     lambda: scenario_setup("two_sources.mcomp"),
                                     lambda: scenario_setup(right=SCENARIO.parent / "alias" / "right.json")])
def test_fixtures_agree(factory):
    setup = factory()
    native_result = setup.run()
    result, trace_model = run_woven(setup.spec, setup.left, setup.right, setup.metamodels)
    assert check_equivalence(trace_execution(native_result), trace_model).mismatches == []
    assert same_modulo_ids(native_result.composed, result.composed)


def test_explicit_variant_weaves_explicit_nesting():
    setup = scenario_setup("explicit_call.mcomp")
    _, report = weave_traceability(setup.spec)
    assert report.nesting_sites == [
        ("MergeSystemWithVocabulary", 0, "implicit"),
        ("MergeSystemWithVocabulary", 1, "explicit"),
    ]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_generated_specs_agree(seed):
    case = generate(seed)
    spec = parse_spec(case.spec_text)
    woven, report = weave_traceability(spec)
    assert check_spec(woven, case.metamodels) == []
    assert len(report.instrumented_rules) == len([r for r in spec.rules if r.kind is not RuleKind.MATCH])
    native_result = execute(spec, case.left, case.right, case.metamodels)
    result = execute(woven, case.left, case.right, case.metamodels)
    assert check_equivalence(trace_execution(native_result), result.extra_targets[0]).mismatches == []
    assert same_modulo_ids(native_result.composed, result.composed)
