"""Hypothesis-driven properties of the parser, engine and analyzer."""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from typing import Any

import extra_models
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from random_scripts import random_data, random_script

from bpdflow.analyzer import check_soundness, conformance, conformance_states, explore
from bpdflow.document import definition_to_dict, parse_definition, serialize_definition
from bpdflow.engine import EngineFault, enabled_transitions, instantiate, run, step
from bpdflow.expressions import (
    And, BoolLit, Compare, IntLit, Not, Or, TokenCount, Var, format_expression, parse_expression,
)
from bpdflow.fixtures import FIXTURES, load_fixture
from bpdflow.model import ProcessDefinition, classify_model_type

MODELS: dict[str, ProcessDefinition] = {name: load_fixture(name) for name in FIXTURES}
MODELS.update({f.__name__: f() for f in extra_models.ALL})
GRAPHS = {name: explore(d) for name, d in MODELS.items()}

names = st.sampled_from(sorted(MODELS))
seeds = st.integers(min_value=0, max_value=2**32 - 1)

identifiers = st.from_regex(r"[a-z_][a-z0-9_]{0,6}", fullmatch=True).filter(
    lambda s: s not in {"and", "or", "not", "true", "false", "tokens"}
)
atoms = st.one_of(
    st.builds(BoolLit, st.booleans()),
    st.builds(IntLit, st.integers(min_value=-1000, max_value=1000)),
    st.builds(Var, identifiers),
    st.builds(TokenCount, identifiers),
)
expressions = st.recursive(
    atoms,
    lambda sub: st.one_of(
        st.builds(Compare, st.sampled_from(["==", "!=", "<", "<=", ">", ">="]), sub, sub),
        st.builds(Not, sub),
        st.builds(And, sub, sub),
        st.builds(Or, sub, sub),
    ),
    max_leaves=12,
)


@given(expressions)
def test_expression_print_parse_round_trip(expr):
    text = format_expression(expr)
    assert parse_expression(text) == expr
    assert format_expression(parse_expression(text)) == text


@given(names, seeds)
@settings(max_examples=60, deadline=None)
def test_every_step_conserves_tokens(name, seed):
    rng = random.Random(seed)
    d = MODELS[name]
    inst = instantiate(d, random_data(rng, d))
    for _ in range(40):
        if inst.status != "running":
            break
        try:
            options = enabled_transitions(inst)
        except EngineFault:
            break
        if not options:
            break
        before = Counter(inst.marking)
        result = step(inst, rng.choice(options).id)
        if result.outcome != "fired":
            break
        t = result.transition
        expected = before - Counter(t.consumed) + Counter(t.produced)
        assert Counter(inst.marking) == expected


@given(names, seeds)
@settings(max_examples=100, deadline=None)
def test_engine_traces_are_paths_of_the_state_graph(name, seed):
    rng = random.Random(seed)
    d = MODELS[name]
    trace = run(d, random_data(rng, d), random_script(rng, d))
    graph = GRAPHS[name]
    assert conformance(trace, graph)
    if trace.verdict == "deadlock":
        assert any("deadlock" in graph.flags(i) for i in conformance_states(trace, graph))


@given(names, seeds)
@settings(max_examples=30, deadline=None)
def test_runs_are_reproducible(name, seed):
    d = MODELS[name]
    script = random_script(random.Random(seed), d)
    data = random_data(random.Random(seed), d)
    a, b = run(d, data, script), run(d, data, script)
    assert a.to_jsonl() == b.to_jsonl()
    assert a.verdict == b.verdict


def _rename(definition: ProcessDefinition, fresh: dict[str, str]) -> ProcessDefinition:
    refs = {"id", "source", "target", "attachedTo", "defaultFlow"}

    def expr(text: str) -> str:
        return re.sub(r"tokens\((\w+)\)", lambda m: f"tokens({fresh.get(m.group(1), m.group(1))})", text)

    def walk(obj: Any, key: str | None = None) -> Any:
        if isinstance(obj, dict):
            return {k: walk(v, k) for k, v in obj.items()}
        if isinstance(obj, list):
            return [walk(v, key) for v in obj]
        if isinstance(obj, str) and key in refs:
            return fresh.get(obj, obj)
        if isinstance(obj, str) and key in ("condition", "activationExpression", "loopCondition"):
            return expr(obj)
        return obj

    return parse_definition(json.dumps(walk(definition_to_dict(definition))))


def _ids(definition: ProcessDefinition) -> list[str]:
    found: list[str] = []

    def walk(obj: Any) -> None:
        if isinstance(obj, dict):
            if isinstance(obj.get("id"), str):
                found.append(obj["id"])
            for v in obj.values():
                walk(v)
        elif isinstance(obj, list):
            for v in obj:
                walk(v)

    walk(definition_to_dict(definition))
    return sorted(set(found))


@given(names, st.randoms(use_true_random=False))
@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
def test_renaming_preserves_classification_and_state_space(name, rnd):
    d = MODELS[name]
    ids = _ids(d)
    shuffled = [f"n{i}" for i in range(len(ids))]
    rnd.shuffle(shuffled)
    renamed = _rename(d, dict(zip(ids, shuffled)))
    assert classify_model_type(renamed) == classify_model_type(d)
    g1, g2 = GRAPHS[name], explore(renamed)
    assert len(g1.states) == len(g2.states)
    assert len(g1.edges) == len(g2.edges)
    r1, r2 = check_soundness(g1, d), check_soundness(g2, renamed)
    assert (r1.option_to_complete, r1.proper_completion, len(r1.deadlocks)) == \
        (r2.option_to_complete, r2.proper_completion, len(r2.deadlocks))


@given(names)
@settings(max_examples=25, deadline=None)
def test_order_preserving_renaming_maps_traces(name):
    d = MODELS[name]
    fresh = {i: f"x_{i}" for i in _ids(d)}
    renamed = _rename(d, fresh)
    original = run(d)
    mapped = run(renamed)
    assert [t.kind for t in original.transitions] == [t.kind for t in mapped.transitions]
    assert [fresh[t.subject] for t in original.transitions] == [t.subject for t in mapped.transitions]
    assert original.verdict == mapped.verdict


@given(names)
@settings(max_examples=25, deadline=None)
def test_definition_serialization_round_trip(name):
    d = MODELS[name]
    text = serialize_definition(d)
    assert parse_definition(text) == d
    assert serialize_definition(parse_definition(text)) == text
