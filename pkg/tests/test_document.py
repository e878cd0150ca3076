from __future__ import annotations

import json

import pytest

from bpdflow.document import definition_to_dict, parse_definition, serialize_definition
from bpdflow.expressions import ParseError
from bpdflow.fixtures import FIXTURES, fixture_text, load_fixture
from bpdflow.model import Gateway, Lane, Pool, ProcessDefinition

MINIMAL = {
    "version": 1,
    "process": {
        "id": "p",
        "name": "",
        "variables": [],
        "pools": [{"id": "pool", "name": "", "lanes": [{"id": "lane", "name": "", "nodes": [
            {"type": "event", "id": "s", "kind": "start"},
            {"type": "activity", "id": "t", "kind": "task"},
            {"type": "event", "id": "e", "kind": "end"},
        ]}]}],
        "flows": [{"id": "f1", "source": "s", "target": "t"}, {"id": "f2", "source": "t", "target": "e"}],
        "messageFlows": [],
        "associations": [],
        "artifacts": [],
    },
}


def _doc(**changes) -> str:
    doc = json.loads(json.dumps(MINIMAL))
    for path, value in changes.items():
        target = doc["process"]
        *head, last = path.split(".")
        for key in head:
            target = target[int(key)] if key.isdigit() else target[key]
        if value is ...:
            del target[int(last) if last.isdigit() else last]
        else:
            target[int(last) if last.isdigit() else last] = value
    return json.dumps(doc, indent=2)


def test_minimal_document():
    d = parse_definition(_doc())
    assert len(list(d.walk_nodes())) == 3
    assert len(d.sequence_flows) == 2


def test_parallel_gateway_keeps_outgoing_order():
    text = _doc(**{
        "pools.0.lanes.0.nodes.1": {"type": "gateway", "id": "t", "kind": "parallel"},
        "flows": [
            {"id": "f0", "source": "s", "target": "t"},
            {"id": "f1", "source": "t", "target": "e"},
            {"id": "f2", "source": "t", "target": "e"},
        ],
    })
    d = parse_definition(text)
    node = next(n for n, _p, _s in d.walk_nodes() if n.id == "t")
    assert node.variant == Gateway("parallel")
    assert [f.id for f in d.sequence_flows if f.source == "t"] == ["f1", "f2"]


def test_unknown_gateway_kind_names_the_field():
    text = _doc(**{"pools.0.lanes.0.nodes.1": {"type": "gateway", "id": "t", "kind": "xor2"}})
    with pytest.raises(ParseError) as info:
        parse_definition(text)
    assert info.value.field == "kind"
    assert "kind" in str(info.value)
    assert info.value.found == '"xor2"'


@pytest.mark.parametrize("change, field", [
    ({"pools.0.lanes.0.nodes.0.color": "red"}, "color"),
    ({"pools.0.lanes.0.nodes.0.kind": ...}, "kind"),
    ({"flows.0.source": 3}, "source"),
    ({"id": "not an id"}, "id"),
    ({"variables": [{"name": "and", "type": "bool", "init": True}]}, "name"),
    ({"variables": [{"name": "x", "type": "int", "init": True}]}, "init"),
    ({"flows.0.condition": "x >"}, "condition"),
])
def test_schema_errors_name_the_field(change, field):
    with pytest.raises(ParseError) as info:
        parse_definition(_doc(**change))
    assert info.value.field == field


def test_syntax_error_has_position():
    with pytest.raises(ParseError) as info:
        parse_definition('{"version": 1,\n  "process": [}')
    assert info.value.line == 2


def test_duplicate_keys_rejected():
    with pytest.raises(ParseError):
        parse_definition('{"version": 1, "version": 1, "process": {}}')


def test_wrong_version_rejected():
    with pytest.raises(ParseError):
        parse_definition(_doc().replace('"version": 1', '"version": 2'))


def test_empty_lane_serializes_with_explicit_list():
    d = ProcessDefinition("p", pools=(Pool("pool", "", (Lane("lane"),)),))
    doc = definition_to_dict(d)
    assert doc["process"]["pools"][0]["lanes"][0]["nodes"] == []
    assert parse_definition(serialize_definition(d)) == d


@pytest.mark.parametrize("name", list(FIXTURES))
def test_fixture_round_trip(name):
    text = fixture_text(name)
    d = parse_definition(text)
    again = serialize_definition(d)
    assert again == text
    assert parse_definition(again) == d
    assert serialize_definition(d) == again


def test_serialization_is_canonical():
    d = load_fixture("transaction")
    text = serialize_definition(d)
    assert text.endswith("}\n")
    assert list(json.loads(text)) == ["version", "process"]
    assert list(json.loads(text)["process"]) == [
        "id", "name", "variables", "pools", "flows", "messageFlows", "associations", "artifacts",
    ]
