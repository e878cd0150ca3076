"""JSON document format for process definitions.

``parse_definition`` reads the schema strictly (unknown fields, wrong types
and bad enumeration values are :class:`ParseError`); referential problems are
left for :func:`bpdflow.validation.validate`. ``serialize_definition`` emits
the canonical form: fixed key order, two-space indentation, optional fields
only when set, trailing newline.
"""

from __future__ import annotations

import json
from json.decoder import JSONObject
from json.scanner import py_make_scanner
from typing import Any

from bpdflow.expressions import IDENTIFIER, KEYWORDS, Expression, ParseError, format_expression, parse_expression
from bpdflow.model import (
    ACTIVITY_KINDS,
    ARTIFACT_KINDS,
    ASSOCIATION_ROLES,
    EVENT_KINDS,
    GATEWAY_KINDS,
    MARKERS,
    TASK_BEHAVIORS,
    TRIGGERS,
    VARIABLE_TYPES,
    Activity,
    Artifact,
    Association,
    Body,
    Event,
    FlowNode,
    Gateway,
    Lane,
    MessageFlow,
    Pool,
    ProcessDefinition,
    SequenceFlow,
    VariableDecl,
)

FORMAT_VERSION = 1


class _Obj(dict):
    """A decoded JSON object remembering the offset of its opening brace."""

    offset: int = 0


def _decode(text: str) -> Any:
    decoder = json.JSONDecoder()

    def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
        s, end = s_and_end
        pairs, new_end = JSONObject(s_and_end, strict, scan_once, None, list, memo)
        obj = _Obj()
        obj.offset = end - 1
        for key, value in pairs:
            if key in obj:
                raise _at(s, obj.offset, f"unique key {key!r}", "duplicate key", key)
            obj[key] = value
        return obj, new_end

    def reject_constant(name: str) -> Any:
        raise ValueError(name)

    decoder.parse_object = parse_object
    decoder.parse_constant = reject_constant
    decoder.scan_once = py_make_scanner(decoder)
    try:
        return decoder.decode(text)
    except json.JSONDecodeError as exc:
        found = repr(text[exc.pos]) if exc.pos < len(text) else "end of input"
        raise ParseError(exc.lineno, exc.colno, exc.msg, found) from None
    except ValueError as exc:
        raise ParseError(1, 1, "JSON value", str(exc)) from None


def _at(text: str, offset: int, expected: str, found: str, field: str | None = None) -> ParseError:
    line = text.count("\n", 0, offset) + 1
    column = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return ParseError(line, column, expected, found, field)


class _Reader:
    def __init__(self, text: str) -> None:
        self.text = text

    def error(self, obj: Any, field: str, expected: str, found: Any) -> ParseError:
        offset = obj.offset if isinstance(obj, _Obj) else 0
        shown = found if isinstance(found, str) and found.startswith("<") else json.dumps(found)
        return _at(self.text, offset, f"field '{field}': {expected}", shown, field)

    def obj(self, value: Any, where: Any, field: str, allowed: tuple[str, ...]) -> _Obj:
        if not isinstance(value, _Obj):
            raise self.error(where, field, "object", value)
        for key in value:
            if key not in allowed:
                raise self.error(value, key, "no such field", "<unknown field>")
        return value

    def get(self, obj: _Obj, field: str, kind: type | tuple[type, ...], default: Any = ..., expected: str = "") -> Any:
        if field not in obj:
            if default is ...:
                raise self.error(obj, field, "required field", "<missing>")
            return default
        value = obj[field]
        ok = isinstance(value, kind) and not (isinstance(value, bool) and bool not in _as_tuple(kind))
        if not ok:
            raise self.error(obj, field, expected or _kind_name(kind), value)
        return value

    def ident(self, obj: _Obj, field: str, optional: bool = False) -> str | None:
        value = self.get(obj, field, str, None if optional else ..., "identifier")
        if value is not None and not IDENTIFIER.match(value):
            raise self.error(obj, field, "identifier", value)
        return value

    def enum(self, obj: _Obj, field: str, choices: tuple[str, ...], default: Any = ...) -> str:
        value = self.get(obj, field, str, default, f"one of {', '.join(choices)}")
        if value not in choices:
            raise self.error(obj, field, f"one of {', '.join(choices)}", value)
        return value

    def expression(self, obj: _Obj, field: str) -> Expression | None:
        text = self.get(obj, field, str, None, "expression string")
        if text is None:
            return None
        try:
            return parse_expression(text)
        except ParseError as exc:
            raise self.error(obj, field, f"expression ({exc.expected} at column {exc.column})", exc.found) from None

    def items(self, obj: _Obj, field: str) -> list[Any]:
        return self.get(obj, field, list, [])


def _as_tuple(kind: type | tuple[type, ...]) -> tuple[type, ...]:
    return kind if isinstance(kind, tuple) else (kind,)


def _kind_name(kind: type | tuple[type, ...]) -> str:
    names = {str: "string", int: "integer", bool: "boolean", list: "array", dict: "object"}
    return " or ".join(names.get(k, k.__name__) for k in _as_tuple(kind))


_PROCESS_FIELDS = ("id", "name", "variables", "pools", "flows", "messageFlows", "associations", "artifacts")
_NODE_COMMON = ("type", "id", "name")
_EVENT_FIELDS = _NODE_COMMON + ("kind", "trigger", "attachedTo", "message", "delay", "error")
_ACTIVITY_FIELDS = _NODE_COMMON + (
    "kind", "markers", "taskBehavior", "loopCondition", "loopMax", "multiInstanceCount", "body",
)
_GATEWAY_FIELDS = _NODE_COMMON + ("kind", "defaultFlow", "activationExpression")
_FLOW_FIELDS = ("id", "source", "target", "condition", "isDefault")


def parse_definition(text: str) -> ProcessDefinition:
    """Parse a definition document; raises :class:`ParseError` on syntax or schema errors."""
    doc = _decode(text)
    r = _Reader(text)
    top = r.obj(doc, doc, "document", ("version", "process"))
    version = r.get(top, "version", int)
    if version != FORMAT_VERSION:
        raise r.error(top, "version", f"{FORMAT_VERSION}", version)
    proc = r.obj(r.get(top, "process", _Obj, ..., "object"), top, "process", _PROCESS_FIELDS)

    variables = []
    seen_vars: set[str] = set()
    for raw in r.items(proc, "variables"):
        v = r.obj(raw, proc, "variables", ("name", "type", "init"))
        name = r.ident(v, "name")
        if name in KEYWORDS:
            raise r.error(v, "name", "non-keyword identifier", name)
        if name in seen_vars:
            raise r.error(v, "name", "unique variable name", name)
        seen_vars.add(name)
        vtype = r.enum(v, "type", VARIABLE_TYPES)
        init = r.get(v, "init", bool if vtype == "bool" else int, ..., vtype)
        variables.append(VariableDecl(name, vtype, init))

    pools = []
    for raw in r.items(proc, "pools"):
        p = r.obj(raw, proc, "pools", ("id", "name", "lanes"))
        lanes = []
        for raw_lane in r.items(p, "lanes"):
            lane = r.obj(raw_lane, p, "lanes", ("id", "name", "nodes"))
            nodes = tuple(_node(r, n, lane) for n in r.items(lane, "nodes"))
            lanes.append(Lane(r.ident(lane, "id"), r.get(lane, "name", str, ""), nodes))
        pools.append(Pool(r.ident(p, "id"), r.get(p, "name", str, ""), tuple(lanes)))

    message_flows = []
    for raw in r.items(proc, "messageFlows"):
        m = r.obj(raw, proc, "messageFlows", ("id", "source", "target"))
        message_flows.append(MessageFlow(r.ident(m, "id"), r.ident(m, "source"), r.ident(m, "target")))

    associations = []
    for raw in r.items(proc, "associations"):
        a = r.obj(raw, proc, "associations", ("id", "source", "target", "role"))
        associations.append(
            Association(r.ident(a, "id"), r.ident(a, "source"), r.ident(a, "target"), r.enum(a, "role", ASSOCIATION_ROLES))
        )

    artifacts = []
    for raw in r.items(proc, "artifacts"):
        a = r.obj(raw, proc, "artifacts", ("id", "kind", "payload"))
        artifacts.append(Artifact(r.ident(a, "id"), r.enum(a, "kind", ARTIFACT_KINDS), r.get(a, "payload", str, "")))

    return ProcessDefinition(
        id=r.ident(proc, "id"),
        name=r.get(proc, "name", str, ""),
        pools=tuple(pools),
        sequence_flows=tuple(_flow(r, f, proc) for f in r.items(proc, "flows")),
        message_flows=tuple(message_flows),
        associations=tuple(associations),
        artifacts=tuple(artifacts),
        variables=tuple(variables),
    )


def _flow(r: _Reader, raw: Any, parent: _Obj) -> SequenceFlow:
    f = r.obj(raw, parent, "flows", _FLOW_FIELDS)
    return SequenceFlow(
        id=r.ident(f, "id"),
        source=r.ident(f, "source"),
        target=r.ident(f, "target"),
        condition=r.expression(f, "condition"),
        is_default=r.get(f, "isDefault", bool, False),
    )


def _node(r: _Reader, raw: Any, parent: _Obj) -> FlowNode:
    if not isinstance(raw, _Obj):
        raise r.error(parent, "nodes", "object", raw)
    ntype = r.enum(raw, "type", ("event", "activity", "gateway"))
    if ntype == "event":
        n = r.obj(raw, parent, "nodes", _EVENT_FIELDS)
        delay = r.get(n, "delay", int, None)
        variant: Any = Event(
            kind=r.enum(n, "kind", EVENT_KINDS),
            trigger=r.enum(n, "trigger", TRIGGERS, "none"),
            attached_to=r.ident(n, "attachedTo", optional=True),
            message=r.get(n, "message", str, None),
            delay=delay,
            error=r.get(n, "error", str, None),
        )
    elif ntype == "activity":
        n = r.obj(raw, parent, "nodes", _ACTIVITY_FIELDS)
        markers = r.items(n, "markers")
        for m in markers:
            if m not in MARKERS:
                raise r.error(n, "markers", f"each one of {', '.join(MARKERS)}", m)
        if len(set(markers)) != len(markers):
            raise r.error(n, "markers", "distinct markers", markers)
        body = None
        if "body" in n:
            b = r.obj(n["body"], n, "body", ("nodes", "flows"))
            body = Body(
                nodes=tuple(_node(r, x, b) for x in r.items(b, "nodes")),
                flows=tuple(_flow(r, x, b) for x in r.items(b, "flows")),
            )
        variant = Activity(
            kind=r.enum(n, "kind", ACTIVITY_KINDS),
            markers=frozenset(markers),
            body=body,
            task_behavior=r.enum(n, "taskBehavior", TASK_BEHAVIORS, "auto"),
            loop_condition=r.expression(n, "loopCondition"),
            loop_max=r.get(n, "loopMax", int, None),
            multi_instance_count=r.ident(n, "multiInstanceCount", optional=True),
        )
    else:
        n = r.obj(raw, parent, "nodes", _GATEWAY_FIELDS)
        variant = Gateway(
            kind=r.enum(n, "kind", GATEWAY_KINDS),
            default_flow=r.ident(n, "defaultFlow", optional=True),
            activation_expression=r.expression(n, "activationExpression"),
        )
    return FlowNode(id=r.ident(n, "id"), variant=variant, name=r.get(n, "name", str, ""))


# --------------------------------------------------------------------------
# serialization

def _expr(value: Expression | None) -> str | None:
    return None if value is None else format_expression(value)


def _compact(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    return {k: v for k, v in pairs if v is not None}


def _flow_doc(flow: SequenceFlow) -> dict[str, Any]:
    return _compact([
        ("id", flow.id),
        ("source", flow.source),
        ("target", flow.target),
        ("condition", _expr(flow.condition)),
        ("isDefault", True if flow.is_default else None),
    ])


def _node_doc(node: FlowNode) -> dict[str, Any]:
    v = node.variant
    if isinstance(v, Event):
        return _compact([
            ("type", "event"), ("id", node.id), ("name", node.name),
            ("kind", v.kind), ("trigger", v.trigger), ("attachedTo", v.attached_to),
            ("message", v.message), ("delay", v.delay), ("error", v.error),
        ])
    if isinstance(v, Activity):
        body = None
        if v.body is not None:
            body = {
                "nodes": [_node_doc(n) for n in v.body.nodes],
                "flows": [_flow_doc(f) for f in v.body.flows],
            }
        return _compact([
            ("type", "activity"), ("id", node.id), ("name", node.name),
            ("kind", v.kind), ("markers", [m for m in MARKERS if m in v.markers]),
            ("taskBehavior", v.task_behavior), ("loopCondition", _expr(v.loop_condition)),
            ("loopMax", v.loop_max), ("multiInstanceCount", v.multi_instance_count),
            ("body", body),
        ])
    return _compact([
        ("type", "gateway"), ("id", node.id), ("name", node.name),
        ("kind", v.kind), ("defaultFlow", v.default_flow),
        ("activationExpression", _expr(v.activation_expression)),
    ])


def definition_to_dict(definition: ProcessDefinition) -> dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "process": {
            "id": definition.id,
            "name": definition.name,
            "variables": [{"name": d.name, "type": d.type, "init": d.init} for d in definition.variables],
            "pools": [
                {
                    "id": pool.id,
                    "name": pool.name,
                    "lanes": [
                        {"id": lane.id, "name": lane.name, "nodes": [_node_doc(n) for n in lane.nodes]}
                        for lane in pool.lanes
                    ],
                }
                for pool in definition.pools
            ],
            "flows": [_flow_doc(f) for f in definition.sequence_flows],
            "messageFlows": [{"id": m.id, "source": m.source, "target": m.target} for m in definition.message_flows],
            "associations": [
                {"id": a.id, "source": a.source, "target": a.target, "role": a.role} for a in definition.associations
            ],
            "artifacts": [{"id": a.id, "kind": a.kind, "payload": a.payload} for a in definition.artifacts],
        },
    }


def serialize_definition(definition: ProcessDefinition) -> str:
    return json.dumps(definition_to_dict(definition), indent=2, ensure_ascii=False) + "\n"
