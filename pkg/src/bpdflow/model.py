"""Diagram data model: pools, lanes, flow nodes, connecting objects and artifacts.

Every value here is immutable. Nodes are owned by lanes; sub-processes and
transactions own a nested :class:`Body` of nodes and flows. Identifiers are
unique across the whole definition, nested bodies included.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Union

if TYPE_CHECKING:
    from bpdflow.expressions import Expression

EventKind = Literal["start", "intermediate", "end"]
Trigger = Literal["none", "message", "timer", "error", "cancel", "compensation", "terminate"]
ActivityKind = Literal["task", "subProcess", "transaction"]
Marker = Literal["loop", "multiInstance", "compensation", "adHoc"]
TaskBehavior = Literal["auto", "external"]
GatewayKind = Literal["exclusiveData", "exclusiveEvent", "inclusive", "complex", "parallel"]
AssociationRole = Literal["compensationHandler", "dataLink", "annotationLink"]
ArtifactKind = Literal["dataObject", "textAnnotation", "group"]
VariableType = Literal["bool", "int"]
ModelType = Literal["private", "abstract", "collaboration"]

EVENT_KINDS: tuple[str, ...] = ("start", "intermediate", "end")
TRIGGERS: tuple[str, ...] = ("none", "message", "timer", "error", "cancel", "compensation", "terminate")
ACTIVITY_KINDS: tuple[str, ...] = ("task", "subProcess", "transaction")
MARKERS: tuple[str, ...] = ("loop", "multiInstance", "compensation", "adHoc")
TASK_BEHAVIORS: tuple[str, ...] = ("auto", "external")
GATEWAY_KINDS: tuple[str, ...] = ("exclusiveData", "exclusiveEvent", "inclusive", "complex", "parallel")
ASSOCIATION_ROLES: tuple[str, ...] = ("compensationHandler", "dataLink", "annotationLink")
ARTIFACT_KINDS: tuple[str, ...] = ("dataObject", "textAnnotation", "group")
VARIABLE_TYPES: tuple[str, ...] = ("bool", "int")

START_TRIGGERS = frozenset({"none", "message", "timer"})
END_TRIGGERS = frozenset({"none", "error", "cancel", "compensation", "terminate"})

DEFAULT_LOOP_MAX = 1000


class ModelError(Exception):
    """Structural failure raised by model plumbing (not by validation)."""


class DanglingReferenceError(ModelError):
    def __init__(self, ref: str, owner: str) -> None:
        super().__init__(f"{owner} references unknown id {ref!r}")
        self.ref = ref
        self.owner = owner


@dataclass(frozen=True)
class Event:
    kind: str
    trigger: str = "none"
    attached_to: str | None = None
    # Trigger details: message name for message events, delay in clock
    # ticks for timers, error name for error events (None catches all).
    message: str | None = None
    delay: int | None = None
    error: str | None = None

    @property
    def is_boundary(self) -> bool:
        return self.attached_to is not None


@dataclass(frozen=True)
class Body:
    nodes: tuple[FlowNode, ...] = ()
    flows: tuple[SequenceFlow, ...] = ()


@dataclass(frozen=True)
class Activity:
    kind: str = "task"
    markers: frozenset[str] = frozenset()
    body: Body | None = None
    task_behavior: str = "auto"
    loop_condition: Expression | None = None
    loop_max: int | None = None
    multi_instance_count: str | None = None

    @property
    def is_compensation(self) -> bool:
        return "compensation" in self.markers

    @property
    def effective_loop_max(self) -> int:
        return DEFAULT_LOOP_MAX if self.loop_max is None else self.loop_max


@dataclass(frozen=True)
class Gateway:
    kind: str
    default_flow: str | None = None
    activation_expression: Expression | None = None


Variant = Union[Event, Activity, Gateway]


@dataclass(frozen=True)
class FlowNode:
    id: str
    variant: Variant
    name: str = ""

    @property
    def event(self) -> Event | None:
        return self.variant if isinstance(self.variant, Event) else None

    @property
    def activity(self) -> Activity | None:
        return self.variant if isinstance(self.variant, Activity) else None

    @property
    def gateway(self) -> Gateway | None:
        return self.variant if isinstance(self.variant, Gateway) else None


@dataclass(frozen=True)
class SequenceFlow:
    id: str
    source: str
    target: str
    condition: Expression | None = None
    is_default: bool = False


@dataclass(frozen=True)
class MessageFlow:
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class Association:
    id: str
    source: str
    target: str
    role: str


@dataclass(frozen=True)
class Artifact:
    id: str
    kind: str
    payload: str = ""


@dataclass(frozen=True)
class VariableDecl:
    name: str
    type: str
    init: bool | int


@dataclass(frozen=True)
class Lane:
    id: str
    name: str = ""
    nodes: tuple[FlowNode, ...] = ()


@dataclass(frozen=True)
class Pool:
    id: str
    name: str = ""
    lanes: tuple[Lane, ...] = ()


@dataclass(frozen=True)
class ProcessDefinition:
    id: str
    name: str = ""
    pools: tuple[Pool, ...] = ()
    sequence_flows: tuple[SequenceFlow, ...] = ()
    message_flows: tuple[MessageFlow, ...] = ()
    associations: tuple[Association, ...] = ()
    artifacts: tuple[Artifact, ...] = ()
    variables: tuple[VariableDecl, ...] = ()

    def walk_nodes(self) -> Iterator[tuple[FlowNode, Pool, str | None]]:
        """Yield ``(node, pool, parent_activity_id)`` in document order, bodies depth-first."""

        def visit(nodes: tuple[FlowNode, ...], pool: Pool, parent: str | None) -> Iterator:
            for node in nodes:
                yield node, pool, parent
                act = node.activity
                if act is not None and act.body is not None:
                    yield from visit(act.body.nodes, pool, node.id)

        for pool in self.pools:
            for lane in pool.lanes:
                yield from visit(lane.nodes, pool, None)

    def walk_flows(self) -> Iterator[tuple[SequenceFlow, str | None]]:
        """Yield ``(flow, owning_scope)``: top-level flows first, then body flows in node order."""
        for flow in self.sequence_flows:
            yield flow, None
        for node, _pool, _parent in self.walk_nodes():
            act = node.activity
            if act is not None and act.body is not None:
                for flow in act.body.flows:
                    yield flow, node.id

    def variable(self, name: str) -> VariableDecl | None:
        for decl in self.variables:
            if decl.name == name:
                return decl
        return None

    @property
    def initial_data(self) -> dict[str, bool | int]:
        return {decl.name: decl.init for decl in self.variables}


@dataclass(frozen=True)
class NodeIndex:
    """Lookup tables over a referentially sound definition.

    Adjacency tuples follow flow declaration order. ``parent`` maps a node to
    the sub-process or transaction whose body holds it (``None`` at top level).
    """

    nodes: dict[str, FlowNode]
    flows: dict[str, SequenceFlow]
    incoming: dict[str, tuple[str, ...]]
    outgoing: dict[str, tuple[str, ...]]
    parent: dict[str, str | None]
    pool_of: dict[str, str]
    flow_scope: dict[str, str | None]
    boundaries: dict[str, tuple[str, ...]]
    handler_of: dict[str, str]
    message_targets: dict[str, tuple[str, ...]]
    scope_nodes: dict[str | None, tuple[str, ...]] = field(default_factory=dict)
    pool_ids: tuple[str, ...] = ()

    def node(self, node_id: str) -> FlowNode:
        return self.nodes[node_id]

    def ancestors(self, node_id: str) -> list[str]:
        """Enclosing activities of ``node_id``, innermost first."""
        chain: list[str] = []
        current = self.parent.get(node_id)
        while current is not None:
            chain.append(current)
            current = self.parent.get(current)
        return chain

    def position_ancestors(self, position: str) -> list[str]:
        """Enclosing activities of a token position (flow or node id)."""
        if position in self.flows:
            scope = self.flow_scope[position]
            if scope is None:
                return []
            return [scope, *self.ancestors(scope)]
        return self.ancestors(position)

    def is_inside(self, position: str, activity_id: str) -> bool:
        return activity_id in self.position_ancestors(position)

    def targets(self, node_id: str) -> list[str]:
        return [self.flows[f].target for f in self.outgoing[node_id]]


def node_index(definition: ProcessDefinition) -> NodeIndex:
    """Build adjacency and containment tables.

    Raises :class:`DanglingReferenceError` naming the first unknown id met.
    """
    nodes: dict[str, FlowNode] = {}
    parent: dict[str, str | None] = {}
    pool_of: dict[str, str] = {}
    scope_nodes: dict[str | None, list[str]] = {None: []}
    for node, pool, owner in definition.walk_nodes():
        nodes[node.id] = node
        parent[node.id] = owner
        pool_of[node.id] = pool.id
        scope_nodes.setdefault(owner, []).append(node.id)
        act = node.activity
        if act is not None and act.body is not None:
            scope_nodes.setdefault(node.id, [])

    flows: dict[str, SequenceFlow] = {}
    flow_scope: dict[str, str | None] = {}
    incoming: dict[str, list[str]] = {n: [] for n in nodes}
    outgoing: dict[str, list[str]] = {n: [] for n in nodes}
    for flow, scope in definition.walk_flows():
        for end in (flow.source, flow.target):
            if end not in nodes:
                raise DanglingReferenceError(end, flow.id)
        flows[flow.id] = flow
        flow_scope[flow.id] = scope
        outgoing[flow.source].append(flow.id)
        incoming[flow.target].append(flow.id)

    boundaries: dict[str, list[str]] = {}
    for node_id, node in nodes.items():
        ev = node.event
        if ev is not None and ev.attached_to is not None:
            if ev.attached_to not in nodes:
                raise DanglingReferenceError(ev.attached_to, node_id)
            boundaries.setdefault(ev.attached_to, []).append(node_id)

    handler_of: dict[str, str] = {}
    for assoc in definition.associations:
        if assoc.role != "compensationHandler":
            continue
        for end in (assoc.source, assoc.target):
            if end not in nodes:
                raise DanglingReferenceError(end, assoc.id)
        handler_of[assoc.source] = assoc.target

    message_targets: dict[str, list[str]] = {}
    for mf in definition.message_flows:
        for end in (mf.source, mf.target):
            if end not in nodes:
                raise DanglingReferenceError(end, mf.id)
        message_targets.setdefault(mf.source, []).append(mf.target)

    return NodeIndex(
        nodes=nodes,
        flows=flows,
        incoming={k: tuple(v) for k, v in incoming.items()},
        outgoing={k: tuple(v) for k, v in outgoing.items()},
        parent=parent,
        pool_of=pool_of,
        flow_scope=flow_scope,
        boundaries={k: tuple(v) for k, v in boundaries.items()},
        handler_of=handler_of,
        message_targets={k: tuple(v) for k, v in message_targets.items()},
        scope_nodes={k: tuple(v) for k, v in scope_nodes.items()},
        pool_ids=tuple(p.id for p in definition.pools),
    )


def classify_model_type(definition: ProcessDefinition) -> ModelType:
    """Classify a diagram as a private, abstract or collaboration process.

    A pool is *substantive* when it holds an activity that is not itself a
    message-flow endpoint. Two or more pools with exactly one substantive
    pool make an abstract process; otherwise two or more pools linked by
    message flows make a collaboration; anything else is private.
    """
    if len(definition.pools) < 2:
        return "private"
    endpoints = {mf.source for mf in definition.message_flows}
    endpoints |= {mf.target for mf in definition.message_flows}
    substantive: set[str] = set()
    for node, pool, _parent in definition.walk_nodes():
        if node.activity is not None and node.id not in endpoints:
            substantive.add(pool.id)
    if len(substantive) == 1:
        return "abstract"
    if definition.message_flows:
        return "collaboration"
    return "private"
