"""Structural validation of process definitions.

``validate`` never raises on a broken definition: every problem becomes a
:class:`Diagnostic`, sorted by ``(subject_id, code)``. The engine refuses to
instantiate a definition carrying any error-severity diagnostic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from bpdflow.expressions import Expression, ExpressionTypeError, infer_type, token_flows, variables
from bpdflow.model import END_TRIGGERS, START_TRIGGERS, FlowNode, ProcessDefinition, SequenceFlow

CATALOG: dict[str, str] = {
    "E001": "duplicate id",
    "E002": "dangling reference",
    "E003": "sequence flow crosses pools",
    "E004": "message flow within one pool",
    "E005": "start event with incoming flow",
    "E006": "end event with outgoing flow",
    "E007": "boundary event without host, with incoming flow, or without exactly one outgoing flow",
    "E008": "default flow not owned by gateway",
    "E009": "compensation activity on normal flow",
    "E010": "condition on flow leaving a parallel gateway",
    "E011": "event-based gateway successor is not a catching event or receive task",
    "E012": "condition is not a well-typed boolean expression",
    "E013": "sequence flow crosses a sub-process boundary",
    "E014": "condition on flow leaving a node that does not evaluate conditions",
    "E015": "event trigger not allowed for its kind or placement",
    "E016": "activity markers, body or loop settings inconsistent",
    "E017": "gateway activation or arity invalid",
    "E018": "compensation association invalid",
    "E019": "token count used outside a complex-merge activation",
    "E020": "definition has no pool",
    "W001": "node unreachable from any start event",
}

BOUNDARY_TRIGGERS = frozenset({"error", "cancel", "timer", "message"})
INTERMEDIATE_TRIGGERS = frozenset({"none", "message", "timer", "compensation"})


@dataclass(frozen=True, order=True)
class Diagnostic:
    subject_id: str
    code: str
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.code} {self.subject_id} {self.message}"


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


class _Checker:
    def __init__(self, definition: ProcessDefinition) -> None:
        self.d = definition
        self.out: set[Diagnostic] = set()
        self.nodes: dict[str, FlowNode] = {}
        self.pool_of: dict[str, str] = {}
        self.parent: dict[str, str | None] = {}
        for node, pool, parent in definition.walk_nodes():
            if node.id not in self.nodes:
                self.nodes[node.id] = node
                self.pool_of[node.id] = pool.id
                self.parent[node.id] = parent
        self.flows: list[tuple[SequenceFlow, str | None]] = list(definition.walk_flows())
        self.flow_by_id: dict[str, SequenceFlow] = {}
        self.incoming: dict[str, list[SequenceFlow]] = {n: [] for n in self.nodes}
        self.outgoing: dict[str, list[SequenceFlow]] = {n: [] for n in self.nodes}
        for flow, _scope in self.flows:
            self.flow_by_id.setdefault(flow.id, flow)
            if flow.source in self.nodes and flow.target in self.nodes:
                self.outgoing[flow.source].append(flow)
                self.incoming[flow.target].append(flow)
        self.var_types = {v.name: v.type for v in definition.variables}
        self.boundaries: dict[str, list[str]] = {}
        for node in self.nodes.values():
            ev = node.event
            if ev is not None and ev.attached_to is not None:
                self.boundaries.setdefault(ev.attached_to, []).append(node.id)
        self.message_sources = {mf.source for mf in definition.message_flows}

    def emit(self, code: str, subject: str, message: str) -> None:
        severity = "warning" if code.startswith("W") else "error"
        self.out.add(Diagnostic(subject, code, message, severity))

    # ------------------------------------------------------------------

    def run(self) -> list[Diagnostic]:
        self.check_ids()
        if not self.d.pools:
            self.emit("E020", self.d.id, "at least one pool is required")
        self.check_flows()
        self.check_message_flows()
        self.check_associations()
        for node in self.nodes.values():
            if node.event is not None:
                self.check_event(node)
            elif node.activity is not None:
                self.check_activity(node)
            else:
                self.check_gateway(node)
        self.check_reachability()
        return sorted(self.out)

    def check_ids(self) -> None:
        ids: list[str] = [self.d.id]
        for pool in self.d.pools:
            ids.append(pool.id)
            ids.extend(lane.id for lane in pool.lanes)
        ids.extend(node.id for node, _p, _s in self.d.walk_nodes())
        ids.extend(flow.id for flow, _s in self.flows)
        ids.extend(mf.id for mf in self.d.message_flows)
        ids.extend(a.id for a in self.d.associations)
        ids.extend(a.id for a in self.d.artifacts)
        for ident, count in Counter(ids).items():
            if count > 1:
                self.emit("E001", ident, f"id {ident!r} declared {count} times")

    def check_expression(self, expr: Expression, owner: str, what: str, *, tokens_allowed: frozenset[str] | None = None,
                         variables_allowed: bool = True) -> None:
        ok = True
        for name in variables(expr):
            if not variables_allowed:
                self.emit("E019", owner, f"{what} may only reference token counts, not variable {name!r}")
                ok = False
            elif name not in self.var_types:
                self.emit("E002", owner, f"{what} references unknown variable {name!r}")
                ok = False
        for flow in token_flows(expr):
            if tokens_allowed is None:
                self.emit("E019", owner, f"{what} uses tokens({flow})")
                ok = False
            elif flow not in self.flow_by_id:
                self.emit("E002", owner, f"{what} references unknown flow {flow!r}")
                ok = False
            elif flow not in tokens_allowed:
                self.emit("E019", owner, f"{what} counts tokens on {flow!r}, which is not an incoming flow")
                ok = False
        if not ok:
            return
        try:
            kind = infer_type(expr, self.var_types)
        except ExpressionTypeError as exc:
            self.emit("E012", owner, f"{what}: {exc}")
            return
        if kind != "bool":
            self.emit("E012", owner, f"{what} has type {kind}, expected bool")

    def check_flows(self) -> None:
        for flow, scope in self.flows:
            missing = [end for end in (flow.source, flow.target) if end not in self.nodes]
            if missing:
                for end in missing:
                    self.emit("E002", flow.id, f"sequence flow endpoint {end!r} does not exist")
                continue
            if self.pool_of[flow.source] != self.pool_of[flow.target]:
                self.emit("E003", flow.id, f"connects pool {self.pool_of[flow.source]!r} to {self.pool_of[flow.target]!r}")
            elif self.parent[flow.source] != scope or self.parent[flow.target] != scope:
                self.emit("E013", flow.id, "endpoints lie outside the scope that declares the flow")
            source = self.nodes[flow.source]
            gw = source.gateway
            if flow.is_default:
                if flow.condition is not None:
                    self.emit("E008", flow.id, "a default flow cannot carry a condition")
                elif gw is None or gw.default_flow != flow.id:
                    self.emit("E008", flow.id, "flagged default but not the default flow of its source gateway")
            elif gw is not None and gw.default_flow == flow.id:
                self.emit("E008", flow.id, "gateway default flow is not flagged isDefault")
            if flow.condition is None:
                continue
            if gw is not None and gw.kind == "parallel":
                self.emit("E010", flow.id, "parallel gateways take every outgoing flow unconditionally")
            elif gw is None or gw.kind == "exclusiveEvent":
                self.emit("E014", flow.id, f"source {flow.source!r} does not evaluate conditions")
            else:
                self.check_expression(flow.condition, flow.id, "condition")

    def check_message_flows(self) -> None:
        for mf in self.d.message_flows:
            missing = [end for end in (mf.source, mf.target) if end not in self.nodes]
            for end in missing:
                self.emit("E002", mf.id, f"message flow endpoint {end!r} does not exist")
            if not missing and self.pool_of[mf.source] == self.pool_of[mf.target]:
                self.emit("E004", mf.id, f"both endpoints lie in pool {self.pool_of[mf.source]!r}")

    def check_associations(self) -> None:
        artifacts = {a.id for a in self.d.artifacts}
        handlers: Counter[str] = Counter()
        for assoc in self.d.associations:
            missing = [end for end in (assoc.source, assoc.target) if end not in self.nodes and end not in artifacts]
            for end in missing:
                self.emit("E002", assoc.id, f"association endpoint {end!r} does not exist")
            if missing or assoc.role != "compensationHandler":
                continue
            src = self.nodes.get(assoc.source)
            dst = self.nodes.get(assoc.target)
            if src is None or src.activity is None or src.activity.is_compensation:
                self.emit("E018", assoc.id, "compensation source must be a normal activity")
            elif dst is None or dst.activity is None or not dst.activity.is_compensation:
                self.emit("E018", assoc.id, "compensation target must be a compensation-marked activity")
            elif self.parent[assoc.source] != self.parent[assoc.target]:
                self.emit("E018", assoc.id, "handler must live in the same scope as the activity it compensates")
            else:
                handlers[assoc.source] += 1
        for source, count in handlers.items():
            if count > 1:
                self.emit("E018", source, f"activity has {count} compensation handlers")

    def check_event(self, node: FlowNode) -> None:
        ev = node.event
        assert ev is not None
        nid = node.id
        inc, out = self.incoming[nid], self.outgoing[nid]
        if ev.delay is not None and ev.delay < 1:
            self.emit("E015", nid, "timer delay must be at least 1 tick")
        if ev.trigger == "timer" and ev.delay is None:
            self.emit("E015", nid, "timer event needs a delay")
        if ev.kind != "intermediate" and ev.attached_to is not None:
            self.emit("E015", nid, f"{ev.kind} events cannot be attached to an activity")
        if ev.kind == "start":
            if ev.trigger not in START_TRIGGERS:
                self.emit("E015", nid, f"start events cannot have trigger {ev.trigger!r}")
            elif ev.trigger != "none" and self.parent[nid] is not None:
                self.emit("E015", nid, "sub-process start events must have trigger 'none'")
            if inc:
                self.emit("E005", nid, "start event has incoming sequence flow")
        elif ev.kind == "end":
            if ev.trigger not in END_TRIGGERS:
                self.emit("E015", nid, f"end events cannot have trigger {ev.trigger!r}")
            elif ev.trigger == "cancel" and not self._cancellable(self.parent[nid]):
                self.emit("E015", nid, "cancel end event must sit directly in a transaction with a cancel boundary event")
            if out:
                self.emit("E006", nid, "end event has outgoing sequence flow")
        elif ev.attached_to is not None:
            host = self.nodes.get(ev.attached_to)
            if host is None or host.activity is None or host.activity.is_compensation:
                self.emit("E007", nid, f"host {ev.attached_to!r} is not an activity")
            elif self.parent[host.id] != self.parent[nid]:
                self.emit("E007", nid, "boundary event must share its host's scope")
            if inc:
                self.emit("E007", nid, "boundary event has incoming sequence flow")
            if len(out) != 1:
                self.emit("E007", nid, f"boundary event has {len(out)} outgoing flows, expected 1")
            if ev.trigger not in BOUNDARY_TRIGGERS:
                self.emit("E015", nid, f"boundary events cannot have trigger {ev.trigger!r}")
            elif ev.trigger == "cancel" and host is not None and host.activity is not None \
                    and host.activity.kind != "transaction":
                self.emit("E015", nid, "cancel boundary events attach only to transactions")
        elif ev.trigger not in INTERMEDIATE_TRIGGERS:
            self.emit("E015", nid, f"intermediate events on normal flow cannot have trigger {ev.trigger!r}")

    def _cancellable(self, scope: str | None) -> bool:
        if scope is None:
            return False
        owner = self.nodes[scope].activity
        if owner is None or owner.kind != "transaction":
            return False
        return any(self.nodes[b].event.trigger == "cancel" for b in self.boundaries.get(scope, ()))

    def check_activity(self, node: FlowNode) -> None:
        act = node.activity
        assert act is not None
        nid = node.id
        if act.kind == "task" and act.body is not None:
            self.emit("E016", nid, "tasks cannot have a body")
        if act.kind != "task" and act.body is None:
            self.emit("E016", nid, f"{act.kind} requires a body")
        if act.kind != "task" and act.task_behavior != "auto":
            self.emit("E016", nid, "taskBehavior applies to tasks only")
        if "adHoc" in act.markers and act.kind != "subProcess":
            self.emit("E016", nid, "the ad-hoc marker applies to sub-processes only")
        if "loop" in act.markers and "multiInstance" in act.markers:
            self.emit("E016", nid, "loop and multiInstance markers are mutually exclusive")
        if "loop" in act.markers:
            if act.loop_condition is None:
                self.emit("E016", nid, "loop marker requires loopCondition")
            else:
                self.check_expression(act.loop_condition, nid, "loopCondition")
        elif act.loop_condition is not None or act.loop_max is not None:
            self.emit("E016", nid, "loopCondition/loopMax require the loop marker")
        if act.loop_max is not None and act.loop_max < 1:
            self.emit("E016", nid, "loopMax must be positive")
        if "multiInstance" in act.markers:
            var = act.multi_instance_count
            if var is None:
                self.emit("E016", nid, "multiInstance marker requires multiInstanceCount")
            elif var not in self.var_types:
                self.emit("E002", nid, f"multiInstanceCount references unknown variable {var!r}")
            elif self.var_types[var] != "int":
                self.emit("E016", nid, f"multiInstanceCount variable {var!r} must be int")
        elif act.multi_instance_count is not None:
            self.emit("E016", nid, "multiInstanceCount requires the multiInstance marker")
        if act.is_compensation and (self.incoming[nid] or self.outgoing[nid]):
            self.emit("E009", nid, "compensation activities stay outside the normal flow")

    def check_gateway(self, node: FlowNode) -> None:
        gw = node.gateway
        assert gw is not None
        nid = node.id
        inc, out = self.incoming[nid], self.outgoing[nid]
        if not inc or not out:
            self.emit("E017", nid, "gateway needs at least one incoming and one outgoing flow")
        if gw.default_flow is not None:
            if gw.kind not in ("exclusiveData", "inclusive"):
                self.emit("E008", nid, f"{gw.kind} gateways take no default flow")
            elif gw.default_flow not in {f.id for f in out}:
                self.emit("E008", nid, f"default flow {gw.default_flow!r} is not an outgoing flow of this gateway")
        wants_activation = gw.kind == "complex" and len(inc) >= 2
        if gw.activation_expression is not None and not wants_activation:
            self.emit("E017", nid, "activationExpression belongs to complex gateways with two or more incoming flows")
        elif gw.activation_expression is None and wants_activation:
            self.emit("E017", nid, "complex merge requires an activationExpression")
        elif gw.activation_expression is not None:
            self.check_expression(
                gw.activation_expression, nid, "activationExpression",
                tokens_allowed=frozenset(f.id for f in inc), variables_allowed=False,
            )
        if gw.kind == "exclusiveEvent":
            for flow in out:
                target = self.nodes[flow.target]
                if not self._event_gateway_successor(target):
                    self.emit("E011", nid, f"successor {target.id!r} is not a catching event or receive task")

    def _event_gateway_successor(self, node: FlowNode) -> bool:
        if len(self.incoming[node.id]) != 1:
            return False
        ev = node.event
        if ev is not None:
            if ev.kind != "intermediate" or ev.attached_to is not None:
                return False
            if ev.trigger == "timer":
                return True
            return ev.trigger == "message" and node.id not in self.message_sources
        act = node.activity
        return (
            act is not None
            and act.kind == "task"
            and act.task_behavior == "external"
            and not act.markers
            and node.id not in self.boundaries
        )

    def check_reachability(self) -> None:
        handler_of: dict[str, list[str]] = {}
        for assoc in self.d.associations:
            if assoc.role == "compensationHandler":
                handler_of.setdefault(assoc.source, []).append(assoc.target)
        frontier = [
            nid for nid, node in self.nodes.items()
            if node.event is not None and node.event.kind == "start" and self.parent[nid] is None
        ]
        seen = set(frontier)
        while frontier:
            nid = frontier.pop()
            nxt = [f.target for f in self.outgoing.get(nid, ())]
            nxt += self.boundaries.get(nid, [])
            nxt += [h for h in handler_of.get(nid, []) if h in self.nodes]
            act = self.nodes[nid].activity
            if act is not None and act.body is not None:
                nxt += [
                    n.id for n in act.body.nodes
                    if n.event is not None and n.event.kind == "start"
                ]
            for target in nxt:
                if target not in seen and target in self.nodes:
                    seen.add(target)
                    frontier.append(target)
        for nid in self.nodes:
            if nid not in seen:
                self.emit("W001", nid, "not reachable from any start event")


def validate(definition: ProcessDefinition) -> list[Diagnostic]:
    """Return every structural violation, ordered by ``(subject_id, code)``."""
    return _Checker(definition).run()
