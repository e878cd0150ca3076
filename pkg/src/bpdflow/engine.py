"""Deterministic token-game interpreter.

Tokens sit on sequence flows or, while something is in progress, on nodes:
none-start events before they fire, running non-atomic activities
(external or marked tasks, tasks with boundary events, sub-processes and
transactions) and compensation handlers queued in a compensation chain.
Plain auto tasks complete atomically in one transition.

The scheduler fires the first enabled transition ordered by
``(subject id, kind, transition id)``. Exclusive data gateways test their
outgoing conditions in declaration order.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

from bpdflow.events import (
    AdvanceTime,
    CancelTransaction,
    CompleteTask,
    ExternalEvent,
    Message,
    RaiseError,
    ScriptEntry,
)
from bpdflow.expressions import INT64_MAX, INT64_MIN, EvaluationError, Value, eval_expression
from bpdflow.model import FlowNode, NodeIndex, ProcessDefinition, node_index
from bpdflow.trace import Trace, TraceRecord, data_hash
from bpdflow.transitions import Transition
from bpdflow.validation import has_errors, validate

DEFAULT_MAX_STEPS = 10000


class EngineError(Exception):
    pass


class InstantiationError(EngineError):
    def __init__(self, message: str, code: str | None = None) -> None:
        super().__init__(message)
        self.code = code


class EventError(EngineError):
    pass


class TransitionNotEnabled(EngineError):
    def __init__(self, choice: str) -> None:
        super().__init__(f"transition {choice!r} is not enabled")
        self.choice = choice


class EngineFault(EngineError):
    """Runtime fault: no enabled branch, bad multi-instance count, failed evaluation."""


@dataclass
class ActivityState:
    status: str  # running | waitingExternal | completed | compensated
    loop_counter: int = 0
    remaining: int = 0


@dataclass(frozen=True)
class CompensationActivation:
    activity: str
    handler: str


@dataclass(frozen=True)
class StepResult:
    outcome: str  # fired | quiescent | faulted
    transition: Transition | None = None
    reason: str = ""


class _Static:
    """Per-definition lookup tables."""

    def __init__(self, definition: ProcessDefinition) -> None:
        ix = node_index(definition)
        self.ix = ix
        self.definition = definition
        self.node_ids = sorted(ix.nodes)
        self.ancestors: dict[str, tuple[str, ...]] = {}
        for nid in ix.nodes:
            self.ancestors[nid] = tuple(ix.ancestors(nid))
        for fid in ix.flows:
            self.ancestors[fid] = tuple(ix.position_ancestors(fid))
        self.starts: dict[str | None, tuple[str, ...]] = {}
        for scope, members in ix.scope_nodes.items():
            self.starts[scope] = tuple(
                n for n in members
                if ix.nodes[n].event is not None
                and ix.nodes[n].event.kind == "start"
                and ix.nodes[n].event.trigger == "none"
            )
        self.event_gateway_of: dict[str, str] = {}
        for nid, node in ix.nodes.items():
            if node.gateway is not None and node.gateway.kind == "exclusiveEvent":
                for target in ix.targets(nid):
                    self.event_gateway_of[target] = nid
        self.timers = [
            nid for nid in self.node_ids
            if ix.nodes[nid].event is not None and ix.nodes[nid].event.trigger == "timer"
        ]
        self.cancel_boundary: dict[str, str] = {}
        for host, bounds in ix.boundaries.items():
            for b in bounds:
                if ix.nodes[b].event.trigger == "cancel":
                    self.cancel_boundary.setdefault(host, b)

    def scope_key(self, scope: str | None) -> str:
        return self.definition.id if scope is None else scope


@dataclass
class ProcessInstance:
    definition: ProcessDefinition
    marking: Counter[str] = field(default_factory=Counter)
    activity_states: dict[str, ActivityState] = field(default_factory=dict)
    scope_logs: dict[str, list[str]] = field(default_factory=dict)
    case_data: dict[str, Value] = field(default_factory=dict)
    clock: int = 0
    completion_log: list[tuple[str, int]] = field(default_factory=list)
    status: str = "running"  # running | completed | terminated | failed
    pending: list[ExternalEvent] = field(default_factory=list)
    armed_timers: set[str] = field(default_factory=set)
    timer_since: dict[str, int] = field(default_factory=dict)
    # handler id -> (positions produced when it finishes, activity it compensates)
    chains: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    fired_starts: set[str] = field(default_factory=set)
    steps: int = 0
    fault: str = ""
    static: _Static = field(default=None, repr=False)  # type: ignore[assignment]

    @property
    def definition_id(self) -> str:
        return self.definition.id

    @property
    def index(self) -> NodeIndex:
        return self.static.ix

    @property
    def transaction_scopes(self) -> dict[str, list[str]]:
        ix = self.static.ix
        return {
            k: list(v) for k, v in self.scope_logs.items()
            if k in ix.nodes and ix.nodes[k].activity is not None and ix.nodes[k].activity.kind == "transaction"
        }


# --------------------------------------------------------------------------
# instantiation and events

def _check_value(definition: ProcessDefinition, name: str, value: Any, where: str, error: type[Exception]) -> Value:
    decl = definition.variable(name)
    if decl is None:
        raise error(f"{where}: unknown variable {name!r}")
    if decl.type == "bool":
        if not isinstance(value, bool):
            raise error(f"{where}: variable {name!r} expects bool")
    elif isinstance(value, bool) or not isinstance(value, int) or not INT64_MIN <= value <= INT64_MAX:
        raise error(f"{where}: variable {name!r} expects a 64-bit int")
    return value


def instantiate(definition: ProcessDefinition, initial_data: Mapping[str, Value] | None = None) -> ProcessInstance:
    """Create a running instance with a token on every none-triggered top-level start event."""
    errors = [d for d in validate(definition) if d.severity == "error"]
    if errors:
        first = errors[0]
        raise InstantiationError(f"definition is invalid: {first}", first.code)
    for node, _pool, _parent in definition.walk_nodes():
        if node.activity is not None and "adHoc" in node.activity.markers:
            raise InstantiationError(f"ad-hoc sub-process {node.id!r} cannot be executed")
    data = definition.initial_data
    for name, value in (initial_data or {}).items():
        data[name] = _check_value(definition, name, value, "initial data", InstantiationError)
    inst = ProcessInstance(definition=definition, case_data=data, static=_Static(definition))
    for start in inst.static.starts.get(None, ()):
        inst.marking[start] += 1
    inst.scope_logs[definition.id] = []
    _refresh_timers(inst)
    return inst


def inject_event(instance: ProcessInstance, event: ExternalEvent) -> ProcessInstance:
    """Queue ``event``; ``AdvanceTime`` moves the clock and arms elapsed timers instead."""
    if instance.status != "running":
        raise EventError("instance is not running")
    ix = instance.static.ix
    d = instance.definition

    def activity(node_id: str, label: str) -> FlowNode:
        node = ix.nodes.get(node_id)
        if node is None or node.activity is None:
            raise EventError(f"{label}: unknown activity {node_id!r}")
        return node

    if isinstance(event, AdvanceTime):
        if event.ticks < 1:
            raise EventError("advanceTime: ticks must be at least 1")
        instance.clock += event.ticks
        for timer, since in instance.timer_since.items():
            if instance.clock - since >= ix.nodes[timer].event.delay:
                instance.armed_timers.add(timer)
        return instance
    if isinstance(event, Message):
        if event.target not in ix.nodes and event.target not in ix.pool_ids:
            raise EventError(f"message: unknown target {event.target!r}")
        for name, value in event.payload.items():
            _check_value(d, name, value, "message payload", EventError)
    elif isinstance(event, RaiseError):
        activity(event.activity, "raiseError")
    elif isinstance(event, CancelTransaction):
        node = activity(event.transaction, "cancelTransaction")
        if node.activity.kind != "transaction":
            raise EventError(f"cancelTransaction: {event.transaction!r} is not a transaction")
        if event.transaction not in instance.static.cancel_boundary:
            raise EventError(f"cancelTransaction: {event.transaction!r} has no cancel boundary event")
    elif isinstance(event, CompleteTask):
        node = activity(event.task, "completeTask")
        if node.activity.kind != "task" or node.activity.task_behavior != "external":
            raise EventError(f"completeTask: {event.task!r} is not an external task")
        for name, value in event.assignments.items():
            _check_value(d, name, value, "completeTask assignments", EventError)
    else:
        raise EventError(f"unsupported event {event!r}")
    instance.pending.append(event)
    return instance


def _timer_active(inst: ProcessInstance, timer: str) -> bool:
    st = inst.static
    ix = st.ix
    ev = ix.nodes[timer].event
    if ev.kind == "start":
        return timer not in inst.fired_starts and ix.parent[timer] is None
    if ev.attached_to is not None:
        return inst.marking[ev.attached_to] > 0
    waiting_on = st.event_gateway_of.get(timer, timer)
    return any(inst.marking[f] > 0 for f in ix.incoming[waiting_on])


def _refresh_timers(inst: ProcessInstance) -> None:
    for timer in inst.static.timers:
        if _timer_active(inst, timer):
            inst.timer_since.setdefault(timer, inst.clock)
        else:
            inst.timer_since.pop(timer, None)
            inst.armed_timers.discard(timer)


# --------------------------------------------------------------------------
# compensation

def compensate_scope(instance: ProcessInstance, scope_id: str) -> list[CompensationActivation]:
    """Handlers to run for ``scope_id``: reverse completion order, each handler once."""
    handler_of = instance.static.ix.handler_of
    seen: set[str] = set()
    out = []
    for activity in reversed(instance.scope_logs.get(scope_id, [])):
        if activity in seen:
            continue
        seen.add(activity)
        handler = handler_of.get(activity)
        if handler is not None:
            out.append(CompensationActivation(activity, handler))
    return out


# --------------------------------------------------------------------------
# enabling

Effect = Callable[[ProcessInstance], None]


def _no_effect(inst: ProcessInstance) -> None:
    pass


class _Enabler:
    """Enumerates enabled transitions together with their side effects.

    With ``assume_events`` every awaited event counts as available; this is
    how a quiescent instance is told apart from a deadlocked one.
    """

    def __init__(self, inst: ProcessInstance, assume_events: bool = False) -> None:
        self.inst = inst
        self.st = inst.static
        self.ix = inst.static.ix
        self.m = inst.marking
        self.assume = assume_events
        self.out: list[tuple[Transition, Effect]] = []

    # -- helpers ---------------------------------------------------------

    def add(self, kind: str, subject: str, consumed: list[str], produced: list[str] | tuple[str, ...],
            effect: Effect = _no_effect) -> None:
        self.out.append((Transition.make(kind, subject, consumed, produced), effect))

    def marked_incoming(self, nid: str) -> list[str]:
        return [f for f in self.ix.incoming[nid] if self.m[f] > 0]

    def tokens_within(self, activity: str, include_self: bool = True) -> list[str]:
        out = []
        for pos, count in sorted(self.m.items()):
            if (include_self and pos == activity) or activity in self.st.ancestors[pos]:
                out.extend([pos] * count)
        return out

    def all_tokens(self) -> list[str]:
        return sorted(self.m.elements())

    def busy(self, activity: str) -> bool:
        return bool(self.tokens_within(activity))

    def eval_bool(self, expr, data: Mapping[str, Value] | None = None, counts=None) -> bool:
        try:
            value = eval_expression(expr, self.inst.case_data if data is None else data, counts)
        except EvaluationError as exc:
            raise EngineFault(str(exc)) from None
        if not isinstance(value, bool):
            raise EngineFault("condition did not evaluate to bool")
        return value

    def find_message(self, nid: str) -> int | None:
        if self.assume:
            return -1
        name = self.ix.nodes[nid].event.message if self.ix.nodes[nid].event else None
        pool = self.ix.pool_of[nid]
        for i, ev in enumerate(self.inst.pending):
            if isinstance(ev, Message) and (
                ev.target == nid or (ev.target == pool and (name is None or ev.name == name))
            ):
                return i
        return None

    def find_completion(self, task: str) -> int | None:
        if self.assume:
            return -1
        for i, ev in enumerate(self.inst.pending):
            if isinstance(ev, CompleteTask) and ev.task == task:
                return i
            if isinstance(ev, Message) and ev.target == task:
                return i
        return None

    def timer_armed(self, nid: str) -> bool:
        return self.assume or nid in self.inst.armed_timers

    def event_data(self, idx: int | None) -> dict[str, Value]:
        """Case data after applying the payload of pending event ``idx``."""
        data = dict(self.inst.case_data)
        if idx is not None and idx >= 0:
            ev = self.inst.pending[idx]
            if isinstance(ev, Message):
                data.update(ev.payload)
            elif isinstance(ev, CompleteTask):
                data.update(ev.assignments)
        return data

    def take_event(self, idx: int | None) -> Effect:
        def effect(inst: ProcessInstance) -> None:
            if idx is None or idx < 0:
                return
            ev = inst.pending.pop(idx)
            if isinstance(ev, Message):
                inst.case_data.update(ev.payload)
            elif isinstance(ev, CompleteTask):
                inst.case_data.update(ev.assignments)
        return effect

    def take_timer(self, nid: str) -> Effect:
        def effect(inst: ProcessInstance) -> None:
            inst.armed_timers.discard(nid)
            inst.timer_since.pop(nid, None)
        return effect

    def send(self, nid: str) -> Effect:
        targets = self.ix.message_targets.get(nid, ())

        def effect(inst: ProcessInstance) -> None:
            for tgt in targets:
                ev = inst.static.ix.nodes[tgt].event
                inst.pending.append(Message((ev.message if ev and ev.message else ""), tgt, {}))
        return effect

    def finish(self, nid: str) -> Effect:
        """Record a completed activity and emit its outgoing messages."""
        scope = self.st.scope_key(self.ix.parent[nid])
        send = self.send(nid)

        def effect(inst: ProcessInstance) -> None:
            seq = inst.completion_log[-1][1] + 1 if inst.completion_log else 1
            inst.completion_log.append((nid, seq))
            inst.scope_logs.setdefault(scope, []).append(nid)
            state = inst.activity_states.setdefault(nid, ActivityState("completed"))
            state.status = "completed"
            send(inst)
        return effect

    def discard_within(self, activity: str, include_self: bool = True) -> Effect:
        """Forget activity states, chains and logs of everything inside ``activity``."""
        inside = [n for n in self.ix.nodes if activity in self.st.ancestors[n]]
        if include_self:
            inside.append(activity)

        def effect(inst: ProcessInstance) -> None:
            for n in inside:
                inst.activity_states.pop(n, None)
                inst.chains.pop(n, None)
                if n != activity:
                    inst.scope_logs.pop(n, None)
        return effect

    def chain(self, scope_key: str, continuation: tuple[str, ...]) -> tuple[tuple[str, ...], Effect]:
        """Positions produced to start compensating ``scope_key``, and the bookkeeping effect."""
        acts = compensate_scope(self.inst, scope_key)
        if not acts:
            return continuation, _no_effect
        links: dict[str, tuple[tuple[str, ...], str]] = {}
        for here, nxt in zip(acts, acts[1:]):
            links[here.handler] = ((nxt.handler,), here.activity)
        links[acts[-1].handler] = (continuation, acts[-1].activity)
        compensated = {a.activity for a in acts}

        def effect(inst: ProcessInstance) -> None:
            inst.chains.update(links)
            log = inst.scope_logs.get(scope_key, [])
            inst.scope_logs[scope_key] = [a for a in log if a not in compensated]
        return (acts[0].handler,), effect

    def catcher(self, activity: str | None, error: str | None) -> tuple[str, str] | None:
        """First (host, boundary) catching ``error`` from ``activity`` outwards."""
        if activity is None:
            return None
        for host in (activity, *self.st.ancestors[activity]):
            for b in self.ix.boundaries.get(host, ()):
                ev = self.ix.nodes[b].event
                if ev.trigger == "error" and (ev.error is None or ev.error == error):
                    return host, b
        return None

    def is_transaction(self, nid: str) -> bool:
        act = self.ix.nodes[nid].activity
        return act is not None and act.kind == "transaction"

    def interrupt(self, host: str, boundary: str, extra: Effect = _no_effect, error: bool = False) -> None:
        consumed = self.tokens_within(host)
        produced = list(self.ix.outgoing[boundary])
        clear = self.discard_within(host)

        def effect(inst: ProcessInstance) -> None:
            extra(inst)
            clear(inst)
        if error and self.is_transaction(host):
            self.add("transactionOutcome", host, consumed, produced, effect)
        else:
            self.add("boundaryInterrupt", boundary, consumed, produced, effect)

    def cancel(self, transaction: str, extra: Effect = _no_effect) -> None:
        consumed = self.tokens_within(transaction)
        boundary = self.st.cancel_boundary[transaction]
        produced, chain_effect = self.chain(transaction, tuple(self.ix.outgoing[boundary]))
        clear = self.discard_within(transaction, include_self=True)

        def effect(inst: ProcessInstance) -> None:
            extra(inst)
            clear(inst)
            chain_effect(inst)
        self.add("transactionOutcome", transaction, consumed, produced, effect)

    def fail(self, subject: str, reason: str, extra: Effect = _no_effect) -> None:
        def effect(inst: ProcessInstance) -> None:
            extra(inst)
            inst.status = "failed"
            inst.fault = reason
        self.add("processEnd", subject, self.all_tokens(), [], effect)

    # -- enumeration -----------------------------------------------------

    def collect(self) -> list[tuple[Transition, Effect]]:
        for nid in self.st.node_ids:
            node = self.ix.nodes[nid]
            if node.event is not None:
                self.event(node)
            elif node.activity is not None:
                self.activity(node)
            else:
                self.gateway(node)
        self.exceptions()
        unique: dict[str, tuple[Transition, Effect]] = {}
        for t, eff in self.out:
            unique.setdefault(t.id, (t, eff))
        return sorted(unique.values(), key=lambda te: te[0].sort_key)

    def event(self, node: FlowNode) -> None:
        ev = node.event
        nid = node.id
        out = list(self.ix.outgoing[nid])
        if ev.kind == "start":
            if self.m[nid] > 0:
                self.add("fireStart", nid, [nid], out, self.send(nid))
            elif ev.trigger in ("message", "timer") and self.ix.parent[nid] is None and nid not in self.inst.fired_starts:
                if ev.trigger == "message":
                    idx = self.find_message(nid)
                    if idx is None:
                        return
                    take = self.take_event(idx)
                elif self.timer_armed(nid):
                    take = self.take_timer(nid)
                else:
                    return

                def fired(inst: ProcessInstance, take=take) -> None:
                    take(inst)
                    inst.fired_starts.add(nid)
                self.add("fireStart", nid, [], out, fired)
            return
        if ev.attached_to is not None or nid in self.st.event_gateway_of:
            return
        scope = self.ix.parent[nid]
        for f in self.marked_incoming(nid):
            if ev.kind == "intermediate":
                self.intermediate(nid, ev, f, out, scope)
            else:
                self.end(nid, ev, f, scope)

    def intermediate(self, nid: str, ev, f: str, out: list[str], scope: str | None) -> None:
        send = self.send(nid)
        if ev.trigger == "none" or (ev.trigger == "message" and nid in self.ix.message_targets):
            self.add("eventCatch", nid, [f], out, send)
        elif ev.trigger == "message":
            idx = self.find_message(nid)
            if idx is not None:
                self.add("eventCatch", nid, [f], out, self.take_event(idx))
        elif ev.trigger == "timer":
            if self.timer_armed(nid):
                self.add("eventCatch", nid, [f], out, self.take_timer(nid))
        elif ev.trigger == "compensation":
            produced, effect = self.chain(self.st.scope_key(scope), tuple(out))
            self.add("eventCatch", nid, [f], produced, effect)

    def end(self, nid: str, ev, f: str, scope: str | None) -> None:
        if ev.trigger == "none":
            self.add("processEnd", nid, [f], [], self.send(nid))
        elif ev.trigger == "terminate":
            if scope is None:
                def terminate(inst: ProcessInstance) -> None:
                    inst.status = "terminated"
                self.add("processEnd", nid, self.all_tokens(), [], terminate)
            else:
                self.add("processEnd", nid, self.tokens_within(scope, include_self=False), [],
                         self.discard_within(scope, include_self=False))
        elif ev.trigger == "error":
            caught = self.catcher(scope, ev.error)
            if caught is None:
                self.fail(nid, f"uncaught error {ev.error or ''!r} at {nid!r}".replace("''", "(unnamed)"))
            else:
                self.interrupt(*caught, error=True)
        elif ev.trigger == "cancel":
            self.cancel(scope)
        elif ev.trigger == "compensation":
            produced, effect = self.chain(self.st.scope_key(scope), ())
            self.add("processEnd", nid, [f], produced, effect)

    def activity(self, node: FlowNode) -> None:
        act = node.activity
        nid = node.id
        out = list(self.ix.outgoing[nid])
        if act.is_compensation:
            if self.m[nid] > 0 and nid in self.inst.chains:
                produced, child = self.inst.chains[nid]

                def ran(inst: ProcessInstance) -> None:
                    inst.chains.pop(nid, None)
                    inst.activity_states.setdefault(child, ActivityState("compensated")).status = "compensated"
                self.add("compensationRun", nid, [nid], produced, ran)
            return
        if self.simple(nid):
            for f in self.marked_incoming(nid):
                self.add("completeTask", nid, [f], out, self.finish(nid))
            return
        if not self.busy(nid):
            for f in self.marked_incoming(nid):
                self.start_activity(nid, f)
        if self.m[nid] == 0:
            return
        if act.kind == "task":
            self.complete_task(nid)
        elif not self.tokens_within(nid, include_self=False):
            self.complete_scope(nid)
        for b in self.ix.boundaries.get(nid, ()):
            trig = self.ix.nodes[b].event.trigger
            if trig == "timer" and self.timer_armed(b):
                self.interrupt(nid, b, self.take_timer(b))
            elif trig == "message":
                idx = self.find_message(b)
                if idx is not None:
                    self.interrupt(nid, b, self.take_event(idx))

    def simple(self, nid: str) -> bool:
        act = self.ix.nodes[nid].activity
        return (
            act.kind == "task"
            and act.task_behavior == "auto"
            and not (act.markers & {"loop", "multiInstance"})
            and nid not in self.ix.boundaries
        )

    def instances(self, nid: str) -> int:
        act = self.ix.nodes[nid].activity
        if "multiInstance" not in act.markers:
            return 1
        count = self.inst.case_data[act.multi_instance_count]
        if count <= 0:
            raise EngineFault(f"multi-instance count of {nid!r} is {count}")
        return count

    def start_activity(self, nid: str, f: str) -> None:
        act = self.ix.nodes[nid].activity
        n = self.instances(nid)
        if act.kind == "task":
            produced = [nid] * n
            status = "waitingExternal" if act.task_behavior == "external" else "running"
        else:
            produced = [nid] + [s for s in self.st.starts.get(nid, ()) for _ in range(n)]
            status = "running"

        def started(inst: ProcessInstance) -> None:
            inst.activity_states[nid] = ActivityState(status, 0, n)
            if act.kind != "task":
                inst.scope_logs[nid] = []
        self.add("activityStart", nid, [f], produced, started)

    def loop_again(self, nid: str, data: Mapping[str, Value]) -> bool:
        act = self.ix.nodes[nid].activity
        if "loop" not in act.markers:
            return False
        state = self.inst.activity_states[nid]
        return self.eval_bool(act.loop_condition, data) and state.loop_counter + 1 < act.effective_loop_max

    def complete_task(self, nid: str) -> None:
        act = self.ix.nodes[nid].activity
        idx = None
        if act.task_behavior == "external":
            idx = self.find_completion(nid)
            if idx is None:
                return
        take = self.take_event(idx)
        state = self.inst.activity_states[nid]
        out = list(self.ix.outgoing[nid])
        if "multiInstance" in act.markers and state.remaining > 1:
            def one_done(inst: ProcessInstance) -> None:
                take(inst)
                inst.activity_states[nid].remaining -= 1
            self.add("completeTask", nid, [nid], [], one_done)
            return
        if self.loop_again(nid, self.event_data(idx)):
            def again(inst: ProcessInstance) -> None:
                take(inst)
                inst.activity_states[nid].loop_counter += 1
            self.add("completeTask", nid, [nid], [nid], again)
            return
        finish = self.finish(nid)

        def done(inst: ProcessInstance) -> None:
            take(inst)
            inst.activity_states[nid].remaining = 0
            finish(inst)
        self.add("completeTask", nid, [nid], out, done)

    def complete_scope(self, nid: str) -> None:
        act = self.ix.nodes[nid].activity
        kind = "transactionOutcome" if act.kind == "transaction" else "completeTask"
        if self.loop_again(nid, self.inst.case_data):
            n = self.instances(nid)
            produced = [nid] + [s for s in self.st.starts.get(nid, ()) for _ in range(n)]

            def again(inst: ProcessInstance) -> None:
                inst.activity_states[nid].loop_counter += 1
            self.add(kind, nid, [nid], produced, again)
            return
        self.add(kind, nid, [nid], list(self.ix.outgoing[nid]), self.finish(nid))

    def gateway(self, node: FlowNode) -> None:
        gw = node.gateway
        nid = node.id
        inc = self.ix.incoming[nid]
        marked = self.marked_incoming(nid)
        if not marked:
            return
        kind = "gatewayJoin" if len(inc) >= 2 else "gatewaySplit"
        if gw.kind == "parallel":
            if len(marked) == len(inc):
                self.add(kind, nid, list(inc), list(self.ix.outgoing[nid]))
        elif gw.kind == "exclusiveData":
            choice = [self.xor_choice(nid)]
            for f in marked:
                self.add(kind, nid, [f], choice)
        elif gw.kind == "inclusive":
            if len(inc) >= 2:
                if self.or_join_enabled(nid):
                    self.add(kind, nid, marked, self.multi_choice(nid, allow_default=True))
            else:
                self.add(kind, nid, marked, self.multi_choice(nid, allow_default=True))
        elif gw.kind == "complex":
            if len(inc) >= 2:
                counts = {f: self.m[f] for f in inc}
                if self.eval_bool(gw.activation_expression, {}, counts):
                    consumed = [f for f in inc for _ in range(self.m[f])]
                    self.add(kind, nid, consumed, self.multi_choice(nid, allow_default=False))
            else:
                for f in marked:
                    self.add(kind, nid, [f], self.multi_choice(nid, allow_default=False))
        else:
            self.event_gateway(nid, marked)

    def xor_choice(self, nid: str) -> str:
        gw = self.ix.nodes[nid].gateway
        for f in self.ix.outgoing[nid]:
            if f == gw.default_flow:
                continue
            cond = self.ix.flows[f].condition
            if cond is None or self.eval_bool(cond):
                return f
        if gw.default_flow is None:
            raise EngineFault(f"no enabled branch at gateway {nid!r}")
        return gw.default_flow

    def multi_choice(self, nid: str, allow_default: bool) -> list[str]:
        gw = self.ix.nodes[nid].gateway
        chosen = []
        for f in self.ix.outgoing[nid]:
            if f == gw.default_flow:
                continue
            cond = self.ix.flows[f].condition
            if cond is None or self.eval_bool(cond):
                chosen.append(f)
        if not chosen:
            if allow_default and gw.default_flow is not None:
                return [gw.default_flow]
            raise EngineFault(f"no enabled branch at gateway {nid!r}")
        return chosen

    def event_gateway(self, nid: str, marked: list[str]) -> None:
        for f in marked:
            for target in self.ix.targets(nid):
                node = self.ix.nodes[target]
                out = list(self.ix.outgoing[target])
                if node.activity is not None:
                    idx = self.find_completion(target)
                    if idx is None:
                        continue
                    take, finish = self.take_event(idx), self.finish(target)

                    def received(inst: ProcessInstance, take=take, finish=finish) -> None:
                        take(inst)
                        finish(inst)
                    self.add("eventCatch", target, [f], out, received)
                elif node.event.trigger == "timer":
                    if self.timer_armed(target):
                        self.add("eventCatch", target, [f], out, self.take_timer(target))
                else:
                    idx = self.find_message(target)
                    if idx is not None:
                        self.add("eventCatch", target, [f], out, self.take_event(idx))

    def exceptions(self) -> None:
        if self.assume:
            for nid in self.st.node_ids:
                if self.m[nid] == 0 or self.ix.nodes[nid].activity is None or nid in self.inst.chains:
                    continue
                for host, b in self.reachable_catchers(nid):
                    self.interrupt(host, b, error=True)
                if nid in self.st.cancel_boundary:
                    self.cancel(nid)
            return
        for idx, ev in enumerate(self.inst.pending):
            if isinstance(ev, RaiseError) and self.m[ev.activity] > 0 and ev.activity not in self.inst.chains:
                caught = self.catcher(ev.activity, ev.error or None)
                if caught is None:
                    self.fail(ev.activity, f"uncaught error {ev.error or '(unnamed)'!r} raised on {ev.activity!r}",
                              self.take_event(idx))
                else:
                    self.interrupt(*caught, self.take_event(idx), error=True)
            elif isinstance(ev, CancelTransaction) and self.m[ev.transaction] > 0:
                self.cancel(ev.transaction, self.take_event(idx))

    def reachable_catchers(self, activity: str) -> list[tuple[str, str]]:
        """Error boundaries that some error raised on ``activity`` would reach first."""
        found = []
        caught_names: set[str] = set()
        for host in (activity, *self.st.ancestors[activity]):
            for b in self.ix.boundaries.get(host, ()):
                ev = self.ix.nodes[b].event
                if ev.trigger != "error":
                    continue
                if ev.error is None:
                    found.append((host, b))
                    return found
                if ev.error not in caught_names:
                    caught_names.add(ev.error)
                    found.append((host, b))
        return found

    # -- inclusive join --------------------------------------------------

    def or_join_enabled(self, gateway: str) -> bool:
        ix = self.ix
        inc = ix.incoming[gateway]
        if not any(self.m[f] > 0 for f in inc):
            return False
        waiting = [f for f in inc if self.m[f] == 0]
        if not waiting:
            return True
        scope = ix.parent[gateway]
        sources: set[str] = set()
        for pos in self.m:
            if pos in inc:
                continue
            rep = self.representative(pos, scope)
            if rep is not None:
                sources.add(rep)
        if not sources:
            return True
        predecessors = self.predecessors()
        for start in waiting:
            seen = {start}
            stack = [start]
            while stack:
                pos = stack.pop()
                if pos in sources:
                    return False
                if pos == gateway:
                    continue
                for pred in predecessors.get(pos, ()):
                    if pred not in seen:
                        seen.add(pred)
                        stack.append(pred)
        return True

    def representative(self, pos: str, scope: str | None) -> str | None:
        """The position directly inside ``scope`` that holds or encloses ``pos``."""
        chain = self.st.ancestors[pos]
        if scope is None:
            return chain[-1] if chain else pos
        if scope not in chain:
            return None
        i = chain.index(scope)
        return pos if i == 0 else chain[i - 1]

    def predecessors(self) -> dict[str, list[str]]:
        ix = self.ix
        preds: dict[str, list[str]] = {}
        for fid, flow in ix.flows.items():
            preds.setdefault(fid, []).append(flow.source)
            preds.setdefault(flow.target, []).append(fid)
        for host, bounds in ix.boundaries.items():
            for b in bounds:
                preds.setdefault(b, []).append(host)
        for handler, (nxt, _child) in self.inst.chains.items():
            for pos in nxt:
                preds.setdefault(pos, []).append(handler)
        return preds


# --------------------------------------------------------------------------
# public operations

def enabled_transitions(instance: ProcessInstance) -> list[Transition]:
    """Enabled transitions in scheduler order; raises :class:`EngineFault` on a runtime fault."""
    if instance.status != "running":
        raise EngineError("instance is not running")
    return [t for t, _eff in _Enabler(instance).collect()]


def or_join_enabled(instance: ProcessInstance, gateway_id: str) -> bool:
    node = instance.static.ix.nodes.get(gateway_id)
    if node is None or node.gateway is None or node.gateway.kind != "inclusive" \
            or len(instance.static.ix.incoming[gateway_id]) < 2:
        raise EngineError(f"{gateway_id!r} is not an inclusive gateway with two or more incoming flows")
    return _Enabler(instance).or_join_enabled(gateway_id)


def is_waiting(instance: ProcessInstance) -> bool:
    """True when some awaited event would let the instance move again."""
    try:
        return bool(_Enabler(instance, assume_events=True).collect())
    except EngineFault:
        return True


def _still_startable(instance: ProcessInstance) -> bool:
    # An empty marking is not final while a queued event can still fire a
    # triggered start (a message sent by another pool, for instance).
    try:
        return bool(_Enabler(instance).collect())
    except EngineFault:
        return True


def step(instance: ProcessInstance, choice: str | None = None) -> StepResult:
    """Fire ``choice`` (a transition id) or the first enabled transition."""
    if instance.status != "running":
        raise EngineError("instance is not running")
    try:
        candidates = _Enabler(instance).collect()
    except EngineFault as exc:
        instance.status = "failed"
        instance.fault = str(exc)
        return StepResult("faulted", reason=str(exc))
    if choice is not None:
        picked = [c for c in candidates if c[0].id == choice]
        if not picked:
            raise TransitionNotEnabled(choice)
        transition, effect = picked[0]
    elif not candidates:
        return StepResult("quiescent")
    else:
        transition, effect = candidates[0]
    instance.marking = transition.apply(instance.marking)
    effect(instance)
    instance.steps += 1
    if instance.status == "running" and not instance.marking and not _still_startable(instance):
        instance.status = "completed"
    if instance.status == "running":
        _refresh_timers(instance)
    return StepResult("fired", transition)


def run(
    definition: ProcessDefinition,
    initial_data: Mapping[str, Value] | None = None,
    script: list[ScriptEntry] | None = None,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Trace:
    """Execute to a halt, injecting scripted events once their step index is reached.

    When the instance goes quiescent before the next scripted index, the next
    batch of scripted events is injected early. Verdicts: completed,
    terminated, failed, faulted, deadlock, quiescent, budget exceeded.
    """
    inst = instantiate(definition, initial_data)
    pending = sorted(script or [], key=lambda e: e.after)
    trace = Trace(definition.id)
    i = 0
    while True:
        while i < len(pending) and pending[i].after <= inst.steps and inst.status == "running":
            inject_event(inst, pending[i].event)
            i += 1
        if inst.status != "running":
            trace.verdict = inst.status
            trace.reason = inst.fault
            break
        if inst.steps >= max_steps:
            trace.verdict = "budget exceeded"
            break
        clock = inst.clock
        result = step(inst)
        if result.outcome == "fired":
            trace.records.append(TraceRecord(inst.steps - 1, result.transition, clock, data_hash(inst.case_data)))
        elif result.outcome == "faulted":
            trace.verdict = "faulted"
            trace.reason = result.reason
            break
        elif i < len(pending):
            batch = pending[i].after
            while i < len(pending) and pending[i].after == batch:
                inject_event(inst, pending[i].event)
                i += 1
        else:
            trace.verdict = "quiescent" if is_waiting(inst) else "deadlock"
            break
    return trace
