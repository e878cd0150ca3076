"""Bounded breadth-first exploration of the token game and soundness checks.

The successor function here is written independently of the engine and only
shares the model, the expression evaluator and :class:`Transition`. Flow and
loop conditions are free booleans (both outcomes are explored) unless
concrete case data is supplied, and every awaited external event is assumed
to be available: messages, timers, completion of external tasks, errors
raised on running activities that some boundary event catches, and
cancellation of transactions that carry a cancel boundary event.

A state is the marking plus everything that can still influence future
transitions: loop counters and remaining instances of live activities,
the compensation logs reduced to activities that own a handler, pending
compensation chains, fired triggered start events and the instance status.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from itertools import product
from typing import Any, Union

from bpdflow.expressions import EvaluationError, Value, eval_expression
from bpdflow.model import FlowNode, NodeIndex, ProcessDefinition, node_index
from bpdflow.trace import Trace
from bpdflow.transitions import Transition
from bpdflow.validation import validate

DEFAULT_MAX_STATES = 100000
UNKNOWN = "unknown"

Flag = Union[bool, str]


class AnalyzerError(Exception):
    pass


@dataclass(frozen=True, order=True)
class State:
    marking: tuple[tuple[str, int], ...]
    # (activity, loop counter, remaining instances) for live activities
    activities: tuple[tuple[str, int, int], ...] = ()
    # (scope, activities owning a handler, last completion order)
    logs: tuple[tuple[str, tuple[str, ...]], ...] = ()
    # (handler, positions produced afterwards, activity compensated)
    chains: tuple[tuple[str, tuple[str, ...], str], ...] = ()
    fired: tuple[str, ...] = ()
    status: str = "running"

    @property
    def positions(self) -> list[str]:
        return [pos for pos, n in self.marking for _ in range(n)]

    @property
    def is_final(self) -> bool:
        return self.status in ("completed", "terminated")


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    transition: Transition | None  # None for a runtime fault
    label: str


@dataclass
class StateGraph:
    definition_id: str
    states: list[State] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    initial: int = 0
    bounded: bool = False
    expanded: list[bool] = field(default_factory=list)
    node_ids: tuple[str, ...] = ()
    _out: dict[int, list[Edge]] = field(default_factory=dict, repr=False)

    def out_edges(self, state: int) -> list[Edge]:
        return self._out.get(state, [])

    def flags(self, state: int) -> frozenset[str]:
        s = self.states[state]
        out = set()
        if s.is_final:
            out.add("final")
        elif self.expanded[state] and not self.out_edges(state):
            out.add("deadlock")
        if any(n >= 2 for pos, n in s.marking if pos not in self.node_ids):
            out.add("improper")
        return frozenset(out)

    def deadlocks(self) -> list[int]:
        return [i for i in range(len(self.states)) if "deadlock" in self.flags(i)]


@dataclass(frozen=True)
class SoundnessReport:
    option_to_complete: Flag
    proper_completion: Flag
    deadlocks: tuple[tuple[int, tuple[str, ...]], ...]
    unreachable_nodes: tuple[str, ...] | str
    bounded: bool

    @property
    def sound(self) -> bool:
        return (
            self.option_to_complete is True
            and self.proper_completion is True
            and not self.deadlocks
            and not self.unreachable_nodes
        )

    def to_dict(self) -> dict[str, Any]:
        unreachable = self.unreachable_nodes
        return {
            "optionToComplete": self.option_to_complete,
            "properCompletion": self.proper_completion,
            "deadlocks": [{"state": s, "marking": list(m)} for s, m in self.deadlocks],
            "unreachableNodes": unreachable if isinstance(unreachable, str) else list(unreachable),
            "bounded": self.bounded,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# --------------------------------------------------------------------------
# successor function

@dataclass
class _Delta:
    """Bookkeeping changes that accompany a marking change."""

    set_acts: dict[str, tuple[int, int]] = field(default_factory=dict)
    drop: tuple[str, ...] = ()  # activities whose state and log are discarded
    clear_inside: tuple[str, ...] = ()  # everything strictly inside these is discarded
    reset_log: str | None = None
    drain_log: str | None = None
    completed: str | None = None
    add_chains: dict[str, tuple[tuple[str, ...], str]] = field(default_factory=dict)
    run_handler: str | None = None
    fired: str | None = None
    status: str | None = None


class _Faulted(Exception):
    pass


class _Semantics:
    def __init__(self, definition: ProcessDefinition, data: Mapping[str, Value] | None) -> None:
        self.d = definition
        self.ix: NodeIndex = node_index(definition)
        self.data = None if data is None else dict(data)
        self.init_data = definition.initial_data
        if data is not None:
            self.init_data.update(data)
        ix = self.ix
        self.triggered_starts = {
            nid for nid, node in ix.nodes.items()
            if node.event is not None and node.event.kind == "start"
            and node.event.trigger != "none" and ix.parent[nid] is None
        }
        self.within: dict[str, set[str]] = {}  # activity -> node ids strictly inside
        for nid in ix.nodes:
            p = ix.parent[nid]
            while p is not None:
                self.within.setdefault(p, set()).add(nid)
                p = ix.parent[p]
        self.flows_within: dict[str, set[str]] = {}
        for fid, scope in ix.flow_scope.items():
            p = scope
            while p is not None:
                self.flows_within.setdefault(p, set()).add(fid)
                p = ix.parent[p]
        self.gateway_successors = {
            t for nid, n in ix.nodes.items()
            if n.gateway is not None and n.gateway.kind == "exclusiveEvent"
            for t in ix.targets(nid)
        }

    # -- state helpers ----------------------------------------------------

    def initial(self) -> State:
        starts = [
            nid for nid in self.ix.scope_nodes.get(None, ())
            if self.ix.nodes[nid].event is not None
            and self.ix.nodes[nid].event.kind == "start"
            and self.ix.nodes[nid].event.trigger == "none"
        ]
        return State(tuple(sorted(Counter(starts).items())))

    def inside(self, activity: str, pos: str) -> bool:
        return pos in self.within.get(activity, ()) or pos in self.flows_within.get(activity, ())

    def tokens_of(self, m: Counter[str], activity: str, with_self: bool = True) -> list[str]:
        out = [p for p in m.elements() if self.inside(activity, p)]
        if with_self:
            out += [activity] * m[activity]
        return out

    def level(self, pos: str, scope: str | None) -> str | None:
        """Map ``pos`` to the element directly in ``scope`` that contains it."""
        here = self.ix.flow_scope[pos] if pos in self.ix.flows else self.ix.parent[pos]
        while here != scope:
            if here is None:
                return None
            pos, here = here, self.ix.parent[here]
        return pos

    def truth(self, expr) -> list[bool]:
        """Possible values of a condition: both when free, the evaluated one otherwise."""
        if expr is None:
            return [True]
        if self.data is None:
            return [True, False]
        try:
            value = eval_expression(expr, self.data)
        except EvaluationError as exc:
            raise _Faulted(str(exc)) from None
        return [bool(value)]

    def count(self, nid: str) -> int:
        act = self.ix.nodes[nid].activity
        if "multiInstance" not in act.markers:
            return 1
        n = self.init_data[act.multi_instance_count]
        if n <= 0:
            raise _Faulted(f"multi-instance count of {nid} is {n}")
        return n

    def inner_starts(self, nid: str) -> list[str]:
        return [
            n for n in self.ix.scope_nodes.get(nid, ())
            if self.ix.nodes[n].event is not None
            and self.ix.nodes[n].event.kind == "start"
            and self.ix.nodes[n].event.trigger == "none"
        ]

    def atomic(self, nid: str) -> bool:
        a = self.ix.nodes[nid].activity
        return (
            a.kind == "task" and a.task_behavior == "auto" and not a.markers
            and not self.ix.boundaries.get(nid)
        )

    # -- successors --------------------------------------------------------

    def successors(self, s: State) -> Iterator[tuple[Transition | None, str, State]]:
        if s.is_final or s.status == "failed":
            return
        m = Counter(dict(s.marking))
        acts = {a: (c, r) for a, c, r in s.activities}
        logs = {k: v for k, v in s.logs}
        chains = {h: (nxt, child) for h, nxt, child in s.chains}
        fired = set(s.fired)
        moves: list[tuple[Transition, _Delta]] = []
        faults: list[str] = []

        def add(kind: str, subject: str, consumed, produced, delta: _Delta | None = None) -> None:
            moves.append((Transition.make(kind, subject, consumed, produced), delta or _Delta()))

        def marked(nid: str) -> list[str]:
            return [f for f in self.ix.incoming[nid] if m[f]]

        def comp_chain(scope_key: str, then: tuple[str, ...]) -> tuple[tuple[str, ...], dict, str]:
            seq = list(reversed(logs.get(scope_key, ())))
            if not seq:
                return then, {}, scope_key
            handlers = [self.ix.handler_of[a] for a in seq]
            links = {}
            for i, a in enumerate(seq):
                links[handlers[i]] = ((handlers[i + 1],) if i + 1 < len(seq) else then, a)
            return (handlers[0],), links, scope_key

        def key(scope: str | None) -> str:
            return self.d.id if scope is None else scope

        def first_catcher(start: str | None, error: str | None) -> tuple[str, str] | None:
            host = start
            while host is not None:
                for b in self.ix.boundaries.get(host, ()):
                    e = self.ix.nodes[b].event
                    if e.trigger == "error" and e.error in (None, error):
                        return host, b
                host = self.ix.parent[host]
            return None

        def interrupt(host: str, b: str, by_error: bool) -> None:
            consumed = self.tokens_of(m, host)
            produced = self.ix.outgoing[b]
            delta = _Delta(drop=(host,), clear_inside=(host,))
            is_tx = self.ix.nodes[host].activity.kind == "transaction"
            if by_error and is_tx:
                add("transactionOutcome", host, consumed, produced, delta)
            else:
                add("boundaryInterrupt", b, consumed, produced, delta)

        def cancel(tx: str) -> None:
            b = next(x for x in self.ix.boundaries[tx] if self.ix.nodes[x].event.trigger == "cancel")
            produced, links, scope = comp_chain(tx, self.ix.outgoing[b])
            add("transactionOutcome", tx, self.tokens_of(m, tx), produced,
                _Delta(drop=(tx,), clear_inside=(tx,), add_chains=links))

        def loop_choices(nid: str) -> list[bool]:
            a = self.ix.nodes[nid].activity
            if "loop" not in a.markers:
                return [False]
            counter = acts[nid][0]
            return [again and counter + 1 < a.effective_loop_max for again in self.truth(a.loop_condition)]

        def finish_delta(nid: str) -> _Delta:
            return _Delta(drop=(nid,), completed=nid)

        for nid in sorted(self.ix.nodes):
            node: FlowNode = self.ix.nodes[nid]
            out = self.ix.outgoing[nid]
            try:
                if node.event is not None:
                    ev = node.event
                    if ev.kind == "start":
                        if m[nid]:
                            add("fireStart", nid, [nid], out)
                        elif ev.trigger != "none" and self.ix.parent[nid] is None and nid not in fired:
                            add("fireStart", nid, [], out, _Delta(fired=nid))
                        continue
                    if ev.attached_to is not None or nid in self.gateway_successors:
                        continue
                    scope = self.ix.parent[nid]
                    for f in marked(nid):
                        if ev.kind == "intermediate":
                            if ev.trigger == "compensation":
                                produced, links, sk = comp_chain(key(scope), out)
                                add("eventCatch", nid, [f], produced, _Delta(add_chains=links, drain_log=sk))
                            else:
                                add("eventCatch", nid, [f], out)
                        elif ev.trigger == "none":
                            add("processEnd", nid, [f], [])
                        elif ev.trigger == "terminate":
                            if scope is None:
                                add("processEnd", nid, list(m.elements()), [], _Delta(status="terminated"))
                            else:
                                add("processEnd", nid, self.tokens_of(m, scope, with_self=False), [],
                                    _Delta(clear_inside=(scope,)))
                        elif ev.trigger == "error":
                            caught = first_catcher(scope, ev.error)
                            if caught is None:
                                add("processEnd", nid, list(m.elements()), [], _Delta(status="failed"))
                            else:
                                interrupt(*caught, by_error=True)
                        elif ev.trigger == "cancel":
                            cancel(scope)
                        else:
                            produced, links, sk = comp_chain(key(scope), ())
                            add("processEnd", nid, [f], produced, _Delta(add_chains=links, drain_log=sk))
                elif node.activity is not None:
                    a = node.activity
                    if a.is_compensation:
                        if m[nid] and nid in chains:
                            add("compensationRun", nid, [nid], chains[nid][0], _Delta(run_handler=nid))
                        continue
                    if self.atomic(nid):
                        for f in marked(nid):
                            add("completeTask", nid, [f], out, _Delta(completed=nid))
                        continue
                    if not m[nid] and not self.tokens_of(m, nid, with_self=False):
                        for f in marked(nid):
                            n = self.count(nid)
                            body = [nid] * n if a.kind == "task" else [nid] + self.inner_starts(nid) * n
                            add("activityStart", nid, [f], body,
                                _Delta(set_acts={nid: (0, n)}, reset_log=None if a.kind == "task" else nid))
                    if not m[nid]:
                        continue
                    counter, remaining = acts[nid]
                    if a.kind == "task":
                        if remaining > 1:
                            add("completeTask", nid, [nid], [], _Delta(set_acts={nid: (counter, remaining - 1)}))
                        else:
                            for again in loop_choices(nid):
                                if again:
                                    add("completeTask", nid, [nid], [nid], _Delta(set_acts={nid: (counter + 1, remaining)}))
                                else:
                                    add("completeTask", nid, [nid], out, finish_delta(nid))
                    elif not self.tokens_of(m, nid, with_self=False):
                        kind = "transactionOutcome" if a.kind == "transaction" else "completeTask"
                        for again in loop_choices(nid):
                            if again:
                                body = [nid] + self.inner_starts(nid) * self.count(nid)
                                add(kind, nid, [nid], body, _Delta(set_acts={nid: (counter + 1, remaining)}))
                            else:
                                add(kind, nid, [nid], out, finish_delta(nid))
                    for b in self.ix.boundaries.get(nid, ()):
                        if self.ix.nodes[b].event.trigger in ("timer", "message"):
                            interrupt(nid, b, by_error=False)
                    if nid not in chains:
                        # errors raised on the running activity, one per distinct first catcher
                        seen: set[str] = set()
                        host = nid
                        stop = False
                        while host is not None and not stop:
                            for b in self.ix.boundaries.get(host, ()):
                                e = self.ix.nodes[b].event
                                if e.trigger != "error" or e.error in seen:
                                    continue
                                interrupt(host, b, by_error=True)
                                if e.error is None:
                                    stop = True
                                    break
                                seen.add(e.error)
                            host = self.ix.parent[host]
                        if a.kind == "transaction" and any(
                            self.ix.nodes[b].event.trigger == "cancel" for b in self.ix.boundaries.get(nid, ())
                        ):
                            cancel(nid)
                else:
                    faults.extend(f"{nid}: {r}" for r in self.gateway_moves(nid, m, chains, add, marked))
            except _Faulted as exc:
                faults.append(f"{nid}: {exc}")

        seen_ids: set[str] = set()
        results: list[tuple[Transition | None, str, State]] = []
        for t, delta in moves:
            if t.id in seen_ids:
                continue
            seen_ids.add(t.id)
            results.append((t, t.id, self.apply(s, m, acts, logs, chains, fired, t, delta)))
        results.sort(key=lambda r: r[0].sort_key)
        for reason in faults:
            results.append((None, f"fault:{reason}", State(s.marking, s.activities, s.logs, s.chains, s.fired, "failed")))
        yield from results

    def gateway_moves(self, nid, m, chains, add, marked) -> list[str]:
        """Add gateway moves; returns fault reasons for choices with no enabled branch."""
        g = self.ix.nodes[nid].gateway
        inc = self.ix.incoming[nid]
        outs = self.ix.outgoing[nid]
        have = marked(nid)
        if not have:
            return []
        kind = "gatewayJoin" if len(inc) > 1 else "gatewaySplit"
        if g.kind == "parallel":
            if len(have) == len(inc):
                add(kind, nid, inc, outs)
            return []
        if g.kind == "exclusiveEvent":
            for f in have:
                for succ in self.ix.targets(nid):
                    add("eventCatch", succ, [f], self.ix.outgoing[succ],
                        _Delta(completed=succ) if self.ix.nodes[succ].activity is not None else None)
            return []
        if len(inc) > 1 and g.kind == "inclusive":
            if not self.or_join_ready(nid, m, chains):
                return []
            firings = [have]
        elif len(inc) > 1 and g.kind == "complex":
            try:
                ok = eval_expression(g.activation_expression, {}, {f: m[f] for f in inc})
            except EvaluationError as exc:
                raise _Faulted(str(exc)) from None
            if ok is not True:
                return []
            firings = [[f for f in inc for _ in range(m[f])]]
        else:
            firings = [[f] for f in have]
        options, stuck = self.branch_options(g, outs)
        for consumed in firings:
            for chosen in options:
                add(kind, nid, consumed, chosen)
        return ["no enabled branch"] if stuck else []

    def branch_options(self, g, outs) -> tuple[list[list[str]], bool]:
        """Possible output selections, and whether no branch at all may be enabled."""
        regular = [f for f in outs if f != g.default_flow]
        options: list[list[str]] = []
        if g.kind == "exclusiveData":
            for f in regular:
                vals = self.truth(self.ix.flows[f].condition)
                if True in vals:
                    options.append([f])
                if False not in vals:
                    return options, False
            if g.default_flow is not None:
                return options + [[g.default_flow]], False
            return options, True
        empty = False
        for combo in product(*(self.truth(self.ix.flows[f].condition) for f in regular)):
            chosen = [f for f, on in zip(regular, combo) if on]
            if chosen:
                options.append(chosen)
            else:
                empty = True
        if empty and g.kind == "inclusive" and g.default_flow is not None:
            return options + [[g.default_flow]], False
        return options, empty

    def or_join_ready(self, join: str, m: Counter[str], chains) -> bool:
        """Forward search: can any token outside the join's inputs still reach an empty input?"""
        inc = set(self.ix.incoming[join])
        empty = {f for f in inc if not m[f]}
        scope = self.ix.parent[join]
        frontier = []
        for pos in m:
            if pos in inc:
                continue
            rep = self.level(pos, scope)
            if rep is not None:
                frontier.append(rep)
        seen = set(frontier)
        while frontier:
            pos = frontier.pop()
            if pos in empty:
                return False
            if pos == join:
                continue
            if pos in self.ix.flows:
                nxt = [self.ix.flows[pos].target]
            else:
                nxt = list(self.ix.outgoing[pos]) + list(self.ix.boundaries.get(pos, ()))
                if pos in chains:
                    nxt += list(chains[pos][0])
            for p in nxt:
                if p not in seen:
                    seen.add(p)
                    frontier.append(p)
        return True

    def apply(self, s, m, acts, logs, chains, fired, t: Transition, delta: _Delta) -> State:
        m2 = Counter(m)
        m2.subtract(t.consumed)
        m2.update(t.produced)
        acts2 = dict(acts)
        logs2 = dict(logs)
        chains2 = dict(chains)
        fired2 = set(fired)
        for x in delta.clear_inside:
            inner = self.within.get(x, set())
            for n in inner:
                acts2.pop(n, None)
                logs2.pop(n, None)
                chains2.pop(n, None)
        for x in delta.drop:
            acts2.pop(x, None)
            logs2.pop(x, None)
        if delta.reset_log is not None:
            logs2.pop(delta.reset_log, None)
        if delta.drain_log is not None:
            logs2.pop(delta.drain_log, None)
        acts2.update(delta.set_acts)
        chains2.update(delta.add_chains)
        if delta.completed is not None and delta.completed in self.ix.handler_of:
            a = delta.completed
            p = self.ix.parent[a]
            k = self.d.id if p is None else p
            logs2[k] = tuple(x for x in logs2.get(k, ()) if x != a) + (a,)
        if delta.run_handler is not None:
            chains2.pop(delta.run_handler, None)
        if delta.fired is not None:
            fired2.add(delta.fired)
        status = delta.status or "running"
        marking = tuple(sorted((p, n) for p, n in m2.items() if n > 0))
        if status == "running" and not marking and self.triggered_starts <= fired2:
            status = "completed"
        return State(
            marking,
            tuple(sorted((a, c, r) for a, (c, r) in acts2.items())),
            tuple(sorted((k, v) for k, v in logs2.items() if v)),
            tuple(sorted((h, nxt, child) for h, (nxt, child) in chains2.items())),
            tuple(sorted(fired2)),
            status,
        )


# --------------------------------------------------------------------------
# public operations

def explore(
    definition: ProcessDefinition,
    max_states: int = DEFAULT_MAX_STATES,
    data: Mapping[str, Value] | None = None,
) -> StateGraph:
    """Breadth-first state graph; states are numbered in discovery order.

    With ``data`` the conditions are evaluated against that fixed case data
    instead of being explored as free booleans.
    """
    if max_states < 1:
        raise AnalyzerError("max_states must be at least 1")
    errors = [d for d in validate(definition) if d.severity == "error"]
    if errors:
        raise AnalyzerError(f"definition is invalid: {errors[0]}")
    for node, _pool, _parent in definition.walk_nodes():
        if node.activity is not None and "adHoc" in node.activity.markers:
            raise AnalyzerError(f"ad-hoc sub-process {node.id!r} cannot be explored")
    sem = _Semantics(definition, data)
    graph = StateGraph(definition.id, node_ids=tuple(sorted(sem.ix.nodes)))
    first = sem.initial()
    numbering = {first: 0}
    graph.states.append(first)
    graph.expanded.append(False)
    queue = deque([0])
    while queue:
        i = queue.popleft()
        pending: list[Edge] = []
        overflow = False
        for t, label, succ in sem.successors(graph.states[i]):
            j = numbering.get(succ)
            if j is None:
                if len(graph.states) >= max_states:
                    overflow = True
                    break
                j = len(graph.states)
                numbering[succ] = j
                graph.states.append(succ)
                graph.expanded.append(False)
                queue.append(j)
            pending.append(Edge(i, j, t, label))
        graph.edges.extend(pending)
        graph._out.setdefault(i, []).extend(pending)
        if overflow:
            graph.bounded = True
            break
        graph.expanded[i] = True
    return graph


def _touched_nodes(graph: StateGraph, ix: NodeIndex) -> set[str]:
    touched: set[str] = set()
    for state in graph.states:
        for pos, _n in state.marking:
            if pos in ix.nodes:
                touched.add(pos)
            else:
                flow = ix.flows[pos]
                touched.add(flow.source)
                touched.add(flow.target)
    for edge in graph.edges:
        if edge.transition is not None:
            touched.add(edge.transition.subject)
    return touched


def check_soundness(graph: StateGraph, definition: ProcessDefinition) -> SoundnessReport:
    ix = node_index(definition)
    deadlocks = tuple((i, tuple(graph.states[i].positions)) for i in graph.deadlocks())
    if graph.bounded:
        return SoundnessReport(UNKNOWN, UNKNOWN, deadlocks, UNKNOWN, True)
    n = len(graph.states)
    preds: dict[int, list[int]] = {}
    for e in graph.edges:
        preds.setdefault(e.target, []).append(e.source)
    can_finish = {i for i in range(n) if graph.states[i].is_final}
    stack = list(can_finish)
    while stack:
        j = stack.pop()
        for i in preds.get(j, ()):
            if i not in can_finish:
                can_finish.add(i)
                stack.append(i)
    option = len(can_finish) == n
    proper = not any("improper" in graph.flags(i) for i in range(n))
    unreachable = tuple(sorted(set(ix.nodes) - _touched_nodes(graph, ix)))
    return SoundnessReport(option, proper, deadlocks, unreachable, False)


def conformance(trace: Trace, graph: StateGraph) -> bool:
    """True iff the trace's transitions label a path from the initial state."""
    if trace.definition_id is not None and trace.definition_id != graph.definition_id:
        raise AnalyzerError(
            f"trace belongs to {trace.definition_id!r}, graph to {graph.definition_id!r}"
        )
    known = set(graph.node_ids)
    for record in trace.records:
        if record.transition.subject not in known:
            raise AnalyzerError(f"trace mentions unknown node {record.transition.subject!r}")
    current = {graph.initial}
    for record in trace.records:
        want = record.transition.id
        current = {e.target for s in current for e in graph.out_edges(s) if e.label == want}
        if not current:
            return False
    return True


def conformance_states(trace: Trace, graph: StateGraph) -> set[int]:
    """States the graph can be in after replaying ``trace`` (empty if it is not a path)."""
    current = {graph.initial}
    for record in trace.records:
        current = {e.target for s in current for e in graph.out_edges(s) if e.label == record.transition.id}
    return current
