from __future__ import annotations

import json
import time
from pathlib import Path

import pytest
import extra_models
from builders import chain, end, flow, gw, process, start, sub, task

from bpdflow.analyzer import AnalyzerError, check_soundness, conformance, conformance_states, explore
from bpdflow.engine import run
from bpdflow.fixtures import FIXTURES, load_fixture, load_script
from bpdflow.trace import Trace

GOLDENS = Path(__file__).parent / "goldens"


def markings(graph) -> set[frozenset[str]]:
    return {frozenset(s.positions) for s in graph.states}


def test_diamond_has_seven_states():
    graph = explore(load_fixture("diamond"))
    assert len(graph.states) == 7
    assert markings(graph) == {
        frozenset({"start"}), frozenset({"f1", "f2"}), frozenset({"f3", "f2"}), frozenset({"f1", "f4"}),
        frozenset({"f3", "f4"}), frozenset({"f5"}), frozenset(),
    }
    assert graph.deadlocks() == []


def test_diamond_is_sound():
    d = load_fixture("diamond")
    report = check_soundness(explore(d), d)
    assert report.option_to_complete is True
    assert report.proper_completion is True
    assert report.deadlocks == ()
    assert report.unreachable_nodes == ()
    assert report.sound


def test_explicit_split_gateway_adds_a_state():
    d = process("p", [start("s"), gw("split", "parallel"), task("A"), task("B"), gw("join", "parallel"), end("e")], [
        flow("f0", "s", "split"), flow("f1", "split", "A"), flow("f2", "split", "B"),
        flow("f3", "A", "join"), flow("f4", "B", "join"), flow("f5", "join", "e"),
    ])
    assert len(explore(d).states) == 8


def test_start_to_end():
    # The start token sits on the start node until it fires, as in the diamond.
    graph = explore(process("p", [start("s"), end("e")], chain("f", "s", "e")))
    assert [s.positions for s in graph.states] == [["s"], ["f1"], []]
    assert graph.states[-1].status == "completed"
    assert "final" in graph.flags(2)


def test_state_numbering_is_breadth_first_discovery_order():
    graph = explore(load_fixture("diamond"))
    assert graph.initial == 0
    assert graph.states[0].positions == ["start"]
    depth = {0: 0}
    for e in graph.edges:
        depth.setdefault(e.target, depth[e.source] + 1)
    assert [depth[i] for i in range(len(graph.states))] == sorted(depth[i] for i in range(len(graph.states)))


def test_bad_join_is_flagged():
    d = load_fixture("bad-join")
    graph = explore(d)
    report = check_soundness(graph, d)
    assert report.deadlocks
    assert not report.sound
    for state, marking in report.deadlocks:
        assert "deadlock" in graph.flags(state)
        assert list(marking) == graph.states[state].positions


def test_xor_merge_passes_both_tokens_through():
    d = load_fixture("xor-merge")
    report = check_soundness(explore(d), d)
    assert report.proper_completion is False
    assert report.option_to_complete is True


def test_every_other_fixture_is_sound():
    for name in FIXTURES:
        if name in ("bad-join", "xor-merge"):
            continue
        d = load_fixture(name)
        assert check_soundness(explore(d), d).sound, name


def test_bounded_run_reports_unknown():
    d = load_fixture("or-split")
    graph = explore(d, max_states=3)
    assert graph.bounded
    assert len(graph.states) == 3
    report = check_soundness(graph, d)
    assert report.bounded
    assert report.option_to_complete == "unknown"
    assert report.proper_completion == "unknown"
    assert report.unreachable_nodes == "unknown"
    assert not report.sound


def test_unexpanded_states_are_not_deadlocks():
    graph = explore(load_fixture("and-join"), max_states=2)
    assert graph.deadlocks() == []


def test_unreachable_node_is_reported():
    d = process("p", [start("s"), gw("x", "exclusiveData", default="f3"), task("never"), end("e")], [
        flow("f1", "s", "x"), flow("f2", "x", "never", "false"), flow("f3", "x", "e", default=True),
        flow("f4", "never", "e"),
    ])
    report = check_soundness(explore(d), d)
    # Constant conditions still count as free booleans.
    assert report.unreachable_nodes == ()

    d = process("p", [start("s"), end("e"), task("island"), end("e2")], chain("f", "s", "e") + [flow("g", "island", "e2")])
    report = check_soundness(explore(d), d)
    assert report.unreachable_nodes == ("e2", "island")


def test_report_json_keys():
    d = load_fixture("diamond")
    text = check_soundness(explore(d), d).to_json()
    assert list(json.loads(text)) == ["optionToComplete", "properCompletion", "deadlocks", "unreachableNodes", "bounded"]
    assert text.endswith("}\n")


def test_exploration_is_deterministic():
    for name in FIXTURES:
        a = explore(load_fixture(name))
        b = explore(load_fixture(name))
        assert a.states == b.states
        assert a.edges == b.edges


def test_explore_is_fast():
    for name in FIXTURES:
        t0 = time.perf_counter()
        explore(load_fixture(name))
        assert time.perf_counter() - t0 < 5.0, name


def test_concrete_data_gives_a_subgraph():
    for name, data in [("xor-data", {"amount": 250}), ("xor-data", {"amount": 5}), ("or-split", None),
                       ("complex-split", None), ("complex-merge", None)]:
        d = load_fixture(name)
        free = explore(d)
        concrete = explore(d, data=data if data is not None else d.initial_data)
        free_states = set(free.states)
        assert set(concrete.states) <= free_states
        free_edges = {(free.states[e.source], e.label, free.states[e.target]) for e in free.edges}
        for e in concrete.edges:
            assert (concrete.states[e.source], e.label, concrete.states[e.target]) in free_edges
        assert len(concrete.states) < len(free.states) or name == "complex-merge"


def test_concrete_xor_takes_one_branch():
    d = load_fixture("xor-data")
    for amount in (5, 250):
        seen = {p for s in explore(d, data={"amount": amount}).states for p in s.positions}
        assert len(seen & {"f_auto", "f_manual"}) == 1


def test_invalid_inputs_are_rejected():
    with pytest.raises(AnalyzerError):
        explore(load_fixture("diamond"), max_states=0)
    broken = process("p", [start("s"), end("e")], [flow("f1", "s", "e"), flow("f2", "e", "s")])
    with pytest.raises(AnalyzerError):
        explore(broken)
    adhoc = process("p", [start("s"), sub("h", [task("a")], [], markers=("adHoc",)), end("e")], chain("f", "s", "h", "e"))
    with pytest.raises(AnalyzerError):
        explore(adhoc)


def test_golden_traces_conform():
    for name in FIXTURES:
        d = load_fixture(name)
        trace = Trace.from_jsonl((GOLDENS / f"{name}.jsonl").read_text(), d.id)
        assert conformance(trace, explore(d)), name


def test_deleting_a_record_breaks_conformance():
    d = load_fixture("and-join")
    trace = run(d, None, load_script("and-join"))
    del trace.records[2]
    assert not conformance(trace, explore(d))


def test_empty_trace_conforms():
    d = load_fixture("diamond")
    graph = explore(d)
    assert conformance(Trace(d.id), graph)
    assert conformance_states(Trace(d.id), graph) == {graph.initial}


def test_definition_mismatch_is_an_error():
    trace = run(load_fixture("diamond"))
    with pytest.raises(AnalyzerError):
        conformance(trace, explore(load_fixture("and-fork")))
    stray = Trace.from_jsonl(
        '{"step":0,"kind":"fireStart","subject":"ghost","consumed":[],"produced":["f1"],"clock":0,"dataHash":"0"}\n'
    )
    with pytest.raises(AnalyzerError, match="unknown node"):
        conformance(stray, explore(load_fixture("diamond")))


def test_engine_deadlock_lands_on_a_flagged_state():
    d = load_fixture("bad-join")
    trace = run(d, None, load_script("bad-join"))
    assert trace.verdict == "deadlock"
    graph = explore(d)
    ends = conformance_states(trace, graph)
    assert ends and all("deadlock" in graph.flags(i) for i in ends)


def test_fault_edges_lead_to_failed_states():
    graph = explore(extra_models.multi_instance(), data={"n": 0, "k": 2})
    faults = [e for e in graph.edges if e.transition is None]
    assert faults
    for e in faults:
        assert e.label.startswith("fault:")
        assert graph.states[e.target].status == "failed"
        assert graph.out_edges(e.target) == []
