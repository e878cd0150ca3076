"""Additional hand-built definitions exercising loops, timers, nesting and termination."""

from __future__ import annotations

from builders import boundary, chain, end, flow, gw, mid, process, start, sub, task, var

from bpdflow.model import Lane, Pool


def loop_task():
    return process("loop_task", [
        start("s"), task("poll", "external", markers=("loop",), loop="again", loop_max=3), end("e"),
    ], chain("f", "s", "poll", "e"), [var("again", True)])


def multi_instance():
    return process("multi_instance", [
        start("s"), task("review", markers=("multiInstance",), multi_instance_count="n"),
        sub("batch", [start("bs"), task("item"), end("be")], chain("b", "bs", "item", "be"),
            markers=("multiInstance",), multi_instance_count="k"),
        end("e"),
    ], chain("f", "s", "review", "batch", "e"), [var("n", 3), var("k", 2)])


def timer_boundary():
    return process("timer_boundary", [
        start("s"), task("wait", "external"), boundary("late", "wait", "timer", delay=5),
        mid("pause", "timer", delay=2), task("escalate"), end("e1"), end("e2"),
    ], [
        flow("f1", "s", "pause"), flow("f2", "pause", "wait"), flow("f3", "wait", "e1"),
        flow("f4", "late", "escalate"), flow("f5", "escalate", "e2"),
    ])


def nested_error():
    inner = sub("inner", [start("is"), task("job", "external"), end("ie")], chain("i", "is", "job", "ie"))
    outer = sub("outer", [start("os"), inner, end("oe")], chain("o", "os", "inner", "oe"))
    return process("nested_error", [
        start("s"), outer, boundary("caught", "outer", "error"), task("recover"), end("e1"), end("e2"),
    ], [
        flow("f1", "s", "outer"), flow("f2", "outer", "e1"), flow("f3", "caught", "recover"),
        flow("f4", "recover", "e2"),
    ])


def inner_terminate():
    body = [start("bs"), gw("fork", "parallel"), task("slow", "external"), task("quick"),
            end("stop", "terminate"), end("be")]
    body_flows = [
        flow("b1", "bs", "fork"), flow("b2", "fork", "slow"), flow("b3", "fork", "quick"),
        flow("b4", "quick", "stop"), flow("b5", "slow", "be"),
    ]
    return process("inner_terminate", [start("s"), sub("scope", body, body_flows), task("after"), end("e")],
                   chain("f", "s", "scope", "after", "e"))


def message_start():
    other = Pool("client", "", (Lane("client_lane", "", (start("c_s"), mid("send", "message"), end("c_e"))),))
    d = process("message_start", [
        start("order", "message", message="order"), task("ship"), end("done"),
    ], chain("f", "order", "ship", "done"), extra_pools=[other])
    from dataclasses import replace
    from bpdflow.model import MessageFlow
    return replace(
        d,
        sequence_flows=d.sequence_flows + (flow("c1", "c_s", "send"), flow("c2", "send", "c_e")),
        message_flows=(MessageFlow("m1", "send", "order"),),
    )


def error_end_in_loop():
    body = [start("bs"), gw("x", "exclusiveData", default="b3"), end("boom", "error", error="bad"), end("be")]
    body_flows = [flow("b1", "bs", "x"), flow("b2", "x", "boom", "fail"), flow("b3", "x", "be", default=True)]
    return process("error_end_in_loop", [
        start("s"), sub("attempt", body, body_flows, markers=("loop",), loop="retry", loop_max=4),
        boundary("bad", "attempt", "error", error="bad"), end("e1"), end("e2"),
    ], [flow("f1", "s", "attempt"), flow("f2", "attempt", "e1"), flow("f3", "bad", "e2")],
        [var("fail", False), var("retry", True)])


def top_compensation():
    return process("top_compensation", [
        start("s"), task("pay"), task("refund", markers=("compensation",)),
        task("ship", "external"), gw("ok", "exclusiveData", default="f5"),
        end("undo", "compensation"), end("e"),
    ], [
        flow("f1", "s", "pay"), flow("f2", "pay", "ship"), flow("f3", "ship", "ok"),
        flow("f4", "ok", "undo", "failed"), flow("f5", "ok", "e", default=True),
    ], [var("failed", False)], associations=[("pay", "refund")])


def or_join_in_scope():
    body = [start("bs"), gw("split", "inclusive"), task("a", "external"), task("b"), gw("join", "inclusive"), end("be")]
    body_flows = [
        flow("b1", "bs", "split"), flow("b2", "split", "a", "x"), flow("b3", "split", "b", "y"),
        flow("b4", "a", "join"), flow("b5", "b", "join"), flow("b6", "join", "be"),
    ]
    return process("or_join_in_scope", [start("s"), sub("scope", body, body_flows), end("e")],
                   chain("f", "s", "scope", "e"), [var("x", True), var("y", True)])


ALL = [loop_task, multi_instance, timer_boundary, nested_error, inner_terminate, message_start,
       error_end_in_loop, top_compensation, or_join_in_scope]
