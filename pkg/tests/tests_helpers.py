"""Shared invalid definitions."""

from __future__ import annotations

from dataclasses import replace

from builders import chain, end, flow, process, start, task

from bpdflow.model import Lane, Pool, ProcessDefinition


def cross_pool_definition() -> ProcessDefinition:
    other = Pool("other", "", (Lane("other_lane", "", (start("o_s"), end("o_e"))),))
    d = process("p", [start("s"), task("t"), end("e")], chain("f", "s", "t", "e"), extra_pools=[other])
    return replace(d, sequence_flows=d.sequence_flows + (flow("o1", "o_s", "o_e"), flow("x", "t", "o_e")))
