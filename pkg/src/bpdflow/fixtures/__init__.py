"""Built-in fixture corpus: one diagram per routing pattern plus scenario fixtures.

Each fixture ``<name>.bpd`` ships with a canonical event script
``<name>.jsonl``; ``msg-b.jsonl`` is an extra script for ``xor-event``.
"""

from __future__ import annotations

from importlib import resources

from bpdflow.document import parse_definition
from bpdflow.events import ScriptEntry, parse_script
from bpdflow.model import ProcessDefinition

PATTERNS: dict[str, str] = {
    "xor-data": "exclusive data-based decision: one branch by condition",
    "xor-event": "event-based decision: the first event to arrive picks the branch",
    "xor-merge": "exclusive merge: every arriving token passes on",
    "or-split": "inclusive decision: every branch whose condition holds",
    "or-merge": "synchronizing merge: waits for branches that can still deliver",
    "complex-split": "complex decision: every branch whose condition holds, no default",
    "complex-merge": "complex merge: fires when its activation expression holds",
    "and-fork": "parallel fork: a token on every outgoing flow",
    "and-join": "parallel join: waits for every incoming flow",
}
SCENARIOS: dict[str, str] = {
    "exception": "error boundary event interrupting a sub-process",
    "transaction": "cancelled transaction compensating completed children",
    "compensation": "compensation throw inside a sub-process",
}
ANALYSIS: dict[str, str] = {
    "diamond": "start forking into two tasks joined in parallel (7 reachable states)",
    "bad-join": "inclusive split, exclusive merge and parallel join that deadlocks",
}
FIXTURES: dict[str, str] = {**PATTERNS, **SCENARIOS, **ANALYSIS}
EXTRA_SCRIPTS = ("msg-b",)


def _read(filename: str) -> str:
    return resources.files(__name__).joinpath(filename).read_text(encoding="utf-8")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(name)
    return _read(f"{name}.bpd")


def load_fixture(name: str) -> ProcessDefinition:
    return parse_definition(fixture_text(name))


def script_text(name: str) -> str:
    if name not in FIXTURES and name not in EXTRA_SCRIPTS:
        raise KeyError(name)
    return _read(f"{name}.jsonl")


def load_script(name: str) -> list[ScriptEntry]:
    return parse_script(script_text(name))
